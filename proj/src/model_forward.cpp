#include <cmath>
#include <cstring>

#include "htru/kernels.hpp"
#include "htru/model.hpp"

namespace htru {

namespace k = kernels;

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Sinusoidal positional encoding row for position p.
void pos_encoding_row(int p, int d, double* out) {
  for (int i = 0; i < d; i += 2) {
    const double freq = std::exp(-std::log(10000.0) * i / d);
    out[i] = std::sin(p * freq);
    if (i + 1 < d) out[i + 1] = std::cos(p * freq);
  }
}

constexpr double kMaskedScore = -1e30;
constexpr double kLnEps = 1e-5;

}  // namespace

Batch make_batch(const Corpus& corpus, const std::vector<size_t>& indices,
                 int max_len) {
  Batch batch;
  batch.B = static_cast<int>(indices.size());
  int wmax = 1;
  for (size_t idx : indices)
    wmax = std::max(wmax, corpus.samples[idx].image.width);
  batch.W = wmax;
  batch.images.assign(static_cast<size_t>(batch.B) * 64 * wmax, 0.0);
  for (int b = 0; b < batch.B; ++b) {
    const Sample& s = corpus.samples[indices[static_cast<size_t>(b)]];
    if (s.image.height != 64) throw Error("make_batch: image height != 64");
    batch.widths.push_back(s.image.width);
    batch.writer_ids.push_back(s.writer_id);
    batch.sample_ids.push_back(s.id);
    const auto slots = corpus.alphabet.encode(s.transcription, max_len);
    batch.rec_targets.insert(batch.rec_targets.end(), slots.begin(), slots.end());
    double* dst = batch.images.data() + static_cast<size_t>(b) * 64 * wmax;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < s.image.width; ++x)
        dst[(size_t)y * wmax + x] = (255.0 - s.image.at(y, x)) / 255.0;
    // padding columns stay 0.0 == background
  }
  return batch;
}

std::set<std::string> tap_layer_names(const ModelConfig& cfg,
                                      const LayerSelector& sel) {
  std::set<std::string> names;
  for (const MaskInfo& info : maskable_layers(cfg)) {
    if (sel.contains(info.group)) names.insert(info.layer);
  }
  return names;
}

namespace {

struct TapSink {
  const std::set<std::string>* layers = nullptr;
  std::vector<TapMap>* out = nullptr;
  bool want(const std::string& name) const {
    return layers != nullptr && layers->count(name) != 0;
  }
};

// Copy the valid-extent slice of a [rows x cols] batch matrix for sample b.
void tap_rows(TapSink& sink, const std::string& name, int b, int rows,
              int cols, const double* data) {
  Tensor t({rows, cols});
  std::memcpy(t.ptr(), data, sizeof(double) * t.size());
  (*sink.out)[static_cast<size_t>(b)][name] = std::move(t);
}

}  // namespace

void forward_batch(const ModelState& model, const Batch& batch,
                   ForwardCache* cache, std::vector<double>& writer_logits,
                   std::vector<double>& rec_logits,
                   const std::set<std::string>* tap_layers,
                   std::vector<TapMap>* taps) {
  const ModelConfig& cfg = model.cfg;
  const int B = batch.B;
  const int d = cfg.d_model;
  const int n_conv = static_cast<int>(cfg.cnn_channels.size());
  if (B <= 0) throw Error("forward_batch: empty batch");
  if (static_cast<int>(batch.images.size()) != B * 64 * batch.W)
    throw Error("forward_batch: image buffer size mismatch (height must be 64)");

  TapSink sink{tap_layers, taps};
  if (taps != nullptr) taps->assign(static_cast<size_t>(B), TapMap{});

  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c.B = B;
  c.W = batch.W;
  c.widths = batch.widths;
  c.conv_c.assign(1, 1);
  c.conv_h.assign(1, 64);
  c.conv_w.assign(1, batch.W);
  c.conv_acts.assign(static_cast<size_t>(n_conv) + 1, {});
  c.conv_acts[0] = batch.images;

  // ---- CNN stack: 3x3 stride-2 conv + bias + ReLU + channel mask.
  for (int l = 0; l < n_conv; ++l) {
    const int C_in = c.conv_c[l], H_in = c.conv_h[l], W_in = c.conv_w[l];
    const int C_out = cfg.cnn_channels[l];
    const int Ho = ceil_div(H_in, 2), Wo = ceil_div(W_in, 2);
    c.conv_c.push_back(C_out);
    c.conv_h.push_back(Ho);
    c.conv_w.push_back(Wo);
    auto& out = c.conv_acts[static_cast<size_t>(l) + 1];
    out.assign(static_cast<size_t>(B) * C_out * Ho * Wo, 0.0);
    const std::string name = "cnn.conv" + std::to_string(l);
    const double* w = model.param(name + ".w");
    const double* bias = model.param(name + ".b");
    const std::vector<double>& mask = model.mask(name);
    std::vector<double> col(static_cast<size_t>(C_in) * 9 * Ho * Wo);
    for (int b = 0; b < B; ++b) {
      const double* x = c.conv_acts[static_cast<size_t>(l)].data() +
                        static_cast<size_t>(b) * C_in * H_in * W_in;
      double* y = out.data() + static_cast<size_t>(b) * C_out * Ho * Wo;
      k::im2col_s2(x, C_in, H_in, W_in, Ho, Wo, col.data());
      k::matmul_nn(C_out, C_in * 9, Ho * Wo, w, col.data(), y);
      k::add_bias_per_row(C_out, Ho * Wo, y, bias);
      k::relu_inplace(static_cast<size_t>(C_out) * Ho * Wo, y);
      k::mask_rows(C_out, Ho * Wo, y, mask.data());
    }
    if (sink.want(name)) {
      for (int b = 0; b < B; ++b) {
        const int wv = ceil_div(batch.widths[static_cast<size_t>(b)],
                                1 << (l + 1));
        Tensor t({C_out, Ho, wv});
        const double* y = out.data() + static_cast<size_t>(b) * C_out * Ho * Wo;
        for (int ch = 0; ch < C_out; ++ch)
          for (int r = 0; r < Ho; ++r)
            for (int x2 = 0; x2 < wv; ++x2)
              t.data[((size_t)ch * Ho + r) * wv + x2] =
                  y[((size_t)ch * Ho + r) * Wo + x2];
        (*sink.out)[static_cast<size_t>(b)][name] = std::move(t);
      }
    }
  }

  // ---- Column tokens: mean over the remaining height rows.
  const int Cl = cfg.cnn_channels[static_cast<size_t>(n_conv) - 1];
  const int Hp = c.conv_h.back();
  const int Tcols = c.conv_w.back();
  const int down = cfg.downsample();
  c.Hp = Hp;
  c.Tcols = Tcols;
  c.valid_tokens.clear();
  for (int b = 0; b < B; ++b)
    c.valid_tokens.push_back(ceil_div(batch.widths[static_cast<size_t>(b)], down));

  c.pooled.assign(static_cast<size_t>(B) * Tcols * Cl, 0.0);
  const auto& last = c.conv_acts.back();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const double* a = last.data() + static_cast<size_t>(b) * Cl * Hp * Tcols;
    double* p = c.pooled.data() + static_cast<size_t>(b) * Tcols * Cl;
    for (int t = 0; t < Tcols; ++t) {
      for (int ch = 0; ch < Cl; ++ch) {
        double acc = 0.0;
        for (int r = 0; r < Hp; ++r) acc += a[((size_t)ch * Hp + r) * Tcols + t];
        p[(size_t)t * Cl + ch] = acc / Hp;
      }
    }
  }

  // ---- Embedding projection (masked linear), then [CLS] + zero padding.
  std::vector<double> embed(static_cast<size_t>(B) * Tcols * d);
  k::matmul_nt(B * Tcols, Cl, d, c.pooled.data(), model.param("embed.proj.w"),
               embed.data());
  k::add_bias_rows(B * Tcols, d, embed.data(), model.param("embed.proj.b"));
  k::mask_cols(B * Tcols, d, embed.data(), model.mask("embed.proj").data());
  if (sink.want("embed.proj")) {
    for (int b = 0; b < B; ++b)
      tap_rows(sink, "embed.proj", b, c.valid_tokens[static_cast<size_t>(b)], d,
               embed.data() + static_cast<size_t>(b) * Tcols * d);
  }

  const int L = 1 + std::max(Tcols, cfg.max_len);
  c.L = L;
  c.xs.assign(static_cast<size_t>(cfg.n_blocks) + 1, {});
  c.xs[0].assign(static_cast<size_t>(B) * L * d, 0.0);
  {
    std::vector<double> pe(static_cast<size_t>(L) * d);
    for (int p = 0; p < L; ++p) pos_encoding_row(p, d, pe.data() + (size_t)p * d);
    const double* cls = model.param("embed.cls");
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
      double* x = c.xs[0].data() + static_cast<size_t>(b) * L * d;
      const int vb = c.valid_tokens[static_cast<size_t>(b)];
      for (int i = 0; i < d; ++i) x[i] = cls[i] + pe[i];
      for (int t = 0; t < L - 1; ++t) {
        double* row = x + (size_t)(1 + t) * d;
        const double* perow = pe.data() + (size_t)(1 + t) * d;
        if (t < vb) {
          const double* e = embed.data() + ((size_t)b * Tcols + t) * d;
          for (int i = 0; i < d; ++i) row[i] = e[i] + perow[i];
        } else {
          for (int i = 0; i < d; ++i) row[i] = perow[i];
        }
      }
    }
  }

  // ---- Transformer blocks (pre-LN).
  const int nh = cfg.n_heads;
  const int hd = d / nh;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  const int rows = B * L;
  c.blocks.assign(static_cast<size_t>(cfg.n_blocks), BlockCache{});
  for (int blk = 0; blk < cfg.n_blocks; ++blk) {
    BlockCache& bc = c.blocks[static_cast<size_t>(blk)];
    const std::string p = "block" + std::to_string(blk) + ".";
    const auto& x_in = c.xs[static_cast<size_t>(blk)];

    bc.ln1_mean.assign(static_cast<size_t>(rows), 0.0);
    bc.ln1_rstd.assign(static_cast<size_t>(rows), 0.0);
    bc.h1.assign(static_cast<size_t>(rows) * d, 0.0);
    k::layernorm_fwd(rows, d, x_in.data(), model.param(p + "ln1.g"),
                     model.param(p + "ln1.b"), bc.h1.data(), bc.ln1_mean.data(),
                     bc.ln1_rstd.data(), kLnEps);

    bc.q.assign(static_cast<size_t>(rows) * d, 0.0);
    bc.k.assign(static_cast<size_t>(rows) * d, 0.0);
    bc.v.assign(static_cast<size_t>(rows) * d, 0.0);
    k::matmul_nt(rows, d, d, bc.h1.data(), model.param(p + "attn.wq"), bc.q.data());
    k::add_bias_rows(rows, d, bc.q.data(), model.param(p + "attn.bq"));
    k::matmul_nt(rows, d, d, bc.h1.data(), model.param(p + "attn.wk"), bc.k.data());
    k::add_bias_rows(rows, d, bc.k.data(), model.param(p + "attn.bk"));
    k::matmul_nt(rows, d, d, bc.h1.data(), model.param(p + "attn.wv"), bc.v.data());
    k::add_bias_rows(rows, d, bc.v.data(), model.param(p + "attn.bv"));

    bc.probs.assign(static_cast<size_t>(B) * nh * L * L, 0.0);
    bc.ctx.assign(static_cast<size_t>(rows) * d, 0.0);
#pragma omp parallel for schedule(static)
    for (int bh = 0; bh < B * nh; ++bh) {
      const int b = bh / nh;
      const int h = bh % nh;
      const int ho = h * hd;
      const int vb = c.valid_tokens[static_cast<size_t>(b)];
      const double* qb = bc.q.data() + static_cast<size_t>(b) * L * d;
      const double* kb = bc.k.data() + static_cast<size_t>(b) * L * d;
      const double* vbp = bc.v.data() + static_cast<size_t>(b) * L * d;
      double* probs = bc.probs.data() + static_cast<size_t>(bh) * L * L;
      for (int i = 0; i < L; ++i) {
        double* srow = probs + (size_t)i * L;
        for (int j = 0; j < L; ++j) {
          // keys: [CLS] plus content tokens; batch-pad tokens are hidden
          const bool key_valid = j == 0 || (j - 1) < vb;
          if (!key_valid) {
            srow[j] = kMaskedScore;
            continue;
          }
          double acc = 0.0;
          const double* qi = qb + (size_t)i * d + ho;
          const double* kj = kb + (size_t)j * d + ho;
          for (int t = 0; t < hd; ++t) acc += qi[t] * kj[t];
          srow[j] = acc * inv_sqrt_hd;
        }
      }
      k::serial::softmax_rows(L, L, probs);
      double* ctxb = bc.ctx.data() + static_cast<size_t>(b) * L * d;
      for (int i = 0; i < L; ++i) {
        double* out = ctxb + (size_t)i * d + ho;
        const double* prow = probs + (size_t)i * L;
        for (int t = 0; t < hd; ++t) out[t] = 0.0;
        for (int j = 0; j < L; ++j) {
          const double pj = prow[j];
          if (pj == 0.0) continue;
          const double* vj = vbp + (size_t)j * d + ho;
          for (int t = 0; t < hd; ++t) out[t] += pj * vj[t];
        }
      }
    }

    std::vector<double> attn(static_cast<size_t>(rows) * d);
    k::matmul_nt(rows, d, d, bc.ctx.data(), model.param(p + "attn.wo"), attn.data());
    k::add_bias_rows(rows, d, attn.data(), model.param(p + "attn.bo"));
    k::mask_cols(rows, d, attn.data(),
                 model.mask("block" + std::to_string(blk) + ".attn_out").data());
    if (sink.want("block" + std::to_string(blk) + ".attn_out")) {
      for (int b = 0; b < B; ++b)
        tap_rows(sink, "block" + std::to_string(blk) + ".attn_out", b,
                 1 + c.valid_tokens[static_cast<size_t>(b)], d,
                 attn.data() + static_cast<size_t>(b) * L * d);
    }

    bc.x_mid = x_in;
    k::add_inplace(static_cast<size_t>(rows) * d, attn.data(), bc.x_mid.data());

    bc.ln2_mean.assign(static_cast<size_t>(rows), 0.0);
    bc.ln2_rstd.assign(static_cast<size_t>(rows), 0.0);
    bc.h2.assign(static_cast<size_t>(rows) * d, 0.0);
    k::layernorm_fwd(rows, d, bc.x_mid.data(), model.param(p + "ln2.g"),
                     model.param(p + "ln2.b"), bc.h2.data(), bc.ln2_mean.data(),
                     bc.ln2_rstd.data(), kLnEps);

    bc.f1.assign(static_cast<size_t>(rows) * cfg.ff_dim, 0.0);
    k::matmul_nt(rows, d, cfg.ff_dim, bc.h2.data(), model.param(p + "ff.w1"),
                 bc.f1.data());
    k::add_bias_rows(rows, cfg.ff_dim, bc.f1.data(), model.param(p + "ff.b1"));
    k::relu_inplace(static_cast<size_t>(rows) * cfg.ff_dim, bc.f1.data());
    k::mask_cols(rows, cfg.ff_dim, bc.f1.data(),
                 model.mask("block" + std::to_string(blk) + ".ff1").data());
    if (sink.want("block" + std::to_string(blk) + ".ff1")) {
      for (int b = 0; b < B; ++b)
        tap_rows(sink, "block" + std::to_string(blk) + ".ff1", b,
                 1 + c.valid_tokens[static_cast<size_t>(b)], cfg.ff_dim,
                 bc.f1.data() + static_cast<size_t>(b) * L * cfg.ff_dim);
    }

    std::vector<double> f2(static_cast<size_t>(rows) * d);
    k::matmul_nt(rows, cfg.ff_dim, d, bc.f1.data(), model.param(p + "ff.w2"),
                 f2.data());
    k::add_bias_rows(rows, d, f2.data(), model.param(p + "ff.b2"));
    k::mask_cols(rows, d, f2.data(),
                 model.mask("block" + std::to_string(blk) + ".ff2").data());
    if (sink.want("block" + std::to_string(blk) + ".ff2")) {
      for (int b = 0; b < B; ++b)
        tap_rows(sink, "block" + std::to_string(blk) + ".ff2", b,
                 1 + c.valid_tokens[static_cast<size_t>(b)], d,
                 f2.data() + static_cast<size_t>(b) * L * d);
    }

    c.xs[static_cast<size_t>(blk) + 1] = bc.x_mid;
    k::add_inplace(static_cast<size_t>(rows) * d, f2.data(),
                   c.xs[static_cast<size_t>(blk) + 1].data());
  }

  // ---- Final LayerNorm + heads.
  c.fin_mean.assign(static_cast<size_t>(rows), 0.0);
  c.fin_rstd.assign(static_cast<size_t>(rows), 0.0);
  c.y.assign(static_cast<size_t>(rows) * d, 0.0);
  k::layernorm_fwd(rows, d, c.xs[static_cast<size_t>(cfg.n_blocks)].data(),
                   model.param("final_ln.g"), model.param("final_ln.b"),
                   c.y.data(), c.fin_mean.data(), c.fin_rstd.data(), kLnEps);

  rec_logits.assign(static_cast<size_t>(B) * cfg.max_len * cfg.alphabet_size, 0.0);
  for (int b = 0; b < B; ++b) {
    // recognition slots are the first max_len non-CLS positions (contiguous rows)
    const double* yrec = c.y.data() + (static_cast<size_t>(b) * L + 1) * d;
    double* out = rec_logits.data() +
                  static_cast<size_t>(b) * cfg.max_len * cfg.alphabet_size;
    k::matmul_nt(cfg.max_len, d, cfg.alphabet_size, yrec, model.param("head.rec.w"), out);
    k::add_bias_rows(cfg.max_len, cfg.alphabet_size, out, model.param("head.rec.b"));
    k::mask_cols(cfg.max_len, cfg.alphabet_size, out, model.mask("head.rec").data());
  }
  if (sink.want("head.rec")) {
    for (int b = 0; b < B; ++b)
      tap_rows(sink, "head.rec", b, cfg.max_len, cfg.alphabet_size,
               rec_logits.data() +
                   static_cast<size_t>(b) * cfg.max_len * cfg.alphabet_size);
  }

  if (cfg.enable_writer_head) {
    writer_logits.assign(static_cast<size_t>(B) * cfg.n_writers, 0.0);
    const double* hw = model.param("head.writer.w");
    const double* bw = model.param("head.writer.b");
    const std::vector<double>& mw = model.mask("head.writer");
    for (int b = 0; b < B; ++b) {
      const double* ycls = c.y.data() + static_cast<size_t>(b) * L * d;
      double* out = writer_logits.data() + static_cast<size_t>(b) * cfg.n_writers;
      for (int o = 0; o < cfg.n_writers; ++o) {
        double acc = bw[o];
        const double* wrow = hw + (size_t)o * d;
        for (int i = 0; i < d; ++i) acc += wrow[i] * ycls[i];
        out[o] = acc * mw[static_cast<size_t>(o)];
      }
    }
    if (sink.want("head.writer")) {
      for (int b = 0; b < B; ++b)
        tap_rows(sink, "head.writer", b, 1, cfg.n_writers,
                 writer_logits.data() + static_cast<size_t>(b) * cfg.n_writers);
    }
  } else {
    writer_logits.clear();
  }
}

std::vector<ForwardOutput> forward(const ModelState& model, const Batch& batch,
                                   const LayerSelector* tap_sel) {
  std::vector<double> writer_logits, rec_logits;
  std::set<std::string> names;
  std::vector<TapMap> taps;
  const bool want_taps = tap_sel != nullptr;
  if (want_taps) names = tap_layer_names(model.cfg, *tap_sel);
  forward_batch(model, batch, nullptr, writer_logits, rec_logits,
                want_taps ? &names : nullptr, want_taps ? &taps : nullptr);

  std::vector<ForwardOutput> outs(static_cast<size_t>(batch.B));
  const int nw = model.cfg.n_writers;
  const int rl = model.cfg.max_len * model.cfg.alphabet_size;
  for (int b = 0; b < batch.B; ++b) {
    ForwardOutput& o = outs[static_cast<size_t>(b)];
    if (model.cfg.enable_writer_head) {
      o.writer_logits.assign(writer_logits.begin() + (size_t)b * nw,
                             writer_logits.begin() + (size_t)(b + 1) * nw);
    }
    o.recognition_logits.assign(rec_logits.begin() + (size_t)b * rl,
                                rec_logits.begin() + (size_t)(b + 1) * rl);
    if (want_taps) o.activations = std::move(taps[static_cast<size_t>(b)]);
  }
  return outs;
}

int argmax_index(const double* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::string decode_greedy(const double* rec_logits, int max_len,
                          const Alphabet& alphabet) {
  std::string out;
  for (int s = 0; s < max_len; ++s) {
    const int idx = argmax_index(rec_logits + (size_t)s * Alphabet::kNumClasses,
                                 Alphabet::kNumClasses);
    if (idx == Alphabet::kPadIndex) continue;  // pad slots emit nothing
    out.push_back(alphabet.symbol_at(idx));
  }
  return out;
}

}  // namespace htru
