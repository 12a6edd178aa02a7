#include <cmath>
#include <cstring>

#include "htru/kernels.hpp"
#include "htru/model.hpp"

namespace htru {

namespace k = kernels;

void backward_batch(const ModelState& model, const Batch& batch,
                    const ForwardCache& c,
                    const std::vector<double>& d_writer_logits,
                    const std::vector<double>& d_rec_logits,
                    std::vector<double>& grads,
                    std::vector<double>* capture_dconv_last) {
  const ModelConfig& cfg = model.cfg;
  const int B = c.B, L = c.L, d = cfg.d_model;
  const int rows = B * L;
  const int n_conv = static_cast<int>(cfg.cnn_channels.size());
  if (grads.size() != model.params.size())
    grads.assign(model.params.size(), 0.0);

  auto g = [&](const std::string& name) {
    return grads.data() + model.reg.info(name).offset;
  };

  std::vector<double> dy(static_cast<size_t>(rows) * d, 0.0);

  // ---- recognition head
  if (!d_rec_logits.empty()) {
    const int A = cfg.alphabet_size;
    std::vector<double> dz(static_cast<size_t>(cfg.max_len) * A);
    for (int b = 0; b < B; ++b) {
      std::memcpy(dz.data(),
                  d_rec_logits.data() + static_cast<size_t>(b) * cfg.max_len * A,
                  sizeof(double) * dz.size());
      k::mask_cols(cfg.max_len, A, dz.data(), model.mask("head.rec").data());
      const double* yrec = c.y.data() + (static_cast<size_t>(b) * L + 1) * d;
      k::matmul_tn(A, cfg.max_len, d, dz.data(), yrec, g("head.rec.w"), true);
      k::col_sums_accum(cfg.max_len, A, dz.data(), g("head.rec.b"));
      double* dyrec = dy.data() + (static_cast<size_t>(b) * L + 1) * d;
      k::matmul_nn(cfg.max_len, A, d, dz.data(), model.param("head.rec.w"),
                   dyrec, true);
    }
  }

  // ---- writer head (reads the [CLS] position)
  if (cfg.enable_writer_head && !d_writer_logits.empty()) {
    const int nw = cfg.n_writers;
    const std::vector<double>& mw = model.mask("head.writer");
    const double* hw = model.param("head.writer.w");
    double* dhw = g("head.writer.w");
    double* dbw = g("head.writer.b");
    std::vector<double> dz(static_cast<size_t>(nw));
    for (int b = 0; b < B; ++b) {
      const double* src = d_writer_logits.data() + static_cast<size_t>(b) * nw;
      for (int o = 0; o < nw; ++o) dz[static_cast<size_t>(o)] = src[o] * mw[static_cast<size_t>(o)];
      const double* ycls = c.y.data() + static_cast<size_t>(b) * L * d;
      double* dycls = dy.data() + static_cast<size_t>(b) * L * d;
      for (int o = 0; o < nw; ++o) {
        const double dzo = dz[static_cast<size_t>(o)];
        if (dzo == 0.0) continue;
        double* wrow = dhw + (size_t)o * d;
        const double* w = hw + (size_t)o * d;
        for (int i = 0; i < d; ++i) {
          wrow[i] += dzo * ycls[i];
          dycls[i] += dzo * w[i];
        }
        dbw[o] += dzo;
      }
    }
  }

  // ---- final LayerNorm
  std::vector<double> dx(static_cast<size_t>(rows) * d, 0.0);
  k::layernorm_bwd(rows, d, c.xs[static_cast<size_t>(cfg.n_blocks)].data(),
                   model.param("final_ln.g"), c.fin_mean.data(),
                   c.fin_rstd.data(), dy.data(), dx.data(), g("final_ln.g"),
                   g("final_ln.b"), false);

  // ---- transformer blocks in reverse
  const int nh = cfg.n_heads;
  const int hd = d / nh;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> buf1(static_cast<size_t>(rows) * cfg.ff_dim);
  std::vector<double> dh(static_cast<size_t>(rows) * d);
  std::vector<double> dqkv(static_cast<size_t>(rows) * d * 3);
  for (int blk = cfg.n_blocks - 1; blk >= 0; --blk) {
    const BlockCache& bc = c.blocks[static_cast<size_t>(blk)];
    const std::string p = "block" + std::to_string(blk) + ".";

    // dx currently holds the gradient at x_out = x_mid + f2.
    // FF leg: f2 = mask2(f1 W2^T + b2), f1 = mask1(relu(h2 W1^T + b1)).
    std::vector<double> dz2(dx);
    k::mask_cols(rows, d, dz2.data(),
                 model.mask("block" + std::to_string(blk) + ".ff2").data());
    k::matmul_tn(d, rows, cfg.ff_dim, dz2.data(), bc.f1.data(), g(p + "ff.w2"), true);
    k::col_sums_accum(rows, d, dz2.data(), g(p + "ff.b2"));
    double* df1 = buf1.data();
    k::matmul_nn(rows, d, cfg.ff_dim, dz2.data(), model.param(p + "ff.w2"), df1);
    k::relu_bwd_from_output(static_cast<size_t>(rows) * cfg.ff_dim, bc.f1.data(), df1, df1);
    k::matmul_tn(cfg.ff_dim, rows, d, df1, bc.h2.data(), g(p + "ff.w1"), true);
    k::col_sums_accum(rows, cfg.ff_dim, df1, g(p + "ff.b1"));
    k::matmul_nn(rows, cfg.ff_dim, d, df1, model.param(p + "ff.w1"), dh.data());
    // residual: gradient at x_mid = dx (skip) + LN2 backward of dh
    k::layernorm_bwd(rows, d, bc.x_mid.data(), model.param(p + "ln2.g"),
                     bc.ln2_mean.data(), bc.ln2_rstd.data(), dh.data(),
                     dx.data(), g(p + "ln2.g"), g(p + "ln2.b"), true);

    // Attention leg: x_mid = x_in + mask(ctx Wo^T + bo).
    std::vector<double> dzo(dx);
    k::mask_cols(rows, d, dzo.data(), model.mask("block" + std::to_string(blk) + ".attn_out").data());
    k::matmul_tn(d, rows, d, dzo.data(), bc.ctx.data(), g(p + "attn.wo"), true);
    k::col_sums_accum(rows, d, dzo.data(), g(p + "attn.bo"));
    std::vector<double> dctx(static_cast<size_t>(rows) * d);
    k::matmul_nn(rows, d, d, dzo.data(), model.param(p + "attn.wo"), dctx.data());

    double* dq = dqkv.data();
    double* dk = dqkv.data() + static_cast<size_t>(rows) * d;
    double* dv = dqkv.data() + 2 * static_cast<size_t>(rows) * d;
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
#pragma omp parallel for schedule(static)
    for (int bh = 0; bh < B * nh; ++bh) {
      const int b = bh / nh;
      const int h = bh % nh;
      const int ho = h * hd;
      const double* probs = bc.probs.data() + static_cast<size_t>(bh) * L * L;
      const double* qb = bc.q.data() + static_cast<size_t>(b) * L * d;
      const double* kb = bc.k.data() + static_cast<size_t>(b) * L * d;
      const double* vb = bc.v.data() + static_cast<size_t>(b) * L * d;
      const double* dctxb = dctx.data() + static_cast<size_t>(b) * L * d;
      double* dqb = dq + static_cast<size_t>(b) * L * d;
      double* dkb = dk + static_cast<size_t>(b) * L * d;
      double* dvb = dv + static_cast<size_t>(b) * L * d;
      std::vector<double> ds(static_cast<size_t>(L) * L);
      for (int i = 0; i < L; ++i) {
        const double* prow = probs + (size_t)i * L;
        const double* dci = dctxb + (size_t)i * d + ho;
        double* dsrow = ds.data() + (size_t)i * L;
        double dot = 0.0;
        for (int j = 0; j < L; ++j) {
          double dp = 0.0;
          if (prow[j] != 0.0) {
            const double* vj = vb + (size_t)j * d + ho;
            for (int t = 0; t < hd; ++t) {
              dp += dci[t] * vj[t];
              dvb[(size_t)j * d + ho + t] += prow[j] * dci[t];
            }
          }
          dsrow[j] = dp;
          dot += prow[j] * dp;
        }
        for (int j = 0; j < L; ++j) dsrow[j] = prow[j] * (dsrow[j] - dot);
      }
      for (int i = 0; i < L; ++i) {
        const double* dsrow = ds.data() + (size_t)i * L;
        double* dqi = dqb + (size_t)i * d + ho;
        const double* qi = qb + (size_t)i * d + ho;
        for (int j = 0; j < L; ++j) {
          const double s = dsrow[j] * inv_sqrt_hd;
          if (s == 0.0) continue;
          const double* kj = kb + (size_t)j * d + ho;
          double* dkj = dkb + (size_t)j * d + ho;
          for (int t = 0; t < hd; ++t) {
            dqi[t] += s * kj[t];
            dkj[t] += s * qi[t];
          }
        }
      }
    }

    k::matmul_tn(d, rows, d, dq, bc.h1.data(), g(p + "attn.wq"), true);
    k::col_sums_accum(rows, d, dq, g(p + "attn.bq"));
    k::matmul_tn(d, rows, d, dk, bc.h1.data(), g(p + "attn.wk"), true);
    k::col_sums_accum(rows, d, dk, g(p + "attn.bk"));
    k::matmul_tn(d, rows, d, dv, bc.h1.data(), g(p + "attn.wv"), true);
    k::col_sums_accum(rows, d, dv, g(p + "attn.bv"));
    k::matmul_nn(rows, d, d, dq, model.param(p + "attn.wq"), dh.data());
    k::matmul_nn(rows, d, d, dk, model.param(p + "attn.wk"), dh.data(), true);
    k::matmul_nn(rows, d, d, dv, model.param(p + "attn.wv"), dh.data(), true);
    k::layernorm_bwd(rows, d, c.xs[static_cast<size_t>(blk)].data(),
                     model.param(p + "ln1.g"), bc.ln1_mean.data(),
                     bc.ln1_rstd.data(), dh.data(), dx.data(), g(p + "ln1.g"),
                     g(p + "ln1.b"), true);
  }

  // ---- tokens -> embedding projection
  const int Tcols = c.Tcols;
  const int Cl = cfg.cnn_channels[static_cast<size_t>(n_conv) - 1];
  {
    double* dcls = g("embed.cls");
    for (int b = 0; b < B; ++b) {
      const double* row = dx.data() + static_cast<size_t>(b) * L * d;
      for (int i = 0; i < d; ++i) dcls[i] += row[i];
    }
  }
  std::vector<double> de(static_cast<size_t>(B) * Tcols * d, 0.0);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const int vb = c.valid_tokens[static_cast<size_t>(b)];
    for (int t = 0; t < vb; ++t) {
      std::memcpy(de.data() + ((size_t)b * Tcols + t) * d,
                  dx.data() + ((size_t)b * L + 1 + t) * d, sizeof(double) * d);
    }
  }
  k::mask_cols(B * Tcols, d, de.data(), model.mask("embed.proj").data());
  k::matmul_tn(d, B * Tcols, Cl, de.data(), c.pooled.data(), g("embed.proj.w"), true);
  k::col_sums_accum(B * Tcols, d, de.data(), g("embed.proj.b"));
  std::vector<double> dpooled(static_cast<size_t>(B) * Tcols * Cl);
  k::matmul_nn(B * Tcols, d, Cl, de.data(), model.param("embed.proj.w"),
               dpooled.data());

  // ---- un-pool the height mean
  const int Hp = c.Hp;
  std::vector<double> dconv(static_cast<size_t>(B) * Cl * Hp * Tcols);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    double* da = dconv.data() + static_cast<size_t>(b) * Cl * Hp * Tcols;
    const double* dp = dpooled.data() + static_cast<size_t>(b) * Tcols * Cl;
    for (int ch = 0; ch < Cl; ++ch)
      for (int r = 0; r < Hp; ++r)
        for (int t = 0; t < Tcols; ++t)
          da[((size_t)ch * Hp + r) * Tcols + t] = dp[(size_t)t * Cl + ch] / Hp;
  }

  if (capture_dconv_last != nullptr) {
    *capture_dconv_last = std::move(dconv);
    return;
  }

  // ---- CNN stack in reverse
  for (int l = n_conv - 1; l >= 0; --l) {
    const int C_in = c.conv_c[static_cast<size_t>(l)];
    const int H_in = c.conv_h[static_cast<size_t>(l)];
    const int W_in = c.conv_w[static_cast<size_t>(l)];
    const int C_out = c.conv_c[static_cast<size_t>(l) + 1];
    const int Ho = c.conv_h[static_cast<size_t>(l) + 1];
    const int Wo = c.conv_w[static_cast<size_t>(l) + 1];
    const std::string name = "cnn.conv" + std::to_string(l);
    const double* w = model.param(name + ".w");
    double* dw = g(name + ".w");
    double* db = g(name + ".b");
    const auto& act = c.conv_acts[static_cast<size_t>(l) + 1];
    const auto& x_in = c.conv_acts[static_cast<size_t>(l)];
    std::vector<double> dnext;
    if (l > 0) dnext.assign(static_cast<size_t>(B) * C_in * H_in * W_in, 0.0);
    std::vector<double> col(static_cast<size_t>(C_in) * 9 * Ho * Wo);
    std::vector<double> dcol(static_cast<size_t>(C_in) * 9 * Ho * Wo);
    std::vector<double> dz(static_cast<size_t>(C_out) * Ho * Wo);
    for (int b = 0; b < B; ++b) {
      const double* a = act.data() + static_cast<size_t>(b) * C_out * Ho * Wo;
      const double* da = dconv.data() + static_cast<size_t>(b) * C_out * Ho * Wo;
      k::relu_bwd_from_output(dz.size(), a, da, dz.data());
      k::row_sums_accum(C_out, Ho * Wo, dz.data(), db);
      const double* x = x_in.data() + static_cast<size_t>(b) * C_in * H_in * W_in;
      k::im2col_s2(x, C_in, H_in, W_in, Ho, Wo, col.data());
      k::matmul_nt(C_out, Ho * Wo, C_in * 9, dz.data(), col.data(), dw, true);
      if (l > 0) {
        k::matmul_tn(C_in * 9, C_out, Ho * Wo, w, dz.data(), dcol.data());
        k::col2im_s2(dcol.data(), C_in, H_in, W_in, Ho, Wo,
                     dnext.data() + static_cast<size_t>(b) * C_in * H_in * W_in);
      }
    }
    dconv = std::move(dnext);
  }
  (void)batch;
}

GradCamResult gradcam(const ModelState& model, const GrayImage& image,
                      const GradCamTarget& target) {
  const ModelConfig& cfg = model.cfg;
  if (image.height != 64) throw Error("gradcam: image height must be 64");
  if (target.kind == GradCamTarget::Kind::writer_class) {
    if (!cfg.enable_writer_head)
      throw Error("gradcam: writer target on a single-head model");
    if (target.writer_class < 0 || target.writer_class >= cfg.n_writers)
      throw Error("gradcam: writer class out of range");
  } else {
    if (target.slot < 0 || target.slot >= cfg.max_len)
      throw Error("gradcam: recognition slot out of range");
    if (target.char_class < 0 || target.char_class >= cfg.alphabet_size)
      throw Error("gradcam: character class out of range");
  }

  // Single-sample batch; the "transcription" targets are unused here.
  Batch batch;
  batch.B = 1;
  batch.W = image.width;
  batch.widths = {image.width};
  batch.writer_ids = {0};
  batch.rec_targets.assign(static_cast<size_t>(cfg.max_len), Alphabet::kPadIndex);
  batch.sample_ids = {0};
  batch.images.assign(static_cast<size_t>(64) * image.width, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < image.width; ++x)
      batch.images[(size_t)y * image.width + x] = (255.0 - image.at(y, x)) / 255.0;

  ForwardCache cache;
  std::vector<double> writer_logits, rec_logits;
  forward_batch(model, batch, &cache, writer_logits, rec_logits);

  std::vector<double> d_writer, d_rec;
  if (target.kind == GradCamTarget::Kind::writer_class) {
    d_writer.assign(static_cast<size_t>(cfg.n_writers), 0.0);
    d_writer[static_cast<size_t>(target.writer_class)] = 1.0;
  } else {
    d_rec.assign(static_cast<size_t>(cfg.max_len) * cfg.alphabet_size, 0.0);
    d_rec[static_cast<size_t>(target.slot) * cfg.alphabet_size +
          target.char_class] = 1.0;
  }

  std::vector<double> grads;
  std::vector<double> dlast;
  backward_batch(model, batch, cache, d_writer, d_rec, grads, &dlast);

  const int Cl = cfg.cnn_channels.back();
  const int Hc = cache.Hp;
  const int Wc = cache.Tcols;
  const auto& act = cache.conv_acts.back();

  // Channel weights: spatial mean of the gradient, then a ReLU'd
  // gradient-weighted channel sum over the feature grid.
  std::vector<double> alpha(static_cast<size_t>(Cl), 0.0);
  for (int ch = 0; ch < Cl; ++ch) {
    double acc = 0.0;
    for (int i = 0; i < Hc * Wc; ++i) acc += dlast[(size_t)ch * Hc * Wc + i];
    alpha[static_cast<size_t>(ch)] = acc / (Hc * Wc);
  }
  GradCamResult result;
  result.heatmap = Tensor({Hc, Wc});
  for (int i = 0; i < Hc * Wc; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < Cl; ++ch)
      acc += alpha[static_cast<size_t>(ch)] * act[(size_t)ch * Hc * Wc + i];
    result.heatmap.data[static_cast<size_t>(i)] = acc > 0.0 ? acc : 0.0;
  }
  double lo = result.heatmap.data[0], hi = result.heatmap.data[0];
  for (double v : result.heatmap.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (double& v : result.heatmap.data) v = (v - lo) / (hi - lo);
  } else {
    for (double& v : result.heatmap.data) v = 0.0;
  }

  // Bilinear companion at input resolution.
  result.upsampled = Tensor({64, image.width});
  const double sy = static_cast<double>(Hc) / 64.0;
  const double sx = static_cast<double>(Wc) / image.width;
  for (int y = 0; y < 64; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, Hc - 1.0);
    const int y0 = (int)std::floor(fy);
    const int y1 = std::min(y0 + 1, Hc - 1);
    const double wy = fy - y0;
    for (int x = 0; x < image.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, Wc - 1.0);
      const int x0 = (int)std::floor(fx);
      const int x1 = std::min(x0 + 1, Wc - 1);
      const double wx = fx - x0;
      const auto& h = result.heatmap.data;
      result.upsampled.data[(size_t)y * image.width + x] =
          (1 - wy) * ((1 - wx) * h[(size_t)y0 * Wc + x0] + wx * h[(size_t)y0 * Wc + x1]) +
          wy * ((1 - wx) * h[(size_t)y1 * Wc + x0] + wx * h[(size_t)y1 * Wc + x1]);
    }
  }
  return result;
}

}  // namespace htru
