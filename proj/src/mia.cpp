#include "htru/mia.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include "htru/kernels.hpp"

namespace htru {

namespace k = kernels;

MIAFeatures extract_features(const ModelState& model, const Corpus& corpus,
                             int batch_size) {
  MIAFeatures f;
  f.dim = model.cfg.max_len * model.cfg.alphabet_size;
  f.rows.reserve(corpus.samples.size() * static_cast<size_t>(f.dim));
  const size_t n = corpus.samples.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + batch_size); ++i)
      idx.push_back(i);
    Batch batch = make_batch(corpus, idx, model.cfg.max_len);
    std::vector<double> writer_logits, rec_logits;
    forward_batch(model, batch, nullptr, writer_logits, rec_logits);
    // Only recognition logits enter the feature; writer logits are excluded.
    f.rows.insert(f.rows.end(), rec_logits.begin(), rec_logits.end());
  }
  return f;
}

namespace {

MIAFeatures take_rows(const MIAFeatures& f, const std::vector<size_t>& rows) {
  MIAFeatures out;
  out.dim = f.dim;
  out.rows.reserve(rows.size() * static_cast<size_t>(f.dim));
  for (size_t r : rows) {
    out.rows.insert(out.rows.end(),
                    f.rows.begin() + static_cast<long>(r) * f.dim,
                    f.rows.begin() + static_cast<long>(r + 1) * f.dim);
  }
  return out;
}

size_t split_point(size_t n) {
  return static_cast<size_t>(std::floor(0.8 * static_cast<double>(n) + 0.5));
}

}  // namespace

MIADatasetBundle build_mia_dataset(const ModelState& htr_model,
                                   const Corpus& retain, const Corpus& test,
                                   const Corpus& forget, uint64_t seed,
                                   int batch_size) {
  if (retain.samples.empty() || test.samples.empty() || forget.samples.empty())
    throw Error("build_mia_dataset: all three sets must be non-empty");
  const MIAFeatures f_retain = extract_features(htr_model, retain, batch_size);
  const MIAFeatures f_test = extract_features(htr_model, test, batch_size);
  const MIAFeatures f_forget = extract_features(htr_model, forget, batch_size);
  if (f_retain.dim != f_test.dim || f_retain.dim != f_forget.dim)
    throw Error("build_mia_dataset: feature dimension drift between sets");

  MIADatasetBundle bundle;
  // Stratified 80/20 per source set, deterministic under the seed.
  auto split = [&](const MIAFeatures& f, uint64_t salt, MIAFeatures& eval_out,
                   int label) {
    std::vector<size_t> order(static_cast<size_t>(f.n()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(seed, salt));
    std::shuffle(order.begin(), order.end(), rng);
    const size_t cut = split_point(order.size());
    const std::vector<size_t> train_rows(order.begin(),
                                         order.begin() + static_cast<long>(cut));
    const std::vector<size_t> eval_rows(order.begin() + static_cast<long>(cut),
                                        order.end());
    MIAFeatures tr = take_rows(f, train_rows);
    bundle.train.dim = f.dim;
    bundle.train.rows.insert(bundle.train.rows.end(), tr.rows.begin(), tr.rows.end());
    bundle.train_labels.insert(bundle.train_labels.end(), train_rows.size(), label);
    eval_out = take_rows(f, eval_rows);
  };
  split(f_retain, 0x11u, bundle.eval_retain, 1);
  split(f_test, 0x22u, bundle.eval_test, 0);
  bundle.query_forget = f_forget;  // retained in its entirety for evaluation
  return bundle;
}

namespace {

struct MLPDims {
  int in, h1, h2;
  size_t w1, b1, w2, b2, w3, b3, total;
};

MLPDims mlp_dims(int in_dim, const std::vector<int>& hidden) {
  if (hidden.size() != 2)
    throw Error("mia: exactly two hidden widths define the three linear layers");
  MLPDims d;
  d.in = in_dim;
  d.h1 = hidden[0];
  d.h2 = hidden[1];
  d.w1 = 0;
  d.b1 = d.w1 + static_cast<size_t>(d.h1) * d.in;
  d.w2 = d.b1 + static_cast<size_t>(d.h1);
  d.b2 = d.w2 + static_cast<size_t>(d.h2) * d.h1;
  d.w3 = d.b2 + static_cast<size_t>(d.h2);
  d.b3 = d.w3 + static_cast<size_t>(d.h2);
  d.total = d.b3 + 1;
  return d;
}

// Forward through the three linear layers; returns binary logits and,
// when caches are given, the hidden activations for the backward pass.
void mlp_forward(const MIAModelState& m, const double* x, int rows,
                 std::vector<double>& z, std::vector<double>* h1_out = nullptr,
                 std::vector<double>* h2_out = nullptr) {
  const MLPDims d = mlp_dims(m.in_dim, m.hidden);
  std::vector<double> h1(static_cast<size_t>(rows) * d.h1);
  k::matmul_nt(rows, d.in, d.h1, x, m.params.data() + d.w1, h1.data());
  k::add_bias_rows(rows, d.h1, h1.data(), m.params.data() + d.b1);
  k::relu_inplace(h1.size(), h1.data());
  std::vector<double> h2(static_cast<size_t>(rows) * d.h2);
  k::matmul_nt(rows, d.h1, d.h2, h1.data(), m.params.data() + d.w2, h2.data());
  k::add_bias_rows(rows, d.h2, h2.data(), m.params.data() + d.b2);
  k::relu_inplace(h2.size(), h2.data());
  z.assign(static_cast<size_t>(rows), 0.0);
  k::matmul_nt(rows, d.h2, 1, h2.data(), m.params.data() + d.w3, z.data());
  k::add_bias_rows(rows, 1, z.data(), m.params.data() + d.b3);
  if (h1_out != nullptr) *h1_out = std::move(h1);
  if (h2_out != nullptr) *h2_out = std::move(h2);
}

std::vector<double> standardize(const MIAModelState& m, const MIAFeatures& f) {
  std::vector<double> x(f.rows.size());
  const int n = f.n();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < f.dim; ++c) {
      const size_t i = static_cast<size_t>(r) * f.dim + c;
      x[i] = (f.rows[i] - m.feat_mean[static_cast<size_t>(c)]) /
             m.feat_std[static_cast<size_t>(c)];
    }
  }
  return x;
}

}  // namespace

MIAModelState train_mia(const MIADatasetBundle& bundle, const MIAConfig& cfg) {
  const int n_all = bundle.train.n();
  if (n_all == 0) throw Error("train_mia: empty training split");
  int n_pos = 0;
  for (int l : bundle.train_labels) n_pos += l;
  const int n_neg = n_all - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error("train_mia: training data has a single class");

  // Optional class balancing by down-sampling the majority class.
  std::vector<size_t> rows;
  if (cfg.balance && n_pos != n_neg) {
    std::vector<size_t> pos, neg;
    for (int i = 0; i < n_all; ++i)
      (bundle.train_labels[static_cast<size_t>(i)] ? pos : neg)
          .push_back(static_cast<size_t>(i));
    auto& major = pos.size() > neg.size() ? pos : neg;
    const size_t keep = std::min(pos.size(), neg.size());
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xBA1ACEu));
    std::shuffle(major.begin(), major.end(), rng);
    major.resize(keep);
    rows.insert(rows.end(), pos.begin(), pos.end());
    rows.insert(rows.end(), neg.begin(), neg.end());
    std::sort(rows.begin(), rows.end());
  } else {
    for (int i = 0; i < n_all; ++i) rows.push_back(static_cast<size_t>(i));
  }

  MIAFeatures train = take_rows(bundle.train, rows);
  std::vector<int> labels;
  for (size_t r : rows) labels.push_back(bundle.train_labels[r]);

  MIAModelState m;
  m.in_dim = bundle.train.dim;
  m.hidden = cfg.hidden;
  const MLPDims d = mlp_dims(m.in_dim, m.hidden);
  m.params.assign(d.total, 0.0);

  // Per-feature standardization fitted on the (balanced) train split only.
  m.feat_mean.assign(static_cast<size_t>(m.in_dim), 0.0);
  m.feat_std.assign(static_cast<size_t>(m.in_dim), 0.0);
  const int n = train.n();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m.in_dim; ++c)
      m.feat_mean[static_cast<size_t>(c)] += train.rows[static_cast<size_t>(r) * m.in_dim + c];
  for (double& v : m.feat_mean) v /= n;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m.in_dim; ++c) {
      const double t = train.rows[static_cast<size_t>(r) * m.in_dim + c] -
                       m.feat_mean[static_cast<size_t>(c)];
      m.feat_std[static_cast<size_t>(c)] += t * t;
    }
  for (double& v : m.feat_std) v = std::max(std::sqrt(v / n), 1e-8);

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x313A90u));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init = [&](size_t off, size_t count, double stddev) {
    for (size_t i = 0; i < count; ++i) m.params[off + i] = normal(rng) * stddev;
  };
  init(d.w1, static_cast<size_t>(d.h1) * d.in, std::sqrt(2.0 / d.in));
  init(d.w2, static_cast<size_t>(d.h2) * d.h1, std::sqrt(2.0 / d.h1));
  init(d.w3, static_cast<size_t>(d.h2), std::sqrt(1.0 / d.h2));

  std::vector<double> x = standardize(m, train);
  std::vector<double> adam_m(d.total, 0.0), adam_v(d.total, 0.0);
  std::vector<double> grads(d.total);
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(static_cast<size_t>(n));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 erng(mix_seed(cfg.seed, 0x5E9A1u, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), erng);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      const int rows_n = static_cast<int>(end - start);
      std::vector<double> xb(static_cast<size_t>(rows_n) * m.in_dim);
      std::vector<int> yb(static_cast<size_t>(rows_n));
      for (int r = 0; r < rows_n; ++r) {
        const size_t src = order[start + static_cast<size_t>(r)];
        std::copy(x.begin() + static_cast<long>(src) * m.in_dim,
                  x.begin() + static_cast<long>(src + 1) * m.in_dim,
                  xb.begin() + static_cast<long>(r) * m.in_dim);
        yb[static_cast<size_t>(r)] = labels[src];
      }
      std::vector<double> z, h1, h2;
      mlp_forward(m, xb.data(), rows_n, z, &h1, &h2);
      // BCE-with-logits gradient: sigmoid(z) - y, averaged over the batch.
      std::vector<double> dz(static_cast<size_t>(rows_n));
      for (int r = 0; r < rows_n; ++r) {
        const double p = 1.0 / (1.0 + std::exp(-z[static_cast<size_t>(r)]));
        dz[static_cast<size_t>(r)] = (p - yb[static_cast<size_t>(r)]) / rows_n;
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      // layer 3
      k::matmul_tn(1, rows_n, d.h2, dz.data(), h2.data(), grads.data() + d.w3, true);
      k::col_sums_accum(rows_n, 1, dz.data(), grads.data() + d.b3);
      std::vector<double> dh2(static_cast<size_t>(rows_n) * d.h2);
      k::matmul_nn(rows_n, 1, d.h2, dz.data(), m.params.data() + d.w3, dh2.data());
      k::relu_bwd_from_output(dh2.size(), h2.data(), dh2.data(), dh2.data());
      // layer 2
      k::matmul_tn(d.h2, rows_n, d.h1, dh2.data(), h1.data(), grads.data() + d.w2, true);
      k::col_sums_accum(rows_n, d.h2, dh2.data(), grads.data() + d.b2);
      std::vector<double> dh1(static_cast<size_t>(rows_n) * d.h1);
      k::matmul_nn(rows_n, d.h2, d.h1, dh2.data(), m.params.data() + d.w2, dh1.data());
      k::relu_bwd_from_output(dh1.size(), h1.data(), dh1.data(), dh1.data());
      // layer 1
      k::matmul_tn(d.h1, rows_n, d.in, dh1.data(), xb.data(), grads.data() + d.w1, true);
      k::col_sums_accum(rows_n, d.h1, dh1.data(), grads.data() + d.b1);

      ++step;
      k::adam_step(d.total, m.params.data(), grads.data(), adam_m.data(),
                   adam_v.data(), step, cfg.learning_rate, 0.9, 0.999, 1e-8);
    }
  }
  return m;
}

std::vector<double> mia_scores(const MIAModelState& mia, const MIAFeatures& f) {
  if (f.dim != mia.in_dim)
    throw Error("mia_scores: feature dimension mismatch");
  if (f.n() == 0) return {};
  const std::vector<double> x = standardize(mia, f);
  std::vector<double> z;
  mlp_forward(mia, x.data(), f.n(), z);
  for (double& v : z) v = 1.0 / (1.0 + std::exp(-v));
  return z;
}

double mia_eval_accuracy(const MIAModelState& mia,
                         const MIADatasetBundle& bundle) {
  const auto member = mia_scores(mia, bundle.eval_retain);
  const auto nonmember = mia_scores(mia, bundle.eval_test);
  if (member.empty() || nonmember.empty())
    throw Error("mia_eval_accuracy: empty eval split");
  double seen = 0.0, unseen = 0.0;
  for (double s : member) seen += s >= 0.5 ? 1.0 : 0.0;
  for (double s : nonmember) unseen += s < 0.5 ? 1.0 : 0.0;
  return 50.0 * (seen / member.size() + unseen / nonmember.size());
}

namespace {

MIARow make_row(const std::vector<double>& scores) {
  MIARow row;
  row.n = static_cast<int>(scores.size());
  int seen = 0;
  for (double s : scores) seen += s >= 0.5 ? 1 : 0;
  // Round seen to 2 decimals half-up, then force the pair to sum to 100.
  row.seen = round_half_up(100.0 * seen / static_cast<double>(row.n), 2);
  row.unseen = 100.0 - row.seen;
  return row;
}

}  // namespace

nlohmann::json MIAReport::to_json() const {
  nlohmann::json j{{"seed", seed}, {"epochs", epochs}};
  auto put = [&](const char* name, const std::optional<MIARow>& row) {
    if (row.has_value())
      j[name] = {{"seen", row->seen}, {"unseen", row->unseen}, {"n", row->n}};
  };
  put("forget", forget);
  put("retain_eval", retain_eval);
  put("test_eval", test_eval);
  return j;
}

MIAReport evaluate_mia(const MIAModelState& mia, const MIADatasetBundle& bundle,
                       const MIAConfig& cfg) {
  MIAReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  auto row_for = [&](const MIAFeatures& f, const char* name) -> std::optional<MIARow> {
    if (f.n() == 0) {
      std::cerr << "evaluate_mia: warning: set " << name
                << " is empty; row omitted\n";
      return std::nullopt;
    }
    return make_row(mia_scores(mia, f));
  };
  report.forget = row_for(bundle.query_forget, "forget");
  report.retain_eval = row_for(bundle.eval_retain, "retain");
  report.test_eval = row_for(bundle.eval_test, "test");
  return report;
}

}  // namespace htru
