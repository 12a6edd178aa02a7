#include "htru/metrics.hpp"

#include <algorithm>

namespace htru {

namespace {

template <typename Seq>
EditOps edit_distance_impl(const Seq& ref, const Seq& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<int> dp(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return dp[(size_t)i * (m + 1) + j]; };
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = at(i - 1, j) + 1;
      const int ins = at(i, j - 1) + 1;
      at(i, j) = std::min({sub, del, ins});
    }
  }
  // Backtrace preferring the diagonal so ins+del pairs collapse into
  // substitutions whenever an equally cheap alignment allows it.
  EditOps ops;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + cost) {
        ops.substitutions += cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

}  // namespace

EditOps edit_distance(const std::string& ref, const std::string& hyp) {
  return edit_distance_impl(ref, hyp);
}

EditOps edit_distance(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp) {
  return edit_distance_impl(ref, hyp);
}

double cer(const std::vector<std::string>& refs,
           const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw Error("cer: refs and hyps lengths differ");
  long long ops = 0, chars = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    ops += edit_distance(refs[i], hyps[i]).total();
    chars += static_cast<long long>(refs[i].size());
  }
  if (chars == 0) throw Error("cer: total reference length is zero");
  return 100.0 * static_cast<double>(ops) / static_cast<double>(chars);
}

double wer(const std::vector<std::string>& refs,
           const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw Error("wer: refs and hyps lengths differ");
  if (refs.empty()) throw Error("wer: empty corpus");
  long long bad = 0;
  for (size_t i = 0; i < refs.size(); ++i) bad += refs[i] != hyps[i] ? 1 : 0;
  return 100.0 * static_cast<double>(bad) / static_cast<double>(refs.size());
}

double writer_accuracy(const std::vector<int>& pred_ids,
                       const std::vector<int>& true_ids) {
  if (pred_ids.size() != true_ids.size())
    throw Error("writer_accuracy: length mismatch");
  if (pred_ids.empty()) throw Error("writer_accuracy: empty input");
  long long hit = 0;
  for (size_t i = 0; i < pred_ids.size(); ++i)
    hit += pred_ids[i] == true_ids[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hit) /
         static_cast<double>(pred_ids.size());
}

}  // namespace htru
