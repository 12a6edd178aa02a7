#pragma once

#include <string>
#include <vector>

#include "htru/common.hpp"

namespace htru {

struct EditOps {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int total() const { return substitutions + insertions + deletions; }
};

// Minimal unit-cost edit distance between ref and hyp. Among minimal
// alignments the backtrace prefers the diagonal, so substitutions are
// maximized over insertion+deletion pairs.
EditOps edit_distance(const std::string& ref, const std::string& hyp);
EditOps edit_distance(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp);

// Corpus-level rates: sum of edit ops over sum of reference lengths, x100.
// May exceed 100 when hypotheses are much longer than references.
double cer(const std::vector<std::string>& refs,
           const std::vector<std::string>& hyps);
// Word level; each sample is a single word, so this is the exact-mismatch
// fraction x100.
double wer(const std::vector<std::string>& refs,
           const std::vector<std::string>& hyps);

double writer_accuracy(const std::vector<int>& pred_ids,
                       const std::vector<int>& true_ids);

}  // namespace htru
