#pragma once

#include <string>

#include "htru/corpus.hpp"

namespace htru {

// On-disk dataset layout:
//   <dir>/index.tsv             header + (sample_id, writer_id, transcription)
//   <dir>/images/<sample_id>.png
//   <dir>/writers.tsv           optional (writer_id, descriptor)
void save_corpus(const std::string& dir, const Corpus& corpus);

struct LoadResult {
  Corpus corpus;
  int dropped_count = 0;  // rows removed by the alphabet/length filter
};

// Loads the layout above. Rows whose transcription contains out-of-alphabet
// characters (or violates the length bounds) are dropped and counted.
// Writer ids are remapped to a contiguous range over the rows that survive
// the alphabet filter, before any partition filter, so partitions of the
// same root share a registry. partition_spec is empty (all rows) or a path
// relative to root listing the sample ids of one partition.
LoadResult load_iam_format(const std::string& root,
                           const std::string& partition_spec, int max_width,
                           int max_transcription_len);

}  // namespace htru
