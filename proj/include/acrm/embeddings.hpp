#pragma once

// Word-embedding table with a trailing out-of-vocabulary row. Rows are frozen:
// they never receive gradients and bind to the tape as constants.

#include "acrm/common.hpp"
#include "acrm/lstm.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace acrm {

struct EmbeddingTable {
  std::vector<std::string> vocab;                 // word for rows [0, |V|)
  std::unordered_map<std::string, int> index;     // word -> row
  Mat table;                                      // (|V|+1) x dim; last row is OOV

  Index dim() const { return table.cols(); }
  int oov_row() const { return static_cast<int>(vocab.size()); }

  int row_of(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? oov_row() : it->second;
  }

  // Embedding rows for a token-index sequence, one row per token.
  Mat lookup(const std::vector<int>& tokens) const;
};

// Text format: one entry per line, word then `dim` decimal floats, space
// separated. Vocabulary words absent from the file (and the OOV row) are
// initialized uniform(-0.1, 0.1) from per-row streams of `seed`. Malformed
// lines and dimension mismatches raise DataError with the line number.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::vector<std::string>& vocabulary, Index dim,
                               std::uint64_t seed);

// Builds the table without a file: every row drawn from the seeded init.
EmbeddingTable seeded_embeddings(const std::vector<std::string>& vocabulary, Index dim,
                                 std::uint64_t seed);

// Writes vocabulary rows (not the OOV row) with full round-trip precision.
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

inline Mat encode_video(const Mat& features, const BiLstmParams& p, Real dropout_rate,
                        bool training, Rng* rng = nullptr) {
  return encode_sequence(features, p, dropout_rate, training, rng);
}

Mat encode_query(const std::vector<int>& tokens, const EmbeddingTable& table,
                 const BiLstmParams& p, Real dropout_rate, bool training,
                 Rng* rng = nullptr);

}  // namespace acrm
