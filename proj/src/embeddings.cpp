#include "acrm/embeddings.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace acrm {

namespace {

Mat seeded_row(Index dim, std::uint64_t seed, Index row) {
  Rng rng = seeded_rng(seed, "embedding-init", static_cast<std::uint64_t>(row));
  return uniform_matrix(1, dim, -0.1, 0.1, rng);
}

}  // namespace

Mat EmbeddingTable::lookup(const std::vector<int>& tokens) const {
  Mat out(static_cast<Index>(tokens.size()), dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int row = tokens[i];
    if (row < 0 || row > oov_row())
      throw std::invalid_argument(cat("embedding lookup: token index ", row,
                                      " outside table of ", oov_row() + 1, " rows"));
    out.row(static_cast<Index>(i)) = table.row(row);
  }
  return out;
}

EmbeddingTable seeded_embeddings(const std::vector<std::string>& vocabulary, Index dim,
                                 std::uint64_t seed) {
  if (vocabulary.empty()) throw DataError("embeddings: empty vocabulary");
  EmbeddingTable t;
  t.vocab = vocabulary;
  t.table.resize(static_cast<Index>(vocabulary.size()) + 1, dim);
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    t.index.emplace(vocabulary[i], static_cast<int>(i));
    t.table.row(static_cast<Index>(i)) = seeded_row(dim, seed, static_cast<Index>(i));
  }
  t.table.row(t.oov_row()) = seeded_row(dim, seed, t.oov_row());
  return t;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::vector<std::string>& vocabulary, Index dim,
                               std::uint64_t seed) {
  EmbeddingTable t = seeded_embeddings(vocabulary, dim, seed);
  std::ifstream in(path);
  if (!in) throw DataError(cat("embeddings: cannot open ", path.string()));
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word))
      throw DataError(cat("embeddings: ", path.string(), ":", line_no, ": no word"));
    std::vector<Real> values;
    Real v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof())
      throw DataError(
          cat("embeddings: ", path.string(), ":", line_no, ": malformed number"));
    if (static_cast<Index>(values.size()) != dim)
      throw DataError(cat("embeddings: ", path.string(), ":", line_no, ": expected ",
                          dim, " values, got ", values.size()));
    auto it = t.index.find(word);
    if (it == t.index.end()) continue;  // word outside the vocabulary
    for (Index j = 0; j < dim; ++j) t.table(it->second, j) = values[static_cast<std::size_t>(j)];
  }
  return t;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError(cat("embeddings: cannot write ", path.string()));
  out << std::setprecision(17);
  for (std::size_t i = 0; i < table.vocab.size(); ++i) {
    out << table.vocab[i];
    for (Index j = 0; j < table.dim(); ++j)
      out << ' ' << table.table(static_cast<Index>(i), j);
    out << '\n';
  }
  if (!out) throw DataError(cat("embeddings: write failed for ", path.string()));
}

Mat encode_query(const std::vector<int>& tokens, const EmbeddingTable& table,
                 const BiLstmParams& p, Real dropout_rate, bool training, Rng* rng) {
  if (tokens.empty()) throw std::invalid_argument("encode_query: empty token list");
  return encode_sequence(table.lookup(tokens), p, dropout_rate, training, rng);
}

}  // namespace acrm
