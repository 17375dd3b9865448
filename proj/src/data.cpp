#include "acrm/data.hpp"

#include "acrm/embeddings.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace acrm {

using nlohmann::json;

std::string LoadStats::summary() const {
  return cat(malformed_lines, " malformed lines, ", skipped_records,
             " skipped records, ", rejected_queries, " rejected queries, ",
             clamped_times, " clamped timestamps");
}

std::vector<std::string> tokenize(const std::string& query) {
  std::vector<std::string> out;
  std::istringstream ss(query);
  std::string piece;
  while (ss >> piece) {
    std::size_t lo = 0, hi = piece.size();
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    while (lo < hi && !alnum(piece[lo])) ++lo;
    while (hi > lo && !alnum(piece[hi - 1])) --hi;
    if (lo == hi) continue;
    std::string word = piece.substr(lo, hi - lo);
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(word));
  }
  if (out.empty()) throw DataError(cat("tokenize: no tokens left in \"", query, "\""));
  return out;
}

int time_to_index(double t_seconds, Index frames, double duration_seconds,
                  LoadStats* stats) {
  if (duration_seconds <= 0)
    throw std::invalid_argument(cat("time_to_index: duration ", duration_seconds));
  if (frames < 1) throw std::invalid_argument(cat("time_to_index: T=", frames));
  if (t_seconds < 0 || t_seconds > duration_seconds) {
    if (stats) stats->clamped_times += 1;
    t_seconds = std::clamp(t_seconds, 0.0, duration_seconds);
  }
  const auto idx = static_cast<long>(
      std::floor(t_seconds / duration_seconds * static_cast<double>(frames)));
  return static_cast<int>(std::clamp<long>(idx, 0, frames - 1));
}

double index_to_start_seconds(int idx, Index frames, double duration) {
  return static_cast<double>(idx) / static_cast<double>(frames) * duration;
}

double index_to_end_seconds(int idx, Index frames, double duration) {
  return static_cast<double>(idx + 1) / static_cast<double>(frames) * duration;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               bool strict, LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError(cat("annotations: cannot open ", path.string()));
  std::vector<AnnotationRecord> out;
  std::string line;
  long line_no = 0;
  LoadStats local;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotationRecord rec;
    try {
      json j = json::parse(line);
      rec.video = j.at("video").get<std::string>();
      rec.duration = j.at("duration").get<double>();
      rec.start = j.at("start").get<double>();
      rec.end = j.at("end").get<double>();
      rec.query = j.at("query").get<std::string>();
    } catch (const json::exception& e) {
      if (strict)
        throw DataError(cat("annotations: ", path.string(), ":", line_no, ": ", e.what()));
      local.malformed_lines += 1;
      continue;
    }
    if (rec.start > rec.end || rec.duration <= 0) {
      local.skipped_records += 1;
      continue;
    }
    out.push_back(std::move(rec));
  }
  if (stats) {
    stats->malformed_lines += local.malformed_lines;
    stats->skipped_records += local.skipped_records;
  }
  return out;
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError(cat("annotations: cannot write ", path.string()));
  for (const AnnotationRecord& r : records) {
    json j;
    j["video"] = r.video;
    j["duration"] = r.duration;
    j["start"] = r.start;
    j["end"] = r.end;
    j["query"] = r.query;
    out << j.dump() << '\n';
  }
}

namespace {

constexpr char kFeatureMagic[8] = {'A', 'C', 'R', 'M', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Mat read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(cat("features: cannot open ", path.string()));
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw DataError(cat("features: ", path.string(), ": bad magic at offset 0"));
  const std::uint32_t version = read_u32(in);
  if (!in || version != kFeatureVersion)
    throw DataError(
        cat("features: ", path.string(), ": unsupported version ", version, " at offset 8"));
  const std::uint32_t frames = read_u32(in);
  const std::uint32_t dim = read_u32(in);
  if (!in || frames == 0 || dim == 0)
    throw DataError(cat("features: ", path.string(), ": empty shape ", frames, "x", dim,
                        " at offset 12"));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> raw(frames, dim);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(sizeof(float) * frames * dim));
  if (!in)
    throw DataError(cat("features: ", path.string(), ": truncated payload at offset ",
                        20 + in.gcount()));
  char extra;
  if (in.read(&extra, 1))
    throw DataError(cat("features: ", path.string(), ": trailing bytes at offset ",
                        20 + static_cast<long>(sizeof(float)) * frames * dim));
  return raw.cast<Real>();
}

void write_feature_file(const std::filesystem::path& path, const Mat& features) {
  if (features.rows() == 0 || features.cols() == 0)
    throw std::invalid_argument(cat("features: refusing to write empty ",
                                    shape_str(features)));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(cat("features: cannot write ", path.string()));
  out.write(kFeatureMagic, 8);
  write_u32(out, kFeatureVersion);
  write_u32(out, static_cast<std::uint32_t>(features.rows()));
  write_u32(out, static_cast<std::uint32_t>(features.cols()));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> raw =
      features.cast<float>();
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(sizeof(float) * raw.size()));
  if (!out) throw DataError(cat("features: write failed for ", path.string()));
}

Mat load_features(const std::filesystem::path& dir, const std::string& video_id) {
  return read_feature_file(dir / (video_id + ".feat"));
}

std::vector<std::string> build_vocabulary(const std::vector<AnnotationRecord>& records) {
  std::vector<std::string> vocab;
  std::unordered_map<std::string, int> seen;
  for (const AnnotationRecord& r : records) {
    std::vector<std::string> words;
    try {
      words = tokenize(r.query);
    } catch (const DataError&) {
      continue;  // rejected again, with a warning, when the split is built
    }
    for (std::string& w : words)
      if (seen.emplace(w, 1).second) vocab.push_back(w);
  }
  return vocab;
}

DatasetSplit build_split(const std::vector<AnnotationRecord>& records,
                         const std::filesystem::path& features_dir,
                         const std::vector<std::string>& vocabulary, LoadStats* stats) {
  DatasetSplit split;
  split.vocabulary = vocabulary;
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < vocabulary.size(); ++i)
    index.emplace(vocabulary[i], static_cast<int>(i));
  const int oov = static_cast<int>(vocabulary.size());
  std::unordered_map<std::string, Mat> feature_cache;
  LoadStats local;
  for (const AnnotationRecord& r : records) {
    Instance inst;
    inst.video_id = r.video;
    inst.raw_query = r.query;
    inst.duration = r.duration;
    inst.gt_start_s = std::clamp(r.start, 0.0, r.duration);
    inst.gt_end_s = std::clamp(r.end, 0.0, r.duration);
    try {
      for (const std::string& w : tokenize(r.query)) {
        auto it = index.find(w);
        inst.tokens.push_back(it == index.end() ? oov : it->second);
      }
    } catch (const DataError&) {
      local.rejected_queries += 1;
      continue;
    }
    auto cached = feature_cache.find(r.video);
    if (cached == feature_cache.end()) {
      try {
        cached = feature_cache.emplace(r.video, load_features(features_dir, r.video)).first;
      } catch (const DataError&) {
        local.skipped_records += 1;
        continue;
      }
    }
    inst.features = cached->second;
    if (split.d_in == 0) split.d_in = inst.features.cols();
    if (inst.features.cols() != split.d_in)
      throw DataError(cat("features: ", r.video, " has dim ", inst.features.cols(),
                          " but the split uses ", split.d_in));
    inst.gt_start_idx = time_to_index(r.start, inst.frames(), r.duration, &local);
    inst.gt_end_idx = std::max(
        inst.gt_start_idx, time_to_index(r.end, inst.frames(), r.duration, &local));
    split.instances.push_back(std::move(inst));
  }
  if (stats) {
    stats->malformed_lines += local.malformed_lines;
    stats->skipped_records += local.skipped_records;
    stats->rejected_queries += local.rejected_queries;
    stats->clamped_times += local.clamped_times;
  }
  return split;
}

// ---- synthetic data ---------------------------------------------------------

namespace {

std::string synth_word(int w) {
  std::ostringstream ss;
  ss << 'w' << std::setw(3) << std::setfill('0') << w;
  return ss.str();
}

Mat unit_direction(Index dim, std::uint64_t seed, int word) {
  Rng rng = seeded_rng(seed, "synth-direction", static_cast<std::uint64_t>(word));
  Mat v = gaussian_matrix(1, dim, 0, 1, rng);
  return v / v.norm();
}

}  // namespace

EmbeddingTable synthetic_embeddings(const SynthConfig& cfg) {
  EmbeddingTable t;
  for (int w = 0; w < cfg.vocab_size; ++w) t.vocab.push_back(synth_word(w));
  t.table.resize(cfg.vocab_size + 1, cfg.embedding_dim);
  for (int w = 0; w <= cfg.vocab_size; ++w) {
    Rng rng = seeded_rng(cfg.seed, "synth-embedding", static_cast<std::uint64_t>(w));
    t.table.row(w) = gaussian_matrix(1, cfg.embedding_dim, 0, 0.4, rng);
  }
  for (std::size_t i = 0; i < t.vocab.size(); ++i)
    t.index.emplace(t.vocab[i], static_cast<int>(i));
  return t;
}

DatasetSplit generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_instances < 1 || cfg.vocab_size < 1 || cfg.t_min < 1 ||
      cfg.t_max < cfg.t_min || cfg.d_in < 1 || cfg.signal < 0 ||
      cfg.moment_min_frac <= 0 || cfg.moment_max_frac > 1 ||
      cfg.moment_max_frac < cfg.moment_min_frac || cfg.query_len_min < 1 ||
      cfg.query_len_max < cfg.query_len_min)
    throw std::invalid_argument("generate_synthetic: invalid config");
  DatasetSplit split;
  split.d_in = cfg.d_in;
  split.vocabulary.reserve(static_cast<std::size_t>(cfg.vocab_size));
  for (int w = 0; w < cfg.vocab_size; ++w) split.vocabulary.push_back(synth_word(w));

  Rng rng = seeded_rng(cfg.seed, "synth-instances");
  std::uniform_int_distribution<int> t_dist(cfg.t_min, cfg.t_max);
  // First half of the vocabulary: content words that can carry signal.
  // Second half: fillers, standing in for function words.
  const int content_words = std::max(1, cfg.vocab_size / 2);
  std::uniform_int_distribution<int> signal_dist(0, content_words - 1);
  std::uniform_int_distribution<int> filler_dist(std::min(content_words, cfg.vocab_size - 1),
                                                 cfg.vocab_size - 1);
  std::uniform_int_distribution<int> qlen_dist(cfg.query_len_min, cfg.query_len_max);

  for (long i = 0; i < cfg.num_instances; ++i) {
    const int frames = t_dist(rng);
    const int len_lo = std::max(1, static_cast<int>(std::ceil(cfg.moment_min_frac * frames)));
    const int len_hi =
        std::max(len_lo, std::min(frames, static_cast<int>(std::floor(
                                              cfg.moment_max_frac * frames))));
    const int len = std::uniform_int_distribution<int>(len_lo, len_hi)(rng);
    const int start = std::uniform_int_distribution<int>(0, frames - len)(rng);
    const int end = start + len - 1;

    const int qlen = qlen_dist(rng);
    const int signal_word = signal_dist(rng);
    const int signal_pos = std::uniform_int_distribution<int>(0, qlen - 1)(rng);
    std::vector<int> tokens(static_cast<std::size_t>(qlen));
    for (int q = 0; q < qlen; ++q)
      tokens[static_cast<std::size_t>(q)] = q == signal_pos ? signal_word : filler_dist(rng);

    Instance inst;
    inst.video_id = cat("synth_", i);
    inst.tokens = tokens;
    std::ostringstream query;
    for (int q = 0; q < qlen; ++q)
      query << (q ? " " : "") << synth_word(tokens[static_cast<std::size_t>(q)]);
    inst.raw_query = query.str();
    inst.features = gaussian_matrix(frames, cfg.d_in, 0, cfg.noise_std, rng);
    if (cfg.signal > 0) {
      const Mat dir = unit_direction(cfg.d_in, cfg.seed, signal_word);
      for (int t = start; t <= end; ++t) inst.features.row(t) += cfg.signal * dir;
    }
    inst.duration = frames;
    inst.gt_start_s = start;
    inst.gt_end_s = end + 0.5;  // floors back to `end` under time_to_index
    inst.gt_start_idx = start;
    inst.gt_end_idx = end;
    split.instances.push_back(std::move(inst));
  }
  return split;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg,
                             long eval_count) {
  if (eval_count < 0 || eval_count >= cfg.num_instances)
    throw std::invalid_argument(cat("synth: eval count ", eval_count, " out of ",
                                    cfg.num_instances, " instances"));
  DatasetSplit all = generate_synthetic(cfg);
  std::filesystem::create_directories(dir / "features");
  std::vector<AnnotationRecord> train_records, eval_records;
  const long train_count = cfg.num_instances - eval_count;
  for (long i = 0; i < cfg.num_instances; ++i) {
    const Instance& inst = all.instances[static_cast<std::size_t>(i)];
    write_feature_file(dir / "features" / (inst.video_id + ".feat"), inst.features);
    AnnotationRecord rec{inst.video_id, inst.duration, inst.gt_start_s, inst.gt_end_s,
                         inst.raw_query};
    (i < train_count ? train_records : eval_records).push_back(std::move(rec));
  }
  save_annotations(dir / "train.jsonl", train_records);
  save_annotations(dir / "eval.jsonl", eval_records);
  save_embeddings(dir / "embeddings.txt", synthetic_embeddings(cfg));

  json j;
  j["num_instances"] = cfg.num_instances;
  j["eval_count"] = eval_count;
  j["t_min"] = cfg.t_min;
  j["t_max"] = cfg.t_max;
  j["d_in"] = cfg.d_in;
  j["vocab_size"] = cfg.vocab_size;
  j["moment_min_frac"] = cfg.moment_min_frac;
  j["moment_max_frac"] = cfg.moment_max_frac;
  j["signal"] = cfg.signal;
  j["noise_std"] = cfg.noise_std;
  j["query_len_min"] = cfg.query_len_min;
  j["query_len_max"] = cfg.query_len_max;
  j["embedding_dim"] = cfg.embedding_dim;
  j["seed"] = cfg.seed;
  std::ofstream out(dir / "synth_config.json");
  out << j.dump(2) << '\n';
}

}  // namespace acrm
