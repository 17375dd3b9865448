#pragma once

// Dataset ingestion and synthesis. Formats:
//  - feature file: magic "ACRMFEAT", u32 LE version=1, T, d_in, then T*d_in
//    little-endian 32-bit floats, frame-major;
//  - annotations: UTF-8 JSON lines with keys video, duration, start, end, query.
// The synthetic generator writes exactly these formats so downstream paths are
// exercised identically.

#include "acrm/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace acrm {

struct Instance {
  std::string video_id;
  Mat features;  // T x d_in
  std::vector<int> tokens;
  std::string raw_query;
  double duration = 0;
  double gt_start_s = 0, gt_end_s = 0;
  int gt_start_idx = 0, gt_end_idx = 0;

  Index frames() const { return features.rows(); }
  Index words() const { return static_cast<Index>(tokens.size()); }
};

struct DatasetSplit {
  std::vector<Instance> instances;
  std::vector<std::string> vocabulary;  // always built from the training split
  Index d_in = 0;
};

// Loader-side counted warnings; loaders never emit invalid instances.
struct LoadStats {
  long malformed_lines = 0;
  long skipped_records = 0;  // bad invariants (start > end, missing features)
  long rejected_queries = 0; // no tokens after cleaning
  long clamped_times = 0;

  long total() const {
    return malformed_lines + skipped_records + rejected_queries + clamped_times;
  }
  std::string summary() const;
};

// Lowercase, split on whitespace, strip leading/trailing non-alphanumeric
// characters, drop empty results. Throws DataError if nothing remains.
std::vector<std::string> tokenize(const std::string& query);

// clamp(floor(t / duration * frames), 0, frames - 1). Out-of-range t is
// clamped with a counted warning.
int time_to_index(double t_seconds, Index frames, double duration_seconds,
                  LoadStats* stats = nullptr);

// Inverse convention used when reporting predictions in seconds: frame idx
// spans [idx, idx+1) / frames of the duration.
double index_to_start_seconds(int idx, Index frames, double duration);
double index_to_end_seconds(int idx, Index frames, double duration);

struct AnnotationRecord {
  std::string video;
  double duration = 0;
  double start = 0;
  double end = 0;
  std::string query;
};

// Order-preserving. Malformed lines are counted and skipped unless strict,
// which raises DataError with the line number. Records with start > end are
// skipped with a counted warning.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               bool strict = false,
                                               LoadStats* stats = nullptr);
void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records);

Mat read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const Mat& features);

// Reads <dir>/<video_id>.feat.
Mat load_features(const std::filesystem::path& dir, const std::string& video_id);

std::vector<std::string> build_vocabulary(const std::vector<AnnotationRecord>& records);

// Tokens mapped against `vocabulary` (unknown -> OOV row |V|); instances with
// invariant violations are rejected with counted warnings.
DatasetSplit build_split(const std::vector<AnnotationRecord>& records,
                         const std::filesystem::path& features_dir,
                         const std::vector<std::string>& vocabulary,
                         LoadStats* stats = nullptr);

// ---- synthetic data ---------------------------------------------------------

struct SynthConfig {
  long num_instances = 600;
  int t_min = 30, t_max = 50;
  Index d_in = 16;
  int vocab_size = 24;
  // Moment length drawn uniformly from [moment_min_frac, moment_max_frac] * T
  // (at least one frame), placed uniformly.
  double moment_min_frac = 0.1;
  double moment_max_frac = 0.4;
  double signal = 2.0;  // s >= 0; 0 leaves the moment undetectable
  double noise_std = 1.0;
  int query_len_min = 3, query_len_max = 8;
  Index embedding_dim = 300;
  std::uint64_t seed = 7;
};

// Pure function of the config: frame features are iid Gaussian noise and the
// planted moment's frames additionally receive signal * u_w, where u_w is a
// fixed random unit direction assigned to the query's signal word.
DatasetSplit generate_synthetic(const SynthConfig& cfg);

// GloVe-scale random word vectors for the synthetic vocabulary (component
// std 0.4), deterministic per (seed, word).
struct EmbeddingTable;
EmbeddingTable synthetic_embeddings(const SynthConfig& cfg);

// Writes <dir>/features/*.feat, train.jsonl / eval.jsonl (last eval_count
// instances), embeddings.txt and synth_config.json.
void write_synthetic_dataset(const std::filesystem::path& dir, const SynthConfig& cfg,
                             long eval_count);

}  // namespace acrm
