#include "acrm/data.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace acrm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Scalar round through f32; Eigen's chained cast expression is not reliable
// for this under -O3 (the vectorizer skips the tail), so quantize explicitly.
Mat quantize_f32(Mat m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      m(r, c) = static_cast<Real>(static_cast<float>(m(r, c)));
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("tokenizer rules") {
  CHECK(tokenize("Person put a notebook in a bag.") ==
        std::vector<std::string>{"person", "put", "a", "notebook", "in", "a", "bag"});
  CHECK(tokenize("  HELLO,   world ") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
  CHECK_THROWS_AS(tokenize("..."), DataError);
}

TEST_CASE("time mapping: floor, clamp, monotone") {
  CHECK(time_to_index(0, 30, 30) == 0);
  CHECK(time_to_index(30, 30, 30) == 29);  // t == duration clamps to T-1
  CHECK(time_to_index(15.5, 30, 30) == 15);
  LoadStats stats;
  CHECK(time_to_index(-2, 10, 30, &stats) == 0);
  CHECK(time_to_index(31, 10, 30, &stats) == 9);
  CHECK(stats.clamped_times == 2);
  int prev = 0;
  for (double t = 0; t <= 30; t += 0.37) {
    const int idx = time_to_index(t, 17, 30);
    CHECK(idx >= prev);
    prev = idx;
  }
  CHECK_THROWS_AS(time_to_index(1, 10, 0), std::invalid_argument);
}

TEST_CASE("annotations: valid, skipped and strict behavior") {
  TempDir dir("acrm_ann_test");
  const fs::path file = dir.path / "ann.jsonl";
  {
    std::ofstream out(file);
    out << R"({"video":"v1","duration":30,"start":2,"end":9,"query":"person opens door"})" << "\n";
    out << "{broken json\n";
    out << R"({"video":"v2","duration":30,"start":12,"end":4,"query":"start after end"})" << "\n";
    out << R"({"video":"v3","duration":20,"start":1.5,"end":19,"query":"second valid line"})" << "\n";
  }
  LoadStats stats;
  auto records = load_annotations(file, false, &stats);
  REQUIRE(records.size() == 2);
  CHECK(records[0].video == "v1");
  CHECK(records[1].video == "v3");
  CHECK(stats.malformed_lines == 1);
  CHECK(stats.skipped_records == 1);
  try {
    load_annotations(file, true);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  SUBCASE("empty file loads an empty split") {
    const fs::path empty = dir.path / "empty.jsonl";
    std::ofstream(empty).close();
    CHECK(load_annotations(empty).empty());
  }
  SUBCASE("round trip preserves order and values") {
    const fs::path out = dir.path / "round.jsonl";
    save_annotations(out, records);
    auto again = load_annotations(out);
    REQUIRE(again.size() == 2);
    CHECK(again[1].start == records[1].start);
    CHECK(again[1].query == records[1].query);
  }
}

TEST_CASE("feature files: round trip and corruption errors") {
  TempDir dir("acrm_feat_test");
  Rng rng = seeded_rng(1, "feat");
  Mat feats = quantize_f32(gaussian_matrix(7, 5, 0, 2, rng));
  write_feature_file(dir.path / "v1.feat", feats);
  Mat again = load_features(dir.path, "v1");
  CHECK((feats - again).cwiseAbs().maxCoeff() == 0.0);
  // writing what we read back produces identical bytes
  write_feature_file(dir.path / "v1b.feat", again);
  CHECK(slurp(dir.path / "v1.feat") == slurp(dir.path / "v1b.feat"));

  SUBCASE("bad magic names the file and offset") {
    std::ofstream out(dir.path / "bad.feat", std::ios::binary);
    out << "NOTMAGIC" << std::string(12, '\0');
    out.close();
    try {
      read_feature_file(dir.path / "bad.feat");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("bad.feat") != std::string::npos);
      CHECK(msg.find("offset 0") != std::string::npos);
    }
  }
  SUBCASE("zero frames in the header is an error") {
    std::string bytes = slurp(dir.path / "v1.feat");
    bytes[12] = bytes[13] = bytes[14] = bytes[15] = '\0';  // T := 0
    std::ofstream(dir.path / "zero.feat", std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_feature_file(dir.path / "zero.feat"), DataError);
  }
  SUBCASE("truncated payload is an error") {
    std::string bytes = slurp(dir.path / "v1.feat");
    bytes.resize(bytes.size() - 6);
    std::ofstream(dir.path / "trunc.feat", std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_feature_file(dir.path / "trunc.feat"), DataError);
  }
}

TEST_CASE("split building maps tokens and enforces invariants") {
  TempDir dir("acrm_split_test");
  Rng rng = seeded_rng(2, "split");
  write_feature_file(dir.path / "v1.feat", gaussian_matrix(10, 4, 0, 1, rng));
  write_feature_file(dir.path / "v2.feat", gaussian_matrix(6, 4, 0, 1, rng));
  std::vector<AnnotationRecord> records = {
      {"v1", 20, 4, 11.5, "Person opens the door"},
      {"v1", 20, 0, 20, "whole video span"},
      {"v2", 12, 3, 5, "...?"},          // rejected: no tokens
      {"missing", 10, 1, 2, "no file"},  // rejected: features absent
  };
  auto vocab = build_vocabulary(records);
  CHECK(vocab.size() == 9);  // first-occurrence order, lowercased, deduped
  CHECK(vocab[0] == "person");
  LoadStats stats;
  DatasetSplit split = build_split(records, dir.path, vocab, &stats);
  REQUIRE(split.instances.size() == 2);
  CHECK(stats.rejected_queries == 1);
  CHECK(stats.skipped_records == 1);
  CHECK(split.d_in == 4);
  const Instance& a = split.instances[0];
  CHECK(a.tokens == std::vector<int>{0, 1, 2, 3});
  CHECK(a.gt_start_idx == 2);   // floor(4/20*10)
  CHECK(a.gt_end_idx == 5);     // floor(11.5/20*10)
  const Instance& b = split.instances[1];
  CHECK(b.gt_start_idx == 0);
  CHECK(b.gt_end_idx == 9);     // clamped end at t == duration
  for (const Instance& inst : split.instances) {
    CHECK(inst.gt_start_idx <= inst.gt_end_idx);
    CHECK(inst.gt_end_idx < inst.frames());
  }
}

TEST_CASE("synthetic generation is a pure function of the config") {
  SynthConfig cfg;
  cfg.num_instances = 3;
  cfg.t_min = cfg.t_max = 20;
  cfg.d_in = 8;
  cfg.vocab_size = 10;
  cfg.seed = 123;
  DatasetSplit a = generate_synthetic(cfg);
  DatasetSplit b = generate_synthetic(cfg);
  REQUIRE(a.instances.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.instances[i].features.rows() == 20);
    CHECK(a.instances[i].features.cols() == 8);
    CHECK((a.instances[i].features - b.instances[i].features).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.instances[i].raw_query == b.instances[i].raw_query);
    CHECK(a.instances[i].gt_start_idx <= a.instances[i].gt_end_idx);
    CHECK(a.instances[i].gt_end_idx < 20);
  }
  // time mapping recovers the planted indices exactly
  for (const Instance& inst : a.instances) {
    CHECK(time_to_index(inst.gt_start_s, inst.frames(), inst.duration) == inst.gt_start_idx);
    CHECK(time_to_index(inst.gt_end_s, inst.frames(), inst.duration) == inst.gt_end_idx);
  }
}

TEST_CASE("zero signal leaves the moment rows at the noise level") {
  SynthConfig cfg;
  cfg.num_instances = 8;
  cfg.signal = 0;
  cfg.seed = 9;
  DatasetSplit split = generate_synthetic(cfg);
  Real inside = 0, outside = 0;
  long n_in = 0, n_out = 0;
  for (const Instance& inst : split.instances)
    for (Index t = 0; t < inst.frames(); ++t) {
      const Real norm = inst.features.row(t).norm();
      if (t >= inst.gt_start_idx && t <= inst.gt_end_idx) {
        inside += norm;
        n_in += 1;
      } else {
        outside += norm;
        n_out += 1;
      }
    }
  CHECK(std::abs(inside / n_in - outside / n_out) < 0.5);
}

TEST_CASE("synthetic dataset on disk round-trips through the loaders") {
  TempDir dir("acrm_synth_test");
  SynthConfig cfg;
  cfg.num_instances = 6;
  cfg.t_min = 10;
  cfg.t_max = 14;
  cfg.d_in = 5;
  cfg.vocab_size = 8;
  cfg.embedding_dim = 12;
  cfg.seed = 77;
  write_synthetic_dataset(dir.path, cfg, 2);
  auto train_records = load_annotations(dir.path / "train.jsonl");
  auto eval_records = load_annotations(dir.path / "eval.jsonl");
  CHECK(train_records.size() == 4);
  CHECK(eval_records.size() == 2);
  auto vocab = build_vocabulary(train_records);
  DatasetSplit split = build_split(train_records, dir.path / "features", vocab);
  REQUIRE(split.instances.size() == 4);
  DatasetSplit direct = generate_synthetic(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const Mat delta =
        split.instances[i].features - quantize_f32(direct.instances[i].features);
    CHECK(delta.cwiseAbs().maxCoeff() == 0.0);  // f32 storage, exactly
    CHECK(split.instances[i].gt_start_idx == direct.instances[i].gt_start_idx);
    CHECK(split.instances[i].gt_end_idx == direct.instances[i].gt_end_idx);
  }
  // same seed, same bytes
  TempDir dir2("acrm_synth_test2");
  write_synthetic_dataset(dir2.path, cfg, 2);
  CHECK(slurp(dir.path / "train.jsonl") == slurp(dir2.path / "train.jsonl"));
  CHECK(slurp(dir.path / "features" / "synth_0.feat") ==
        slurp(dir2.path / "features" / "synth_0.feat"));
  CHECK(slurp(dir.path / "embeddings.txt") == slurp(dir2.path / "embeddings.txt"));
}

TEST_SUITE_END();
