#include "acrm/embeddings.hpp"
#include "acrm/gradcheck.hpp"
#include "acrm/lstm.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace acrm;

namespace {

// Straight-line reimplementation of the gated recurrence, scalar loops only.
// Kept independent of the tape so it can serve as the oracle.
struct RefState {
  std::vector<double> h, c;
};

RefState ref_lstm_step(const std::vector<double>& x, const RefState& prev,
                       const LstmDirParams& p) {
  const auto hidden = static_cast<std::size_t>(p.input.wh.rows());
  auto affine = [&](const GateParams& g, std::size_t k) {
    double acc = g.b(0, static_cast<Index>(k));
    for (std::size_t i = 0; i < x.size(); ++i)
      acc += x[i] * g.wx(static_cast<Index>(i), static_cast<Index>(k));
    for (std::size_t i = 0; i < hidden; ++i)
      acc += prev.h[i] * g.wh(static_cast<Index>(i), static_cast<Index>(k));
    return acc;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  RefState next{std::vector<double>(hidden), std::vector<double>(hidden)};
  for (std::size_t k = 0; k < hidden; ++k) {
    const double i_gate = sig(affine(p.input, k));
    const double f_gate = sig(affine(p.forget, k));
    const double o_gate = sig(affine(p.output, k));
    const double cand = std::tanh(affine(p.candidate, k));
    next.c[k] = f_gate * prev.c[k] + i_gate * cand;
    next.h[k] = o_gate * std::tanh(next.c[k]);
  }
  return next;
}

BiLstmParams random_bilstm(Index input_dim, Index output_dim, std::uint64_t seed) {
  Rng rng = seeded_rng(seed, "test-bilstm");
  return BiLstmParams::init(input_dim, output_dim, 0.4, rng);
}

}  // namespace

TEST_SUITE_BEGIN("lstm");

TEST_CASE("all-zero params and state map any input to zero") {
  BiLstmParams p;
  p.input_dim = 3;
  p.hidden = 2;
  auto zero_gate = [] { return GateParams{Mat::Zero(3, 2), Mat::Zero(2, 2), Mat::Zero(1, 2)}; };
  p.fwd = {zero_gate(), zero_gate(), zero_gate(), zero_gate()};
  Tape tape;
  Binder bind(tape, false);
  LstmState s{tape.constant(Mat::Zero(1, 2)), tape.constant(Mat::Zero(1, 2))};
  Mat x(1, 3);
  x << 5, -2, 7;
  LstmState next = lstm_step(bind, p.fwd, tape.constant(x), s);
  CHECK(next.h.value().isZero(0.0));  // candidate tanh(0)=0 regardless of gates
  CHECK(next.c.value().isZero(0.0));
}

TEST_CASE("zero input weights make the step independent of x") {
  Rng rng = seeded_rng(5, "indep");
  BiLstmParams p = random_bilstm(3, 4, 5);
  for (GateParams* g : {&p.fwd.input, &p.fwd.forget, &p.fwd.output, &p.fwd.candidate})
    g->wx.setZero();
  Tape tape;
  Binder bind(tape, false);
  Mat h0 = gaussian_matrix(1, 2, 0, 1, rng);
  Mat c0 = gaussian_matrix(1, 2, 0, 1, rng);
  LstmState s{tape.constant(h0), tape.constant(c0)};
  LstmState a = lstm_step(bind, p.fwd, tape.constant(gaussian_matrix(1, 3, 0, 3, rng)), s);
  LstmState b = lstm_step(bind, p.fwd, tape.constant(gaussian_matrix(1, 3, 0, 3, rng)), s);
  CHECK((a.h.value() - b.h.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random step matches the straight-line reference to 1e-12") {
  Rng rng = seeded_rng(17, "ref");
  BiLstmParams p = random_bilstm(5, 6, 17);
  for (int trial = 0; trial < 10; ++trial) {
    Mat x = gaussian_matrix(1, 5, 0, 1.5, rng);
    Mat h = gaussian_matrix(1, 3, 0, 0.8, rng);
    Mat c = gaussian_matrix(1, 3, 0, 0.8, rng);
    Tape tape;
    Binder bind(tape, false);
    LstmState s{tape.constant(h), tape.constant(c)};
    LstmState next = lstm_step(bind, p.fwd, tape.constant(x), s);
    RefState prev{{h(0, 0), h(0, 1), h(0, 2)}, {c(0, 0), c(0, 1), c(0, 2)}};
    RefState ref = ref_lstm_step({x(0, 0), x(0, 1), x(0, 2), x(0, 3), x(0, 4)}, prev, p.fwd);
    for (Index k = 0; k < 3; ++k) {
      CHECK(next.h.value()(0, k) == doctest::Approx(ref.h[static_cast<std::size_t>(k)]).epsilon(1e-12));
      CHECK(next.c.value()(0, k) == doctest::Approx(ref.c[static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-frame sequence encodes to 1 x d") {
  BiLstmParams p = random_bilstm(4, 6, 2);
  Rng rng = seeded_rng(2, "t1");
  Mat out = encode_sequence(gaussian_matrix(1, 4, 0, 1, rng), p, 0, false, nullptr);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 6);
}

TEST_CASE("reversing the frames swaps the directional halves") {
  // With backward params copied from forward ones, encode(reverse(V)) row t
  // equals encode(V) row T-1-t with halves swapped, bit for bit.
  BiLstmParams p = random_bilstm(3, 8, 23);
  p.bwd = p.fwd;
  Rng rng = seeded_rng(23, "reverse");
  Mat video = gaussian_matrix(7, 3, 0, 1, rng);
  Mat reversed = video.colwise().reverse();
  Mat a = encode_sequence(video, p, 0, false, nullptr);
  Mat b = encode_sequence(reversed, p, 0, false, nullptr);
  for (Index t = 0; t < 7; ++t) {
    CHECK((b.row(t).leftCols(4) - a.row(6 - t).rightCols(4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b.row(t).rightCols(4) - a.row(6 - t).leftCols(4)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dropout 0: training and evaluation outputs match") {
  BiLstmParams p = random_bilstm(4, 6, 3);
  Rng data_rng = seeded_rng(3, "d0");
  Mat video = gaussian_matrix(5, 4, 0, 1, data_rng);
  Rng drop_rng = seeded_rng(3, "drop");
  Mat train_out = encode_sequence(video, p, 0.0, true, &drop_rng);
  Mat eval_out = encode_sequence(video, p, 0.0, false, nullptr);
  CHECK((train_out - eval_out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("evaluation is deterministic across repeated calls") {
  BiLstmParams p = random_bilstm(4, 6, 9);
  Rng rng = seeded_rng(9, "det");
  Mat video = gaussian_matrix(6, 4, 0, 1, rng);
  Mat a = encode_sequence(video, p, 0.5, false, nullptr);
  Mat b = encode_sequence(video, p, 0.5, false, nullptr);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empty sequence is rejected") {
  BiLstmParams p = random_bilstm(4, 6, 4);
  CHECK_THROWS_AS(encode_sequence(Mat(0, 4), p, 0, false, nullptr), std::invalid_argument);
}

TEST_CASE("encoder gradcheck stays below 1e-4") {
  BiLstmParams p = random_bilstm(3, 4, 31);
  Rng rng = seeded_rng(31, "enc-grad");
  Mat video = gaussian_matrix(4, 3, 0, 1, rng);
  std::vector<Mat> point;
  std::vector<Mat*> slots;
  p.visit("enc", [&](const std::string&, Mat& m) { slots.push_back(&m); });
  for (Mat* m : slots) point.push_back(*m);
  auto fn = [&](Tape& tape, const std::vector<Var>& vs) {
    Binder bind(tape, true);
    for (std::size_t i = 0; i < slots.size(); ++i) bind.preset(slots[i], vs[i]);
    std::vector<Var> steps;
    for (Index t = 0; t < video.rows(); ++t) steps.push_back(tape.constant(video.row(t)));
    std::vector<Var> states = bilstm_states(bind, p, steps, {}, Dropout{});
    Var acc = sum(tanh(states[0]));
    for (std::size_t t = 1; t < states.size(); ++t) acc = acc + sum(tanh(states[t]));
    return acc;
  };
  CHECK(grad_check(fn, point).ok(1e-4));
}

TEST_CASE("query encoding: one word gives 1 x d; prefix context differs") {
  std::vector<std::string> vocab = {"person", "opens", "door"};
  EmbeddingTable table = seeded_embeddings(vocab, 8, 42);
  BiLstmParams p = random_bilstm(8, 6, 13);
  Mat one = encode_query({0}, table, p, 0, false);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 6);
  // Shared prefix, different last word: every row differs (backward context).
  Mat a = encode_query({0, 1, 1}, table, p, 0, false);
  Mat b = encode_query({0, 1, 2}, table, p, 0, false);
  for (Index r = 0; r < 3; ++r)
    CHECK((a.row(r) - b.row(r)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("unknown token maps to the OOV row") {
  std::vector<std::string> vocab = {"person", "opens"};
  EmbeddingTable table = seeded_embeddings(vocab, 8, 7);
  CHECK(table.row_of("door") == 2);
  CHECK(table.row_of("person") == 0);
  Mat looked = table.lookup({table.row_of("door")});
  CHECK((looked - table.table.row(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embeddings: file rows override, absent rows come from the seed") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "acrm_embed_test";
  fs::create_directories(dir);
  const fs::path file = dir / "glove.txt";
  {
    std::ofstream out(file);
    out << "person 1 2 3\n";
    out << "outside 9 9 9\n";  // not in the vocabulary; ignored
    out << "door -0.25 0 4.5\n";
  }
  std::vector<std::string> vocab = {"person", "opens", "door"};
  EmbeddingTable t1 = load_embeddings(file, vocab, 3, 99);
  CHECK(t1.table(0, 1) == 2.0);
  CHECK(t1.table(2, 0) == -0.25);
  // "opens" (row 1) is absent: uniform(-0.1, 0.1), reproducible under the seed.
  CHECK(std::abs(t1.table(1, 0)) <= 0.1);
  EmbeddingTable t2 = load_embeddings(file, vocab, 3, 99);
  CHECK((t1.table - t2.table).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("round trip is bit-identical") {
    const fs::path round = dir / "round.txt";
    save_embeddings(round, t1);
    EmbeddingTable t3 = load_embeddings(round, vocab, 3, 99);
    CHECK((t1.table - t3.table).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("malformed line reports its number") {
    const fs::path bad = dir / "bad.txt";
    {
      std::ofstream out(bad);
      out << "person 1 2 3\n";
      out << "door 1 two 3\n";
    }
    try {
      load_embeddings(bad, vocab, 3, 1);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("dimension mismatch is an error") {
    CHECK_THROWS_AS(load_embeddings(file, vocab, 5, 1), DataError);
  }
  SUBCASE("empty vocabulary is an error") {
    CHECK_THROWS_AS(load_embeddings(file, {}, 3, 1), DataError);
  }
  fs::remove_all(dir);
}

TEST_SUITE_END();
