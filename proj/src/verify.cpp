#include "acrm/verify.hpp"

#include "acrm/gradcheck.hpp"

#include <ostream>

namespace acrm {

std::vector<ModelConfig> gradcheck_variants() {
  ModelConfig base;
  base.d = 8;
  base.d_a = 8;
  base.predictor_hidden = 16;  // gradient math is width-independent
  base.d_in = 6;
  base.embedding_dim = 8;
  base.dropout = 0;  // central differences need a deterministic forward
  base.lambda = 0.7;

  std::vector<ModelConfig> variants;
  for (const char* interaction : {"mul", "sub"}) {
    for (const char* norm : {"tanh", "gauss"}) {
      ModelConfig c = base;
      c.interaction = interaction;
      c.normalization = norm;
      variants.push_back(c);
    }
  }
  ModelConfig no_attention = base;
  no_attention.attention = false;
  variants.push_back(no_attention);
  ModelConfig tied = base;
  tied.tied_lstm = true;
  variants.push_back(tied);
  return variants;
}

Instance random_tiny_instance(const ModelConfig& cfg, Rng& rng) {
  Instance inst;
  const int frames = std::uniform_int_distribution<int>(2, 6)(rng);
  const int words = std::uniform_int_distribution<int>(1, 5)(rng);
  inst.video_id = "gradcheck";
  inst.features = gaussian_matrix(frames, cfg.d_in, 0, 1, rng);
  for (int j = 0; j < words; ++j)
    inst.tokens.push_back(std::uniform_int_distribution<int>(0, 3)(rng));
  inst.duration = frames;
  inst.gt_start_idx = std::uniform_int_distribution<int>(0, frames - 1)(rng);
  inst.gt_end_idx =
      std::uniform_int_distribution<int>(inst.gt_start_idx, frames - 1)(rng);
  inst.gt_start_s = inst.gt_start_idx;
  inst.gt_end_s = inst.gt_end_idx + 0.5;
  return inst;
}

Real model_grad_check(AcrmModel& model, const Instance& inst, Real eps,
                      std::optional<int> max_coords, std::uint64_t seed) {
  Batch batch = make_batch({&inst}, model.embeddings);
  auto registry = model.named_params();
  std::vector<Mat> point;
  point.reserve(registry.size());
  for (auto& [name, mat] : registry) point.push_back(*mat);

  auto fn = [&](Tape& tape, const std::vector<Var>& vs) {
    Binder bind(tape, /*trainable=*/true);
    for (std::size_t i = 0; i < registry.size(); ++i)
      bind.preset(registry[i].second, vs[i]);
    ModelOutput out = forward_batch(bind, model, batch, Dropout{});
    return model_losses(tape, model, out, batch).l_total;
  };
  GradCheckOptions opts;
  opts.eps = eps;
  opts.max_coords = max_coords;
  opts.seed = seed;
  GradCheckResult res = grad_check(fn, point, opts);
  return res.saw_nan ? std::numeric_limits<Real>::infinity() : res.max_rel_err;
}

GradSuiteResult run_gradcheck_suite(const GradSuiteOptions& opts) {
  GradSuiteResult out;
  const std::vector<ModelConfig> variants = gradcheck_variants();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    ModelConfig cfg = variants[v];
    cfg.seed = opts.seed + v;
    const std::string label =
        cat(cfg.interaction, "/", cfg.normalization, cfg.attention ? "" : " no-att",
            cfg.tied_lstm ? " tied" : "");
    std::vector<std::string> vocab = {"w0", "w1", "w2", "w3"};
    AcrmModel model =
        AcrmModel::init(cfg, seeded_embeddings(vocab, cfg.embedding_dim, cfg.seed));
    Rng rng = seeded_rng(opts.seed, "gradsuite-instances", v);
    Real worst = 0;
    for (int trial = 0; trial < opts.trials; ++trial) {
      Instance inst = random_tiny_instance(cfg, rng);
      const Real err = model_grad_check(model, inst, opts.eps, opts.max_coords,
                                        opts.seed + static_cast<std::uint64_t>(trial));
      worst = std::max(worst, err);
      out.coords_checked += opts.max_coords;
    }
    out.worst = std::max(out.worst, worst);
    const bool pass = worst < opts.tol;
    if (!pass) {
      out.ok = false;
      out.failures.push_back(cat(label, ": max rel err ", worst));
    }
    if (opts.progress)
      *opts.progress << (pass ? "  ok   " : "  FAIL ") << label << "  max rel err "
                     << worst << "\n";
  }
  return out;
}

}  // namespace acrm
