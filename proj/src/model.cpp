#include "acrm/model.hpp"

#include "acrm/linalg.hpp"

#include <cmath>

namespace acrm {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d <= 0 || d % 2 != 0)
    throw std::invalid_argument(cat("config: d=", d, " must be positive and even"));
  if (d_in <= 0) throw std::invalid_argument("config: d_in must be set from the dataset");
  if (embedding_dim <= 0) throw std::invalid_argument("config: embedding_dim must be positive");
  if (predictor_hidden <= 0) throw std::invalid_argument("config: predictor_hidden must be positive");
  if (lambda < 0) throw std::invalid_argument(cat("config: lambda=", lambda, " < 0"));
  if (dropout < 0 || dropout >= 1)
    throw std::invalid_argument(cat("config: dropout=", dropout, " outside [0, 1)"));
  if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be >= 1");
  if (patience < 0) throw std::invalid_argument("config: patience must be >= 0");
  parse_norm_mode(normalization);
  parse_interaction_kind(interaction);
}

json ModelConfig::to_json() const {
  json j;
  j["d"] = d;
  j["d_a"] = d_a;
  j["predictor_hidden"] = predictor_hidden;
  j["d_in"] = d_in;
  j["embedding_dim"] = embedding_dim;
  j["normalization"] = normalization;
  j["interaction"] = interaction;
  j["attention"] = attention;
  j["tied_lstm"] = tied_lstm;
  j["strict_mean"] = strict_mean;
  j["lambda"] = lambda;
  j["lr"] = lr;
  j["batch"] = batch;
  j["dropout"] = dropout;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("d", c.d);
  get("d_a", c.d_a);
  get("predictor_hidden", c.predictor_hidden);
  get("d_in", c.d_in);
  get("embedding_dim", c.embedding_dim);
  get("normalization", c.normalization);
  get("interaction", c.interaction);
  get("attention", c.attention);
  get("tied_lstm", c.tied_lstm);
  get("strict_mean", c.strict_mean);
  get("lambda", c.lambda);
  get("lr", c.lr);
  get("batch", c.batch);
  get("dropout", c.dropout);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"d", "d_a", "predictor_hidden", "d_in",
                                  "embedding_dim", "normalization", "interaction",
                                  "attention", "tied_lstm", "strict_mean", "lambda",
                                  "lr", "batch", "dropout", "max_epochs", "patience",
                                  "seed"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw DataError(cat("config: unknown key '", it.key(), "'"));
  }
  return c;
}

AcrmModel AcrmModel::init(const ModelConfig& cfg, EmbeddingTable table) {
  cfg.validate();
  if (table.dim() != cfg.embedding_dim)
    throw std::invalid_argument(cat("model: embedding table dim ", table.dim(),
                                    " vs config ", cfg.embedding_dim));
  AcrmModel m;
  m.cfg = cfg;
  m.embeddings = std::move(table);
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(cfg.d));
  Rng rng = seeded_rng(cfg.seed, "model-init");
  m.video_encoder = BiLstmParams::init(cfg.d_in, cfg.d, scale, rng);
  m.query_encoder = BiLstmParams::init(cfg.embedding_dim, cfg.d, scale, rng);
  m.attn = AttentionParams::init(cfg.d, cfg.attention_dim(), scale, rng);
  m.proj = ProjectionParams::init(cfg.d, scale, rng);
  m.predictor = PredictorParams::init(cfg.cross_dim(), cfg.d, cfg.predictor_hidden,
                                      scale, cfg.tied_lstm, rng);
  // Both encoders emit the same d by construction; keep the guard anyway.
  if (m.video_encoder.output_dim() != m.query_encoder.output_dim())
    throw std::logic_error("model: encoder output dims diverged");
  return m;
}

std::vector<std::pair<std::string, Mat*>> AcrmModel::named_params() {
  std::vector<std::pair<std::string, Mat*>> out;
  auto collect = [&out](const std::string& name, Mat& m) { out.emplace_back(name, &m); };
  video_encoder.visit("video_encoder", collect);
  query_encoder.visit("query_encoder", collect);
  attn.visit("attention", collect);
  proj.visit("projection", collect);
  predictor.visit("predictor", collect);
  return out;
}

Batch make_batch(const std::vector<const Instance*>& items, const EmbeddingTable& table) {
  if (items.empty()) throw std::invalid_argument("make_batch: no instances");
  Batch b;
  b.items = items;
  b.size = static_cast<Index>(items.size());
  const Index d_in = items[0]->features.cols();
  for (const Instance* inst : items) {
    if (inst->features.cols() != d_in)
      throw std::invalid_argument(cat("make_batch: feature dims ", inst->features.cols(),
                                      " vs ", d_in));
    b.frames = std::max(b.frames, inst->frames());
    b.words = std::max(b.words, inst->words());
  }
  b.frame_inputs.assign(static_cast<std::size_t>(b.frames), Mat::Zero(b.size, d_in));
  b.word_inputs.assign(static_cast<std::size_t>(b.words),
                       Mat::Zero(b.size, table.dim()));
  b.frame_step_mask.assign(static_cast<std::size_t>(b.frames), Mat::Zero(b.size, 1));
  b.word_step_mask.assign(static_cast<std::size_t>(b.words), Mat::Zero(b.size, 1));
  b.frame_mask = Mat::Zero(b.size, b.frames);
  b.word_mask = Mat::Zero(b.size, b.words);
  for (Index i = 0; i < b.size; ++i) {
    const Instance& inst = *items[static_cast<std::size_t>(i)];
    for (Index t = 0; t < inst.frames(); ++t) {
      b.frame_inputs[static_cast<std::size_t>(t)].row(i) = inst.features.row(t);
      b.frame_step_mask[static_cast<std::size_t>(t)](i, 0) = 1;
      b.frame_mask(i, t) = 1;
    }
    const Mat emb = table.lookup(inst.tokens);
    for (Index w = 0; w < inst.words(); ++w) {
      b.word_inputs[static_cast<std::size_t>(w)].row(i) = emb.row(w);
      b.word_step_mask[static_cast<std::size_t>(w)](i, 0) = 1;
      b.word_mask(i, w) = 1;
    }
    b.gt.emplace_back(inst.gt_start_idx, inst.gt_end_idx);
  }
  return b;
}

ModelOutput forward_batch(Binder& bind, const AcrmModel& model, const Batch& batch,
                          const Dropout& dropout) {
  Tape& tape = bind.tape();
  const ModelConfig& cfg = model.cfg;
  const NormMode norm = cfg.norm_mode();
  const InteractionKind kind = cfg.interaction_kind();

  auto to_vars = [&tape](const std::vector<Mat>& mats) {
    std::vector<Var> vars;
    vars.reserve(mats.size());
    for (const Mat& m : mats) vars.push_back(tape.constant(m));
    return vars;
  };
  std::vector<Var> frame_inputs = to_vars(batch.frame_inputs);
  std::vector<Var> word_inputs = to_vars(batch.word_inputs);
  std::vector<Var> frame_masks = to_vars(batch.frame_step_mask);
  std::vector<Var> word_masks = to_vars(batch.word_step_mask);
  Var word_mask = tape.constant(batch.word_mask);

  std::vector<Var> video_states =
      bilstm_states(bind, model.video_encoder, frame_inputs, frame_masks, dropout);
  std::vector<Var> word_states =
      bilstm_states(bind, model.query_encoder, word_inputs, word_masks, dropout);

  ModelOutput out;
  std::vector<Var> cross_steps(video_states.size());
  if (cfg.attention) {
    std::vector<Var> word_proj = attention_word_proj(bind, model.attn, word_states);
    out.attention.reserve(video_states.size());
    for (std::size_t t = 0; t < video_states.size(); ++t) {
      AttendedFrame f = attend_frame(bind, model.attn, video_states[t], word_proj,
                                     word_states, word_mask);
      out.attention.push_back(f.weights);
      Var q_hat = project_normalize(bind, f.summary, model.proj.w_q, model.proj.b_q, norm);
      Var v_hat =
          project_normalize(bind, video_states[t], model.proj.w_v, model.proj.b_v, norm);
      cross_steps[t] = interact(v_hat, q_hat, kind);
    }
  } else {
    Var pooled = mean_pool_words(bind, word_states, word_mask);
    Var q_hat = project_normalize(bind, pooled, model.proj.w_q, model.proj.b_q, norm);
    for (std::size_t t = 0; t < video_states.size(); ++t) {
      Var v_hat =
          project_normalize(bind, video_states[t], model.proj.w_v, model.proj.b_v, norm);
      cross_steps[t] = interact(v_hat, q_hat, kind);
    }
  }

  out.logits = predict_logits_vars(bind, model.predictor, cross_steps, frame_masks, dropout);
  out.frame_mask = tape.constant(batch.frame_mask);
  return out;
}

BatchLossVars model_losses(Tape& tape, const AcrmModel& model, const ModelOutput& out,
                           const Batch& batch) {
  return batch_losses(tape, out.logits, out.frame_mask, batch.gt, model.cfg.lambda,
                      model.cfg.strict_mean);
}

LossValues fetch_losses(const BatchLossVars& v, Real lambda) {
  LossValues lv;
  lv.l_c = v.l_c.scalar();
  lv.l_i = v.l_i.scalar();
  lv.l = v.l_total.scalar();
  lv.lambda = lambda;
  lv.degenerate = v.degenerate_count;
  return lv;
}

InstanceOutput infer_instance(const AcrmModel& model, const Instance& inst) {
  Tape tape;
  Binder bind(tape, /*trainable=*/false);
  Batch batch = make_batch({&inst}, model.embeddings);
  ModelOutput out = forward_batch(bind, model, batch, Dropout{});
  InstanceOutput res;
  res.logits = {out.logits.e_s.value(), out.logits.e_e.value(), out.logits.e_f.value()};
  const Mat ones = Mat::Ones(1, res.logits.e_s.cols());
  res.p_s = masked_softmax_rows(res.logits.e_s, ones);
  res.p_e = masked_softmax_rows(res.logits.e_e, ones);
  res.p_f = masked_softmax_rows(res.logits.e_f, ones);
  if (!out.attention.empty()) {
    res.attention_weights.resize(batch.frames, batch.words);
    for (Index t = 0; t < batch.frames; ++t)
      res.attention_weights.row(t) = out.attention[static_cast<std::size_t>(t)].value();
  }
  return res;
}

}  // namespace acrm
