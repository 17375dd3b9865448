#pragma once

// Full model: encoders -> frame-by-word attention (or mean pooling) ->
// projection into a shared range-normalized space -> elementwise interaction
// -> per-frame boundary/internal logits.

#include "acrm/attention.hpp"
#include "acrm/bind.hpp"
#include "acrm/common.hpp"
#include "acrm/data.hpp"
#include "acrm/embeddings.hpp"
#include "acrm/interaction.hpp"
#include "acrm/lstm.hpp"
#include "acrm/prediction.hpp"
#include "acrm/tape.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace acrm {

struct ModelConfig {
  Index d = 256;               // encoder output dim (both encoders)
  Index d_a = 0;               // attention inner width; 0 means d
  Index predictor_hidden = 256;
  Index d_in = 0;              // visual feature dim (dataset property)
  Index embedding_dim = 300;
  std::string normalization = "tanh";   // tanh | gauss
  std::string interaction = "mul";      // mul | sub | concat
  bool attention = true;
  bool tied_lstm = false;
  bool strict_mean = false;
  Real lambda = 0.7;  // 1.1 is the TACoS setting
  Real lr = 0.001;
  int batch = 64;
  Real dropout = 0.5;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 0;

  Index attention_dim() const { return d_a > 0 ? d_a : d; }
  NormMode norm_mode() const { return parse_norm_mode(normalization); }
  InteractionKind interaction_kind() const { return parse_interaction_kind(interaction); }
  // Predictor input width: d, or 2d under the concat baseline.
  Index cross_dim() const {
    return interaction_kind() == InteractionKind::kConcat ? 2 * d : d;
  }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct AcrmModel {
  ModelConfig cfg;
  EmbeddingTable embeddings;  // frozen; never receives gradients
  BiLstmParams video_encoder;
  BiLstmParams query_encoder;
  AttentionParams attn;
  ProjectionParams proj;
  PredictorParams predictor;

  static AcrmModel init(const ModelConfig& cfg, EmbeddingTable table);

  // Stable name -> tensor registry (definition order). Embeddings excluded.
  std::vector<std::pair<std::string, Mat*>> named_params();
};

// One padded batch. Frame/word masks are 1 for valid positions; padded word
// embeddings are zero rows.
struct Batch {
  Index size = 0, frames = 0, words = 0;  // B, padded T, padded m
  std::vector<const Instance*> items;
  std::vector<Mat> frame_inputs;     // frames of B x d_in
  std::vector<Mat> word_inputs;      // words of B x embedding_dim
  std::vector<Mat> frame_step_mask;  // frames of B x 1
  std::vector<Mat> word_step_mask;   // words of B x 1
  Mat frame_mask;                    // B x frames
  Mat word_mask;                     // B x words
  std::vector<std::pair<int, int>> gt;
};

Batch make_batch(const std::vector<const Instance*>& items, const EmbeddingTable& table);

struct ModelOutput {
  LogitTripleVars logits;          // each B x T
  Var frame_mask;                  // constant B x T on the tape
  std::vector<Var> attention;      // T of B x m; empty when attention is off
};

// training=true binds parameters as leaves; the Binder may carry presets
// (gradient checking). Dropout applies only to LSTM cell inputs.
ModelOutput forward_batch(Binder& bind, const AcrmModel& model, const Batch& batch,
                          const Dropout& dropout);

// Loss glue over a forward pass; total = boundary + lambda * internal, exactly.
struct LossValues {
  Real l_c = 0, l_i = 0, l = 0;
  Real lambda = 0;
  int degenerate = 0;
};

BatchLossVars model_losses(Tape& tape, const AcrmModel& model, const ModelOutput& out,
                           const Batch& batch);
LossValues fetch_losses(const BatchLossVars& v, Real lambda);

// Evaluation-mode forward of a single instance, with per-frame scores and
// (when enabled) the T x m attention weight matrix.
struct InstanceOutput {
  LogitTriple logits;
  Mat p_s, p_e, p_f;  // softmax rows over valid frames
  Mat attention_weights;  // T x m; empty when attention is off
};

InstanceOutput infer_instance(const AcrmModel& model, const Instance& inst);

}  // namespace acrm
