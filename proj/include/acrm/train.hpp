#pragma once

// Training loop: seeded shuffling, padded batches with masked losses, Adam
// updates, per-epoch evaluation and best-mIoU early stopping.

#include "acrm/checkpoint.hpp"
#include "acrm/common.hpp"
#include "acrm/metrics.hpp"
#include "acrm/model.hpp"

#include <json.hpp>

#include <iosfwd>
#include <vector>

namespace acrm {

struct EpochLog {
  int epoch = 0;
  Real l_c = 0, l_i = 0, l = 0;
  Real miou = 0;
  std::vector<RecallEntry> recalls;
  double wall_seconds = 0;
  long degenerate_moments = 0;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  std::ostream* progress = nullptr;   // human-readable epoch lines
  std::ostream* log_jsonl = nullptr;  // config echo + one JSON object per epoch
  std::vector<int> eval_n = {1};
  std::vector<Real> eval_m = {0.3, 0.5, 0.7};
};

struct TrainResult {
  AcrmModel best;
  int best_epoch = 0;
  Real best_miou = 0;
  std::vector<EpochLog> epochs;
};

// Deterministic for a fixed config (seed included) and single worker. Aborts
// with NumericalError, naming the offending batch's videos, on a NaN loss.
TrainResult train_model(const ModelConfig& cfg, EmbeddingTable table,
                        const DatasetSplit& train_split, const DatasetSplit& eval_split,
                        const TrainOptions& opts = {});

// Batched evaluation of a frozen model. topk bounds the retrieval depth
// (must cover max(n_list)).
EvalReport evaluate_model(const AcrmModel& model, const DatasetSplit& split,
                          std::span<const int> n_list, std::span<const Real> m_list,
                          int topk = 1);

}  // namespace acrm
