#include "acrm/train.hpp"

#include "acrm/adam.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace acrm {

using nlohmann::json;

json EpochLog::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["l_c"] = l_c;
  j["l_i"] = l_i;
  j["l"] = l;
  j["miou"] = miou;
  json rec = json::object();
  for (const RecallEntry& r : recalls)
    rec[recall_label(r.n, r.threshold)] = r.percent;
  j["recalls"] = rec;
  j["seconds"] = wall_seconds;
  j["degenerate_moments"] = degenerate_moments;
  return j;
}

EvalReport evaluate_model(const AcrmModel& model, const DatasetSplit& split,
                          std::span<const int> n_list, std::span<const Real> m_list,
                          int topk) {
  if (split.instances.empty()) throw std::invalid_argument("evaluate: empty split");
  for (int n : n_list)
    if (n > topk)
      throw std::invalid_argument(cat("evaluate: R@", n, " requested with topk=", topk));
  std::vector<std::vector<BoundaryPrediction>> preds;
  std::vector<std::pair<int, int>> gts;
  preds.reserve(split.instances.size());
  const int batch_size = std::max(1, model.cfg.batch);
  for (std::size_t at = 0; at < split.instances.size(); at += batch_size) {
    std::vector<const Instance*> items;
    for (std::size_t i = at; i < std::min(at + batch_size, split.instances.size()); ++i)
      items.push_back(&split.instances[i]);
    Batch batch = make_batch(items, model.embeddings);
    Tape tape;
    Binder bind(tape, /*trainable=*/false);
    ModelOutput out = forward_batch(bind, model, batch, Dropout{});
    const Mat& e_s = out.logits.e_s.value();
    const Mat& e_e = out.logits.e_e.value();
    for (Index b = 0; b < batch.size; ++b) {
      const Index frames = batch.items[static_cast<std::size_t>(b)]->frames();
      const Mat row_s = e_s.row(b).leftCols(frames);
      const Mat row_e = e_e.row(b).leftCols(frames);
      preds.push_back(infer_top_k(row_s, row_e, topk));
      gts.emplace_back(batch.gt[static_cast<std::size_t>(b)]);
    }
  }
  return evaluate(preds, gts, n_list, m_list);
}

TrainResult train_model(const ModelConfig& cfg, EmbeddingTable table,
                        const DatasetSplit& train_split, const DatasetSplit& eval_split,
                        const TrainOptions& opts) {
  cfg.validate();
  if (train_split.instances.empty())
    throw std::invalid_argument("train: empty training split");
  AcrmModel model = AcrmModel::init(cfg, std::move(table));
  auto registry = model.named_params();
  std::vector<Mat*> params;
  for (auto& [name, mat] : registry) params.push_back(mat);
  AdamState adam;
  adam.init_like(params);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  if (opts.log_jsonl) {
    json header;
    header["config"] = cfg.to_json();
    header["train_instances"] = train_split.instances.size();
    header["eval_instances"] = eval_split.instances.size();
    *opts.log_jsonl << header.dump() << '\n';
  }

  TrainResult result;
  result.best = model;
  result.best_miou = -1;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_split.instances.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = seeded_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng = seeded_rng(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch));

    EpochLog log;
    log.epoch = epoch;
    long batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch) {
      std::vector<const Instance*> items;
      for (std::size_t i = at; i < std::min(at + cfg.batch, order.size()); ++i)
        items.push_back(&train_split.instances[order[i]]);
      Batch batch = make_batch(items, model.embeddings);
      Tape tape;
      Binder bind(tape, /*trainable=*/true);
      Dropout dropout{cfg.dropout, true, &dropout_rng};
      ModelOutput out = forward_batch(bind, model, batch, dropout);
      BatchLossVars losses = model_losses(tape, model, out, batch);
      LossValues lv = fetch_losses(losses, cfg.lambda);
      if (!std::isfinite(lv.l)) {
        std::string ids;
        for (const Instance* inst : items) ids += " " + inst->video_id;
        throw NumericalError(cat("train: non-finite loss at epoch ", epoch,
                                 ", batch of:", ids));
      }
      tape.backward(losses.l_total);
      std::vector<Mat> grads;
      grads.reserve(params.size());
      for (Mat* p : params) grads.push_back(bind.grad_of(*p));
      adam_step(params, grads, adam, adam_cfg);
      log.l_c += lv.l_c;
      log.l_i += lv.l_i;
      log.l += lv.l;
      log.degenerate_moments += lv.degenerate;
      batches += 1;
    }
    log.l_c /= static_cast<Real>(batches);
    log.l_i /= static_cast<Real>(batches);
    log.l /= static_cast<Real>(batches);

    EvalReport report = evaluate_model(model, eval_split, opts.eval_n, opts.eval_m, 1);
    log.miou = report.miou;
    log.recalls = report.recalls;
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(log);

    if (opts.log_jsonl) *opts.log_jsonl << log.to_json().dump() << '\n';
    if (opts.progress) {
      *opts.progress << "epoch " << epoch << "  L=" << log.l << " (Lc=" << log.l_c
                     << " Li=" << log.l_i << ")  mIoU=" << log.miou;
      for (const RecallEntry& r : log.recalls)
        *opts.progress << "  R@" << r.n << ",IoU=" << r.threshold << "=" << r.percent;
      *opts.progress << "  " << log.wall_seconds << "s\n";
    }

    if (report.miou > result.best_miou) {
      result.best_miou = report.miou;
      result.best_epoch = epoch;
      result.best = model;
      epochs_since_best = 0;
    } else {
      epochs_since_best += 1;
    }
    if (epochs_since_best >= cfg.patience) break;
  }
  return result;
}

}  // namespace acrm
