// acrm: train / evaluate / run inference for the cross-modal moment
// retrieval model, plus synthetic dataset generation and a gradient checker.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include "acrm/checkpoint.hpp"
#include "acrm/data.hpp"
#include "acrm/embeddings.hpp"
#include "acrm/metrics.hpp"
#include "acrm/model.hpp"
#include "acrm/train.hpp"
#include "acrm/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace acrm;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct ConfigFlags {
  std::optional<long> d, d_a, predictor_hidden, embedding_dim, batch, max_epochs,
      patience;
  std::optional<double> lambda, lr, dropout;
  std::optional<std::string> normalization, interaction;
  std::optional<bool> attention, tied_lstm, strict_mean;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--d", f.d, "Encoder output dimension (even)");
  cmd->add_option("--d-a", f.d_a, "Attention inner width (default: d)");
  cmd->add_option("--predictor-hidden", f.predictor_hidden, "MLP hidden width");
  cmd->add_option("--embedding-dim", f.embedding_dim, "Word embedding dimension");
  cmd->add_option("--normalization", f.normalization, "tanh|gauss");
  cmd->add_option("--interaction", f.interaction, "mul|sub|concat");
  cmd->add_option("--attention", f.attention, "Frame-by-word attention on/off");
  cmd->add_option("--tied-lstm", f.tied_lstm, "Share one predictor BiLSTM across heads");
  cmd->add_option("--strict-mean", f.strict_mean,
                  "Divide the internal loss by the term count");
  cmd->add_option("--lambda", f.lambda, "Internal-loss weight");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch", f.batch, "Batch size");
  cmd->add_option("--dropout", f.dropout, "LSTM input dropout rate");
  cmd->add_option("--max-epochs", f.max_epochs, "Epoch cap");
  cmd->add_option("--patience", f.patience, "Early-stopping patience (eval mIoU)");
  cmd->add_option("--seed", f.seed, "Run seed");
}

// Layering: config file, then flags, then ACRM_SEED.
ModelConfig resolve_config(const std::string& config_path, const ConfigFlags& f) {
  ModelConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw DataError(cat("config: cannot open ", config_path));
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError(cat("config: ", config_path, ": ", e.what()));
    }
    cfg = ModelConfig::from_json(j);
  }
  if (f.d) cfg.d = *f.d;
  if (f.d_a) cfg.d_a = *f.d_a;
  if (f.predictor_hidden) cfg.predictor_hidden = *f.predictor_hidden;
  if (f.embedding_dim) cfg.embedding_dim = *f.embedding_dim;
  if (f.normalization) cfg.normalization = *f.normalization;
  if (f.interaction) cfg.interaction = *f.interaction;
  if (f.attention) cfg.attention = *f.attention;
  if (f.tied_lstm) cfg.tied_lstm = *f.tied_lstm;
  if (f.strict_mean) cfg.strict_mean = *f.strict_mean;
  if (f.lambda) cfg.lambda = *f.lambda;
  if (f.lr) cfg.lr = *f.lr;
  if (f.batch) cfg.batch = static_cast<int>(*f.batch);
  if (f.dropout) cfg.dropout = *f.dropout;
  if (f.max_epochs) cfg.max_epochs = static_cast<int>(*f.max_epochs);
  if (f.patience) cfg.patience = static_cast<int>(*f.patience);
  if (f.seed) cfg.seed = *f.seed;
  if (const char* env = std::getenv("ACRM_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  return cfg;
}

DatasetSplit load_split(const std::string& ann_path, const std::string& features_dir,
                        const std::vector<std::string>& vocabulary, bool strict) {
  LoadStats stats;
  auto records = load_annotations(ann_path, strict, &stats);
  DatasetSplit split = build_split(records, features_dir, vocabulary, &stats);
  if (stats.total() > 0)
    std::cerr << ann_path << ": " << stats.summary() << "\n";
  if (split.instances.empty())
    std::cerr << "warning: " << ann_path << " produced an empty split\n";
  return split;
}

int cmd_train(const std::string& config_path, const ConfigFlags& flags,
              const std::string& train_ann, const std::string& eval_ann,
              const std::string& features_dir, const std::string& embeddings_path,
              const std::string& out_path, const std::string& log_path, bool strict) {
  ModelConfig cfg = resolve_config(config_path, flags);
  LoadStats stats;
  auto train_records = load_annotations(train_ann, strict, &stats);
  auto vocabulary = build_vocabulary(train_records);
  DatasetSplit train_split = build_split(train_records, features_dir, vocabulary, &stats);
  if (stats.total() > 0) std::cerr << train_ann << ": " << stats.summary() << "\n";
  if (train_split.instances.empty()) throw DataError("train: empty training split");
  DatasetSplit eval_split = load_split(eval_ann, features_dir, vocabulary, strict);
  if (eval_split.instances.empty()) throw DataError("train: empty eval split");
  if (cfg.d_in == 0) cfg.d_in = train_split.d_in;
  if (cfg.d_in != train_split.d_in)
    throw DataError(cat("train: features have dim ", train_split.d_in,
                        " but the config says ", cfg.d_in));

  EmbeddingTable table =
      embeddings_path.empty()
          ? seeded_embeddings(vocabulary, cfg.embedding_dim, cfg.seed)
          : load_embeddings(embeddings_path, vocabulary, cfg.embedding_dim, cfg.seed);

  std::ofstream log_stream;
  TrainOptions opts;
  opts.progress = &std::cout;
  if (!log_path.empty()) {
    log_stream.open(log_path);
    if (!log_stream) throw DataError(cat("train: cannot write log ", log_path));
    opts.log_jsonl = &log_stream;
  }
  std::cout << "config: " << cfg.to_json().dump() << "\n";
  TrainResult result = train_model(cfg, std::move(table), train_split, eval_split, opts);
  save_checkpoint(out_path, result.best);
  std::cout << "best epoch " << result.best_epoch << " (mIoU " << result.best_miou
            << ") written to " << out_path << "\n";
  return 0;
}

json report_to_json(const EvalReport& report) {
  json j;
  json recalls = json::object();
  for (const RecallEntry& r : report.recalls)
    recalls[recall_label(r.n, r.threshold)] = r.percent;
  j["recalls"] = recalls;
  j["miou"] = report.miou;
  json records = json::array();
  for (const EvalRecord& r : report.records) {
    json e;
    e["pred"] = {r.pred.t_s, r.pred.t_e};
    e["gt"] = {r.gt_s, r.gt_e};
    e["score"] = r.pred.score;
    e["iou"] = r.iou;
    records.push_back(e);
  }
  j["records"] = records;
  return j;
}

int cmd_eval(const std::string& ckpt_path, const std::string& ann_path,
             const std::string& features_dir, std::vector<double> thresholds,
             int topk, const std::string& report_path, bool strict) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  DatasetSplit split = load_split(ann_path, features_dir, lc.model.embeddings.vocab, strict);
  if (split.instances.empty()) throw DataError("eval: empty split");
  if (split.d_in != lc.model.cfg.d_in)
    throw DataError(cat("eval: features have dim ", split.d_in,
                        " but the checkpoint expects ", lc.model.cfg.d_in));
  std::vector<int> n_list;
  for (int n = 1; n <= topk; ++n) n_list.push_back(n);
  std::vector<Real> m_list(thresholds.begin(), thresholds.end());
  EvalReport report = evaluate_model(lc.model, split, n_list, m_list, topk);

  for (const RecallEntry& r : report.recalls)
    std::cout << recall_label(r.n, r.threshold) << "  " << r.percent << "\n";
  std::cout << "mIoU  " << report.miou << "\n";
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw DataError(cat("eval: cannot write ", report_path));
    out << report_to_json(report).dump(2) << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& ann_path,
              const std::string& features_dir, const std::string& out_path,
              bool dump_scores, bool dump_attention, bool strict) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  LoadStats stats;
  auto records = load_annotations(ann_path, strict, &stats);
  std::ofstream out(out_path);
  if (!out) throw DataError(cat("infer: cannot write ", out_path));

  std::vector<std::string> vocab = lc.model.embeddings.vocab;
  std::unordered_map<std::string, Mat> cache;
  for (const AnnotationRecord& rec : records) {
    json line;
    line["video"] = rec.video;
    line["query"] = rec.query;
    try {
      auto it = cache.find(rec.video);
      if (it == cache.end())
        it = cache.emplace(rec.video, load_features(features_dir, rec.video)).first;
      Instance inst;
      inst.video_id = rec.video;
      inst.features = it->second;
      if (inst.features.cols() != lc.model.cfg.d_in)
        throw DataError(cat(rec.video, ": features have dim ", inst.features.cols(),
                            " but the checkpoint expects ", lc.model.cfg.d_in));
      inst.raw_query = rec.query;
      inst.duration = rec.duration;
      for (const std::string& w : tokenize(rec.query))
        inst.tokens.push_back(lc.model.embeddings.row_of(w));
      InstanceOutput o = infer_instance(lc.model, inst);
      BoundaryPrediction pred = infer_boundaries(o.logits.e_s, o.logits.e_e);
      line["pred_start_idx"] = pred.t_s;
      line["pred_end_idx"] = pred.t_e;
      line["pred_start_s"] = index_to_start_seconds(pred.t_s, inst.frames(), rec.duration);
      line["pred_end_s"] = index_to_end_seconds(pred.t_e, inst.frames(), rec.duration);
      line["score"] = pred.score;
      auto row = [](const Mat& m) {
        std::vector<double> v(m.data(), m.data() + m.size());
        return v;
      };
      if (dump_scores) {
        line["scores"] = {{"e_s", row(o.logits.e_s)}, {"e_e", row(o.logits.e_e)},
                          {"e_f", row(o.logits.e_f)}, {"p_s", row(o.p_s)},
                          {"p_e", row(o.p_e)},       {"p_f", row(o.p_f)}};
      }
      if (dump_attention && o.attention_weights.size() > 0) {
        json w = json::array();
        for (Index t = 0; t < o.attention_weights.rows(); ++t)
          w.push_back(row(o.attention_weights.row(t)));
        line["attention"] = w;
      }
    } catch (const DataError& e) {
      line["error"] = e.what();
    }
    out << line.dump() << "\n";
  }
  return 0;
}

int cmd_synth(const std::string& out_dir, SynthConfig& synth, long eval_count) {
  write_synthetic_dataset(out_dir, synth, eval_count);
  std::cout << "wrote " << synth.num_instances << " instances (" << eval_count
            << " eval) under " << out_dir << "\n";
  return 0;
}

int cmd_gradcheck(int trials, int max_coords, double tol) {
  GradSuiteOptions opts;
  opts.trials = trials;
  opts.max_coords = max_coords;
  opts.tol = tol;
  opts.progress = &std::cout;
  GradSuiteResult res = run_gradcheck_suite(opts);
  std::cout << (res.ok ? "gradcheck passed" : "gradcheck FAILED") << " (worst "
            << res.worst << " over " << res.coords_checked << " coordinates)\n";
  return res.ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal moment retrieval: training, evaluation, inference"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  std::string config_path, train_ann, eval_ann, features_dir, embeddings_path;
  std::string out_path = "model.ckpt", log_path;
  bool strict = false;
  ConfigFlags flags;
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--train", train_ann, "Training annotations (JSON lines)")->required();
  train->add_option("--eval", eval_ann, "Eval annotations (JSON lines)")->required();
  train->add_option("--features", features_dir, "Feature directory")->required();
  train->add_option("--embeddings", embeddings_path, "Embedding text file");
  train->add_option("--out", out_path, "Checkpoint output path");
  train->add_option("--log", log_path, "Per-epoch JSON-lines log");
  train->add_flag("--strict", strict, "Fail on malformed annotation lines");
  add_config_flags(train, flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (R@n/IoU table)");
  std::string ckpt_path, ann_path, report_path = "eval_report.json";
  std::vector<double> thresholds = {0.3, 0.5, 0.7};
  int topk = 1;
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  eval_cmd->add_option("--ann", ann_path, "Annotations (JSON lines)")->required();
  eval_cmd->add_option("--features", features_dir, "Feature directory")->required();
  eval_cmd->add_option("--iou", thresholds, "IoU thresholds")->delimiter(',');
  eval_cmd->add_option("--topk", topk, "Retrieval depth (R@1..R@topk)");
  eval_cmd->add_option("--report", report_path, "EvalReport JSON output path");
  eval_cmd->add_flag("--strict", strict, "Fail on malformed annotation lines");

  // infer
  auto* infer = app.add_subcommand("infer", "Write per-instance predictions");
  std::string infer_out = "predictions.jsonl";
  bool dump_scores = false, dump_attention = false;
  infer->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  infer->add_option("--ann", ann_path, "Annotations (JSON lines)")->required();
  infer->add_option("--features", features_dir, "Feature directory")->required();
  infer->add_option("--out", infer_out, "Predictions JSON-lines path");
  infer->add_flag("--dump-scores", dump_scores, "Include per-frame logits and softmaxes");
  infer->add_flag("--dump-attention", dump_attention, "Include frame-by-word weights");
  infer->add_flag("--strict", strict, "Fail on malformed annotation lines");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  SynthConfig synth;
  long eval_count = 100;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--num", synth.num_instances, "Total instances");
  synth_cmd->add_option("--eval-num", eval_count, "Instances reserved for eval.jsonl");
  synth_cmd->add_option("--t-min", synth.t_min, "Minimum frame count");
  synth_cmd->add_option("--t-max", synth.t_max, "Maximum frame count");
  synth_cmd->add_option("--d-in", synth.d_in, "Feature dimension");
  synth_cmd->add_option("--vocab", synth.vocab_size, "Vocabulary size");
  synth_cmd->add_option("--moment-min", synth.moment_min_frac, "Min moment length fraction");
  synth_cmd->add_option("--moment-max", synth.moment_max_frac, "Max moment length fraction");
  synth_cmd->add_option("--signal", synth.signal, "Planted signal strength");
  synth_cmd->add_option("--noise", synth.noise_std, "Noise standard deviation");
  synth_cmd->add_option("--query-len-min", synth.query_len_min, "Min query length");
  synth_cmd->add_option("--query-len-max", synth.query_len_max, "Max query length");
  synth_cmd->add_option("--embed-dim", synth.embedding_dim, "Embedding dimension");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of all variants");
  int trials = 20, max_coords = 60;
  double tol = 1e-4;
  grad->add_option("--trials", trials, "Random instances per variant");
  grad->add_option("--coords", max_coords, "Sampled coordinates per instance");
  grad->add_option("--tol", tol, "Max relative error accepted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message; 0 for --help
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train)
      return cmd_train(config_path, flags, train_ann, eval_ann, features_dir,
                       embeddings_path, out_path, log_path, strict);
    if (*eval_cmd)
      return cmd_eval(ckpt_path, ann_path, features_dir, thresholds, topk, report_path,
                      strict);
    if (*infer)
      return cmd_infer(ckpt_path, ann_path, features_dir, infer_out, dump_scores,
                       dump_attention, strict);
    if (*synth_cmd) return cmd_synth(synth_out, synth, eval_count);
    if (*grad) return cmd_gradcheck(trials, max_coords, tol);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
