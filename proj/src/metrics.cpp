#include "acrm/metrics.hpp"

#include <algorithm>

namespace acrm {

Real iou_span(Real s1, Real e1, Real s2, Real e2) {
  const Real inter = std::min(e1, e2) - std::max(s1, s2);
  if (inter <= 0) return 0;
  const Real uni = (e1 - s1) + (e2 - s2) - inter;
  return uni > 0 ? inter / uni : 0;
}

Real EvalReport::recall(int n, Real threshold) const {
  for (const RecallEntry& r : recalls)
    if (r.n == n && r.threshold == threshold) return r.percent;
  throw std::invalid_argument(cat("report has no R@", n, ",IoU=", threshold));
}

EvalReport evaluate(const std::vector<std::vector<BoundaryPrediction>>& topk,
                    const std::vector<std::pair<int, int>>& ground_truths,
                    std::span<const int> n_list, std::span<const Real> m_list) {
  if (topk.empty()) throw std::invalid_argument("evaluate: empty prediction set");
  if (topk.size() != ground_truths.size())
    throw std::invalid_argument(cat("evaluate: ", topk.size(), " predictions vs ",
                                    ground_truths.size(), " ground truths"));
  const auto count = topk.size();
  EvalReport report;
  report.records.reserve(count);

  // Per-instance IoUs in retrieval order.
  std::vector<std::vector<Real>> ious(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (topk[i].empty())
      throw std::invalid_argument(cat("evaluate: instance ", i, " has no predictions"));
    const auto [gs, ge] = ground_truths[i];
    ious[i].reserve(topk[i].size());
    for (const BoundaryPrediction& p : topk[i])
      ious[i].push_back(iou_frames(p.t_s, p.t_e, gs, ge));
    report.records.push_back({topk[i][0], gs, ge, ious[i][0]});
    report.miou += ious[i][0];
  }
  report.miou /= static_cast<Real>(count);

  for (int n : n_list) {
    if (n < 1) throw std::invalid_argument(cat("evaluate: n=", n, " < 1"));
    for (Real m : m_list) {
      long hits = 0;
      for (std::size_t i = 0; i < count; ++i) {
        const auto depth = std::min<std::size_t>(static_cast<std::size_t>(n), ious[i].size());
        bool hit = false;
        for (std::size_t j = 0; j < depth; ++j) hit = hit || ious[i][j] > m;
        hits += hit ? 1 : 0;
      }
      report.recalls.push_back(
          {n, m, 100.0 * static_cast<Real>(hits) / static_cast<Real>(count)});
    }
  }
  return report;
}

}  // namespace acrm
