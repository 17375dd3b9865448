#pragma once

// Temporal IoU and the standard "R@n, IoU=m" / mIoU moment-retrieval
// metrics. Frame-index intervals use half-open spans [s, e+1) so a
// single-frame moment has length 1.

#include "acrm/common.hpp"
#include "acrm/prediction.hpp"

#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace acrm {

// Continuous spans [s1, e1] vs [s2, e2]; 0 when disjoint.
Real iou_span(Real s1, Real e1, Real s2, Real e2);

// Frame-index intervals, half-open convention.
inline Real iou_frames(int s1, int e1, int s2, int e2) {
  return iou_span(static_cast<Real>(s1), static_cast<Real>(e1) + 1,
                  static_cast<Real>(s2), static_cast<Real>(e2) + 1);
}

// Short label like "R@1,IoU=0.3" (default stream precision, not 17 digits).
inline std::string recall_label(int n, Real threshold) {
  std::ostringstream os;
  os << "R@" << n << ",IoU=" << threshold;
  return os.str();
}

struct RecallEntry {
  int n = 1;
  Real threshold = 0;
  Real percent = 0;  // in [0, 100]
};

struct EvalRecord {
  BoundaryPrediction pred;  // top-1
  int gt_s = 0, gt_e = 0;
  Real iou = 0;
};

struct EvalReport {
  std::vector<RecallEntry> recalls;
  Real miou = 0;  // mean top-1 IoU, in [0, 1]
  std::vector<EvalRecord> records;

  Real recall(int n, Real threshold) const;
};

// R@n,IoU=m counts instances whose top-n predictions include one with IoU
// strictly larger than m. Throws on an empty prediction set.
EvalReport evaluate(const std::vector<std::vector<BoundaryPrediction>>& topk,
                    const std::vector<std::pair<int, int>>& ground_truths,
                    std::span<const int> n_list, std::span<const Real> m_list);

}  // namespace acrm
