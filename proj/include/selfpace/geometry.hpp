#pragma once

#include <vector>

namespace selfpace {

/// Axis-aligned box. (x, y) is the top-left corner in pixels, y grows
/// downward; w and h are strictly positive; score is a confidence in [0,1].
/// A score of exactly 1 marks a ground-truth box.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 1.0;
};

constexpr double kGroundTruthScore = 1.0;

inline bool is_ground_truth_score(double score) { return score == kGroundTruthScore; }

inline double area(const BBox& b) { return b.w * b.h; }

bool box_valid(const BBox& b);

/// Intersection over union on continuous pixel areas. Symmetric, 0 for
/// disjoint boxes, 1 iff the boxes coincide.
double iou(const BBox& a, const BBox& b);

/// Greedy non-maximum suppression in descending score order (ties broken by
/// lower input index). A box is dropped iff a previously kept box overlaps it
/// with IoU >= iou_threshold. Score-1 boxes never suppress one another unless
/// they have identical coordinates (the earlier one wins), so every unique
/// ground-truth box survives. Kept boxes are returned unchanged, in
/// suppression order. Throws std::invalid_argument unless 0 < iou_threshold < 1.
std::vector<BBox> nms(const std::vector<BBox>& boxes, double iou_threshold);

}  // namespace selfpace
