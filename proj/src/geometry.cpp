#include "selfpace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace selfpace {

bool box_valid(const BBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && b.w > 0.0 && b.h > 0.0 &&
         b.score >= 0.0 && b.score <= 1.0;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (area(a) + area(b) - inter);
}

namespace {

bool same_coords(const BBox& a, const BBox& b) {
  return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h;
}

}  // namespace

std::vector<BBox> nms(const std::vector<BBox>& boxes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw std::invalid_argument("nms: iou threshold must lie in (0,1)");

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (boxes[a].score != boxes[b].score) return boxes[a].score > boxes[b].score;
    return a < b;
  });

  std::vector<BBox> kept;
  kept.reserve(boxes.size());
  for (std::size_t idx : order) {
    const BBox& cand = boxes[idx];
    bool suppressed = false;
    for (const BBox& k : kept) {
      if (is_ground_truth_score(k.score) && is_ground_truth_score(cand.score)) {
        // ground-truth boxes only eliminate exact duplicates of themselves
        if (same_coords(k, cand)) {
          suppressed = true;
          break;
        }
        continue;
      }
      if (iou(k, cand) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace selfpace
