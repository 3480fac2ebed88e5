#pragma once

// Independent reference implementations the test suites check the library
// against. Everything here is written from the definitions, favoring literal
// transcription over efficiency, and must not call into the library (except
// where a test explicitly wants the library's own building block).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "selfpace/geometry.hpp"

namespace oracles {

// ---- IoU by brute-force pixel counting (integer-coordinate boxes only)

inline double iou_by_pixel_count(const selfpace::BBox& a, const selfpace::BBox& b,
                                 int grid = 64) {
  long long inter = 0, uni = 0;
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      const bool in_a = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
      const bool in_b = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- IoU from the definition (used by the replay oracles below)

inline double iou_ref(const selfpace::BBox& a, const selfpace::BBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// ---- Greedy suppression, replayed literally from the rule text

inline std::vector<selfpace::BBox> nms_replay(const std::vector<selfpace::BBox>& boxes,
                                              double threshold) {
  // visit order: score descending, earlier input index wins ties
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return boxes[l].score > boxes[r].score;
  });

  std::vector<selfpace::BBox> kept;
  for (std::size_t idx : order) {
    const selfpace::BBox& cand = boxes[idx];
    bool removed = false;
    for (const selfpace::BBox& k : kept) {
      if (k.score == 1.0 && cand.score == 1.0) {
        // a ground-truth box may only remove an exact coordinate duplicate
        removed = k.x == cand.x && k.y == cand.y && k.w == cand.w && k.h == cand.h;
        if (removed) break;
        continue;
      }
      if (iou_ref(k, cand) >= threshold) {
        removed = true;
        break;
      }
    }
    if (!removed) kept.push_back(cand);
  }
  return kept;
}

// ---- Greedy one-to-one matching and the from-definition AP sweep

struct MatchedPage {
  std::string page_id;
  std::vector<double> scores;  // one per prediction, input order
  std::vector<bool> is_tp;     // one per prediction, input order
  std::size_t n_gt = 0;
};

inline MatchedPage match_replay(const std::string& page_id,
                                const std::vector<selfpace::BBox>& preds,
                                const std::vector<selfpace::BBox>& gts,
                                double threshold) {
  MatchedPage out;
  out.page_id = page_id;
  out.n_gt = gts.size();
  out.is_tp.assign(preds.size(), false);
  for (const auto& p : preds) out.scores.push_back(p.score);

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return preds[l].score > preds[r].score;
  });

  std::vector<bool> taken(gts.size(), false);
  for (std::size_t pi : order) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double v = iou_ref(preds[pi], gts[gi]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0 && best >= threshold) {
      taken[static_cast<std::size_t>(best_gt)] = true;
      out.is_tp[pi] = true;
    }
  }
  return out;
}

/// All-point-interpolated AP over the global sweep: sort every prediction by
/// (score desc, page id asc, input index asc), accumulate precision/recall,
/// take the running-max precision envelope from the right, and sum the
/// envelope over recall increments.
inline double average_precision_sweep(const std::vector<MatchedPage>& pages) {
  std::size_t n_gt = 0;
  for (const auto& p : pages) n_gt += p.n_gt;

  struct Entry {
    double score;
    const std::string* page;
    int index;
    bool tp;
  };
  std::vector<Entry> entries;
  for (const auto& p : pages)
    for (std::size_t i = 0; i < p.scores.size(); ++i)
      entries.push_back({p.scores[i], &p.page_id, static_cast<int>(i), p.is_tp[i]});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (*a.page != *b.page) return *a.page < *b.page;
    return a.index < b.index;
  });
  if (entries.empty()) return 0.0;

  std::vector<double> prec(entries.size()), rec(entries.size());
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].tp ? ++tp : ++fp;
    prec[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    rec[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t i = entries.size() - 1; i-- > 0;)
    prec[i] = std::max(prec[i], prec[i + 1]);

  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (rec[i] > prev) {
      ap += (rec[i] - prev) * prec[i];
      prev = rec[i];
    }
  }
  return ap;
}

// ---- Central finite differences for any loss(params) functional

template <typename LossFn>
Eigen::VectorXd finite_difference_gradient(const LossFn& loss,
                                           const Eigen::VectorXd& params,
                                           double h = 1e-6) {
  Eigen::VectorXd grad(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    Eigen::VectorXd hi = params, lo = params;
    hi(i) += h;
    lo(i) -= h;
    grad(i) = (loss(hi) - loss(lo)) / (2.0 * h);
  }
  return grad;
}

// ---- Spearman rank correlation (average ranks for ties)

inline std::vector<double> fractional_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  const auto rx = fractional_ranks(xs);
  const auto ry = fractional_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

// ---- Random-case helpers shared by the property suites

inline selfpace::BBox random_box(std::mt19937_64& rng, double extent = 40.0,
                                 bool integer_coords = false) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> len(1.0, extent / 2.0);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  selfpace::BBox b{pos(rng), pos(rng), len(rng), len(rng), score(rng)};
  if (integer_coords) {
    b.x = std::floor(b.x);
    b.y = std::floor(b.y);
    b.w = std::floor(b.w) + 1.0;
    b.h = std::floor(b.h) + 1.0;
  }
  return b;
}

}  // namespace oracles
