#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "selfpace/dataset.hpp"
#include "selfpace/geometry.hpp"

namespace selfpace {

struct BoxMatch {
  int pred_index = -1;
  int gt_index = -1;
  double iou = 0.0;
};

/// Per-page matching detail, retained for audit.
struct PageMatch {
  std::string page_id;
  std::vector<double> pred_scores;        // score per prediction index
  std::vector<BoxMatch> true_positives;   // one-to-one pred/gt pairs
  std::vector<int> false_positive_preds;  // unmatched prediction indices
  std::vector<int> false_negative_gts;    // unmatched ground-truth indices
};

/// Greedy one-to-one matching: predictions in descending score order (ties by
/// lower index), each taking the highest-IoU still-unmatched ground-truth box
/// with IoU >= iou_threshold.
PageMatch match_page(const std::string& page_id, const std::vector<BBox>& predictions,
                     const std::vector<BBox>& ground_truth, double iou_threshold);

/// Area under the precision envelope of the global score-ordered sweep
/// (all-point interpolation). Throws DataError when there is no ground truth.
double average_precision(const std::vector<PageMatch>& matches);

/// Mean over ground-truth boxes of the IoU with their matched prediction;
/// unmatched ground truth counts as 0. Throws DataError when there is no
/// ground truth.
double mean_iou(const std::vector<PageMatch>& matches);

struct EvalResult {
  double ap = 0.0;
  double miou = 0.0;
  std::vector<PageMatch> matches;
};

/// Matches `predictions` (keyed by page id) against the corpus annotations.
/// Predictions for page ids absent from the corpus raise DataError.
EvalResult evaluate_predictions(const std::map<std::string, std::vector<BBox>>& predictions,
                                const Corpus& ground_truth, double iou_threshold);

// ---- Table-style reporting

struct EvalRow {
  std::string regime;
  std::string iteration;  // "-" for single-shot regimes
  double ap_percent = 0.0;
  double mean_iou_percent = 0.0;
};

/// CSV with columns regime,iteration,ap_percent,mean_iou_percent and two
/// decimal places. Throws DataError on empty input or empty regime labels.
std::string report_csv(const std::vector<EvalRow>& rows);

/// Aligned fixed-width text table of the same rows.
std::string report_table(const std::vector<EvalRow>& rows);

/// SVG line chart of AP per iteration, one polyline per regime.
std::string report_svg(const std::vector<EvalRow>& rows);

/// Writes report.csv, report.txt and report.svg under `dir`.
void write_report_files(const std::vector<EvalRow>& rows, const std::filesystem::path& dir);

}  // namespace selfpace
