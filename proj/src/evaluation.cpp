#include "selfpace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "selfpace/errors.hpp"

namespace selfpace {

PageMatch match_page(const std::string& page_id, const std::vector<BBox>& predictions,
                     const std::vector<BBox>& ground_truth, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw std::invalid_argument("match_page: iou threshold must lie in (0,1)");

  PageMatch pm;
  pm.page_id = page_id;
  pm.pred_scores.reserve(predictions.size());
  for (const auto& p : predictions) pm.pred_scores.push_back(p.score);

  std::vector<int> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (predictions[a].score != predictions[b].score)
      return predictions[a].score > predictions[b].score;
    return a < b;
  });

  std::vector<bool> gt_taken(ground_truth.size(), false);
  std::vector<bool> pred_matched(predictions.size(), false);
  for (int pi : order) {
    double best = 0.0;
    int best_gt = -1;
    for (int gi = 0; gi < static_cast<int>(ground_truth.size()); ++gi) {
      if (gt_taken[gi]) continue;
      const double v = iou(predictions[pi], ground_truth[gi]);
      if (v > best) {
        best = v;
        best_gt = gi;
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) {
      gt_taken[best_gt] = true;
      pred_matched[pi] = true;
      pm.true_positives.push_back({pi, best_gt, best});
    }
  }
  for (int pi = 0; pi < static_cast<int>(predictions.size()); ++pi)
    if (!pred_matched[pi]) pm.false_positive_preds.push_back(pi);
  for (int gi = 0; gi < static_cast<int>(ground_truth.size()); ++gi)
    if (!gt_taken[gi]) pm.false_negative_gts.push_back(gi);
  return pm;
}

namespace {

struct SweepEntry {
  double score;
  const std::string* page_id;
  int pred_index;
  bool is_tp;
};

std::size_t total_ground_truth(const std::vector<PageMatch>& matches) {
  std::size_t n = 0;
  for (const auto& pm : matches)
    n += pm.true_positives.size() + pm.false_negative_gts.size();
  return n;
}

std::vector<SweepEntry> global_sweep(const std::vector<PageMatch>& matches) {
  std::vector<SweepEntry> entries;
  for (const auto& pm : matches) {
    std::vector<bool> tp(pm.pred_scores.size(), false);
    for (const auto& m : pm.true_positives) tp[static_cast<std::size_t>(m.pred_index)] = true;
    for (int pi = 0; pi < static_cast<int>(pm.pred_scores.size()); ++pi)
      entries.push_back({pm.pred_scores[static_cast<std::size_t>(pi)], &pm.page_id, pi,
                         tp[static_cast<std::size_t>(pi)]});
  }
  std::sort(entries.begin(), entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (*a.page_id != *b.page_id) return *a.page_id < *b.page_id;
    return a.pred_index < b.pred_index;
  });
  return entries;
}

}  // namespace

double average_precision(const std::vector<PageMatch>& matches) {
  const std::size_t n_gt = total_ground_truth(matches);
  if (n_gt == 0) throw DataError("average_precision: no ground-truth boxes");

  const auto entries = global_sweep(matches);
  if (entries.empty()) return 0.0;

  std::vector<double> precision(entries.size()), recall(entries.size());
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].is_tp ? ++tp : ++fp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  // precision envelope: max precision at any recall >= r
  for (std::size_t i = entries.size() - 1; i-- > 0;)
    precision[i] = std::max(precision[i], precision[i + 1]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

double mean_iou(const std::vector<PageMatch>& matches) {
  const std::size_t n_gt = total_ground_truth(matches);
  if (n_gt == 0) throw DataError("mean_iou: no ground-truth boxes");
  double sum = 0.0;
  for (const auto& pm : matches)
    for (const auto& m : pm.true_positives) sum += m.iou;
  return sum / static_cast<double>(n_gt);
}

EvalResult evaluate_predictions(const std::map<std::string, std::vector<BBox>>& predictions,
                                const Corpus& ground_truth, double iou_threshold) {
  for (const auto& [id, boxes] : predictions)
    if (!ground_truth.find(id)) throw DataError("predictions for unknown page id: " + id);

  EvalResult result;
  static const std::vector<BBox> kNoPredictions;
  for (const auto& page : ground_truth.pages) {
    std::vector<BBox> gt;
    for (const auto& ab : page.boxes) gt.push_back(ab.box);
    const auto it = predictions.find(page.page.id);
    const auto& preds = it == predictions.end() ? kNoPredictions : it->second;
    result.matches.push_back(match_page(page.page.id, preds, gt, iou_threshold));
  }
  result.ap = average_precision(result.matches);
  result.miou = mean_iou(result.matches);
  return result;
}

// ---- reporting

namespace {

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void check_rows(const std::vector<EvalRow>& rows) {
  if (rows.empty()) throw DataError("report: no rows");
  for (const auto& r : rows) {
    if (r.regime.empty()) throw DataError("report: empty regime label");
    if (r.iteration.empty()) throw DataError("report: empty iteration label");
  }
}

}  // namespace

std::string report_csv(const std::vector<EvalRow>& rows) {
  check_rows(rows);
  std::ostringstream out;
  out << "regime,iteration,ap_percent,mean_iou_percent\n";
  for (const auto& r : rows)
    out << r.regime << "," << r.iteration << "," << format_percent(r.ap_percent) << ","
        << format_percent(r.mean_iou_percent) << "\n";
  return out.str();
}

std::string report_table(const std::vector<EvalRow>& rows) {
  check_rows(rows);
  std::size_t regime_w = std::string("Regime").size();
  std::size_t iter_w = std::string("Iteration").size();
  for (const auto& r : rows) {
    regime_w = std::max(regime_w, r.regime.size());
    iter_w = std::max(iter_w, r.iteration.size());
  }
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  auto lpad = [](const std::string& s, std::size_t w) {
    return std::string(w - std::min(w, s.size()), ' ') + s;
  };
  out << pad("Regime", regime_w) << "  " << pad("Iteration", iter_w) << "  "
      << lpad("AP", 8) << "  " << lpad("Mean IoU", 8) << "\n";
  out << std::string(regime_w + iter_w + 24, '-') << "\n";
  for (const auto& r : rows)
    out << pad(r.regime, regime_w) << "  " << pad(r.iteration, iter_w) << "  "
        << lpad(format_percent(r.ap_percent), 8) << "  "
        << lpad(format_percent(r.mean_iou_percent), 8) << "\n";
  return out.str();
}

std::string report_svg(const std::vector<EvalRow>& rows) {
  check_rows(rows);

  // group rows by regime, preserving first-appearance order
  std::vector<std::string> regimes;
  std::map<std::string, std::vector<const EvalRow*>> by_regime;
  for (const auto& r : rows) {
    if (!by_regime.count(r.regime)) regimes.push_back(r.regime);
    by_regime[r.regime].push_back(&r);
  }
  std::size_t max_points = 1;
  for (const auto& name : regimes)
    max_points = std::max(max_points, by_regime[name].size());

  const double width = 640, height = 420;
  const double left = 60, right = 200, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto x_of = [&](std::size_t i) {
    return max_points == 1 ? left + plot_w / 2
                           : left + plot_w * static_cast<double>(i) /
                                 static_cast<double>(max_points - 1);
  };
  auto y_of = [&](double ap) { return top + plot_h * (1.0 - ap / 100.0); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = y_of(tick);
    out << "  <line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    out << "  <text x=\"" << left - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << tick
        << "</text>\n";
  }
  out << "  <text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
         "iteration</text>\n";
  out << "  <text x=\"16\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\">AP (%)</text>\n";

  int color_idx = 0;
  double legend_y = top + 10;
  for (const auto& name : regimes) {
    const auto& regime_rows = by_regime[name];
    const char* color = kColors[color_idx++ % 8];
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < regime_rows.size(); ++i) {
      if (i) out << " ";
      out << x_of(i) << "," << y_of(regime_rows[i]->ap_percent);
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < regime_rows.size(); ++i)
      out << "  <circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(regime_rows[i]->ap_percent)
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "  <text x=\"" << left + plot_w + 12 << "\" y=\"" << legend_y
        << "\" font-size=\"11\" font-family=\"sans-serif\" fill=\"" << color << "\">" << name
        << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
  return out.str();
}

void write_report_files(const std::vector<EvalRow>& rows, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError(std::string("cannot write report file: ") + name);
    out << text;
  };
  write("report.csv", report_csv(rows));
  write("report.txt", report_table(rows));
  write("report.svg", report_svg(rows));
}

}  // namespace selfpace
