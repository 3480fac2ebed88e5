#include "selfpace/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "selfpace/errors.hpp"
#include "selfpace/random.hpp"

namespace selfpace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (cfg.epochs_per_iter < 1)
    throw std::invalid_argument("epochs_per_iter must be at least 1");
  if (cfg.max_total_epochs < 1)
    throw std::invalid_argument("max_total_epochs must be at least 1");
  if (cfg.patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (cfg.patience > cfg.epochs_per_iter)
    throw std::invalid_argument("patience must not exceed epochs_per_iter");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (cfg.init_std < 0.0) throw std::invalid_argument("init_std must be non-negative");
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

float page_median(const PageImage& page) {
  std::vector<float> values(page.pixels.data(),
                            page.pixels.data() + page.pixels.size());
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  return values[mid];
}

void require_pixels(const PageImage& page) {
  if (!page.has_pixels())
    throw DataError("page '" + page.id + "' has no pixel data to featurize");
}

}  // namespace

namespace scanline {

Eigen::MatrixXd features(const PageImage& page) {
  require_pixels(page);
  const int h = page.height;
  const int w = page.width;
  const float median = page_median(page);

  Eigen::MatrixXd feats(h, kFeatureCount);
  for (int y = 0; y < h; ++y) {
    const auto row = page.pixels.row(y);
    const double mean = row.cast<double>().mean();
    const double var = row.cast<double>().square().mean() - mean * mean;
    const double grad =
        y == 0 ? 0.0
               : (row.cast<double>() - page.pixels.row(y - 1).cast<double>())
                     .abs()
                     .mean();
    const double dark = static_cast<double>((row < median).count()) / w;
    feats(y, 0) = mean;
    feats(y, 1) = std::sqrt(std::max(var, 0.0));
    feats(y, 2) = grad;
    feats(y, 3) = dark;
  }
  return feats;
}

Eigen::VectorXd labels(const AnnotatedPage& page) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(page.page.height);
  for (int y = 0; y < page.page.height; ++y) {
    const double center = y + 0.5;
    for (const AnnotatedBox& ab : page.boxes) {
      if (center >= ab.box.y && center < ab.box.y + ab.box.h) {
        out(y) = 1.0;
        break;
      }
    }
  }
  return out;
}

namespace {

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& params) {
  if (params.size() != X.cols() + 1)
    throw std::invalid_argument("params must hold one weight per feature plus a bias");
  if (y.size() != X.rows())
    throw std::invalid_argument("labels must match the number of feature rows");
  if (X.rows() == 0) throw std::invalid_argument("need at least one sample");
}

}  // namespace

double bce_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                const Eigen::VectorXd& params) {
  check_shapes(X, y, params);
  const Eigen::VectorXd z =
      (X * params.head(params.size() - 1)).array() + params(params.size() - 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    total += std::max(z(i), 0.0) - z(i) * y(i) + std::log1p(std::exp(-std::abs(z(i))));
  }
  return total / static_cast<double>(z.size());
}

Eigen::VectorXd bce_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& params) {
  check_shapes(X, y, params);
  const Eigen::Index n = X.rows();
  Eigen::VectorXd delta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    delta(i) = sigmoid(X.row(i).dot(params.head(params.size() - 1)) +
                       params(params.size() - 1)) -
               y(i);
  }
  Eigen::VectorXd grad(params.size());
  grad.head(params.size() - 1) = X.transpose() * delta / static_cast<double>(n);
  grad(params.size() - 1) = delta.mean();
  return grad;
}

}  // namespace scanline

// ---- LogisticScanlineDetector

LogisticScanlineDetector::LogisticScanlineDetector(std::uint64_t seed,
                                                   double init_std,
                                                   ScanlineModelConfig cfg)
    : params_(Eigen::VectorXd::Zero(scanline::kFeatureCount + 1)),
      feat_mean_(Eigen::VectorXd::Zero(scanline::kFeatureCount)),
      feat_std_(Eigen::VectorXd::Ones(scanline::kFeatureCount)),
      rng_(seed),
      cfg_(cfg) {
  if (init_std < 0.0) throw std::invalid_argument("init_std must be non-negative");
  if (!(cfg_.prob_cutoff > 0.0 && cfg_.prob_cutoff < 1.0))
    throw std::invalid_argument("prob_cutoff must lie in (0, 1)");
  if (cfg_.min_run_height < 1)
    throw std::invalid_argument("min_run_height must be at least 1");
  if (init_std > 0.0) {
    std::normal_distribution<double> init(0.0, init_std);
    for (Eigen::Index i = 0; i < params_.size(); ++i) params_(i) = init(rng_);
  }
}

Eigen::MatrixXd LogisticScanlineDetector::standardized_features(
    const PageImage& page) const {
  Eigen::MatrixXd X = scanline::features(page);
  X.rowwise() -= feat_mean_.transpose();
  X.array().rowwise() /= feat_std_.transpose().array();
  return X;
}

namespace {

struct Assembled {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Assembled assemble_raw(const std::vector<const AnnotatedPage*>& pages) {
  if (pages.empty()) throw TrainError("cannot train on an empty page list");
  Eigen::Index total = 0;
  for (const AnnotatedPage* p : pages) total += p->page.height;
  Assembled out;
  out.X.resize(total, scanline::kFeatureCount);
  out.y.resize(total);
  Eigen::Index at = 0;
  for (const AnnotatedPage* p : pages) {
    out.X.middleRows(at, p->page.height) = scanline::features(p->page);
    out.y.segment(at, p->page.height) = scanline::labels(*p);
    at += p->page.height;
  }
  return out;
}

}  // namespace

void LogisticScanlineDetector::train(const std::vector<const AnnotatedPage*>& pages,
                                     const TrainConfig& cfg,
                                     std::vector<double>* loss_trace) {
  validate_config(cfg);
  if (loss_trace) loss_trace->clear();

  Assembled data = assemble_raw(pages);
  feat_mean_ = data.X.colwise().mean();
  for (Eigen::Index c = 0; c < data.X.cols(); ++c) {
    const double var =
        (data.X.col(c).array() - feat_mean_(c)).square().mean();
    feat_std_(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  data.X.rowwise() -= feat_mean_.transpose();
  data.X.array().rowwise() /= feat_std_.transpose().array();

  const int budget = std::min(cfg.epochs_per_iter, cfg.max_total_epochs - total_epochs_);
  if (budget <= 0) return;

  const Eigen::Index n = data.X.rows();
  const int steps_per_epoch =
      static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Eigen::VectorXd grad(params_.size());
  for (int epoch = 0; epoch < budget; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      grad.setZero();
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Eigen::Index i = pick(rng_);
        const double delta =
            sigmoid(data.X.row(i).dot(params_.head(4)) + params_(4)) - data.y(i);
        grad.head(4) += delta * data.X.row(i).transpose();
        grad(4) += delta;
      }
      params_ -= cfg.learning_rate / cfg.batch_size * grad;
    }
    ++total_epochs_;
    const double loss = scanline::bce_loss(data.X, data.y, params_);
    if (!std::isfinite(loss))
      throw TrainError("training diverged: non-finite loss at epoch " +
                       std::to_string(total_epochs_));
    if (loss_trace) loss_trace->push_back(loss);
    if (loss < best) {
      best = loss;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
}

double LogisticScanlineDetector::mean_loss(
    const std::vector<const AnnotatedPage*>& pages) const {
  if (pages.empty()) throw TrainError("cannot compute loss on an empty page list");
  double total = 0.0;
  Eigen::Index count = 0;
  for (const AnnotatedPage* p : pages) {
    const Eigen::MatrixXd X = standardized_features(p->page);
    const Eigen::VectorXd y = scanline::labels(*p);
    total += scanline::bce_loss(X, y, params_) * static_cast<double>(X.rows());
    count += X.rows();
  }
  return total / static_cast<double>(count);
}

std::vector<BBox> LogisticScanlineDetector::predict(const PageImage& page) const {
  require_pixels(page);
  const Eigen::MatrixXd X = standardized_features(page);
  const int h = page.height;
  const int w = page.width;

  Eigen::VectorXd prob(h);
  for (int y = 0; y < h; ++y)
    prob(y) = sigmoid(X.row(y).dot(params_.head(4)) + params_(4));

  const float median = page_median(page);
  std::vector<BBox> boxes;
  int run_start = -1;
  for (int y = 0; y <= h; ++y) {
    const bool pos = y < h && prob(y) > cfg_.prob_cutoff;
    if (pos && run_start < 0) run_start = y;
    if (!pos && run_start >= 0) {
      const int run_h = y - run_start;
      if (run_h >= cfg_.min_run_height) {
        const Eigen::ArrayXf col_means =
            page.pixels.block(run_start, 0, run_h, w).colwise().mean();
        int c0 = -1, c1 = -1;
        for (int c = 0; c < w; ++c) {
          if (col_means(c) < median) {
            if (c0 < 0) c0 = c;
            c1 = c;
          }
        }
        BBox box;
        box.y = run_start;
        box.h = run_h;
        box.x = c0 < 0 ? 0.0 : c0;
        box.w = c0 < 0 ? w : c1 - c0 + 1;
        box.score = std::min(prob.segment(run_start, run_h).mean(), 1.0 - 1e-9);
        boxes.push_back(box);
      }
      run_start = -1;
    }
  }
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const BBox& a, const BBox& b) { return a.score > b.score; });
  return boxes;
}

std::vector<std::vector<BBox>> LogisticScanlineDetector::predict_pages(
    const std::vector<const AnnotatedPage*>& pages) const {
  std::vector<std::vector<BBox>> out;
  out.reserve(pages.size());
  for (const AnnotatedPage* p : pages) out.push_back(predict(p->page));
  return out;
}

nlohmann::ordered_json LogisticScanlineDetector::checkpoint() const {
  ordered_json j;
  j["kind"] = "logistic-scanline";
  j["prob_cutoff"] = cfg_.prob_cutoff;
  j["min_run_height"] = cfg_.min_run_height;
  j["total_epochs"] = total_epochs_;
  j["params"] = std::vector<double>(params_.data(), params_.data() + params_.size());
  j["feature_mean"] =
      std::vector<double>(feat_mean_.data(), feat_mean_.data() + feat_mean_.size());
  j["feature_std"] =
      std::vector<double>(feat_std_.data(), feat_std_.data() + feat_std_.size());
  return j;
}

// ---- oracle detector

std::vector<BBox> oracle_predict(const std::vector<BBox>& true_boxes,
                                 const OracleSkill& skill, std::uint64_t seed,
                                 int page_width, int page_height) {
  if (!(skill.recall >= 0.0 && skill.recall <= 1.0))
    throw std::invalid_argument("recall must lie in [0, 1]");
  if (!(skill.precision >= 0.0 && skill.precision <= 1.0))
    throw std::invalid_argument("precision must lie in [0, 1]");
  if (!(skill.jitter >= 0.0)) throw std::invalid_argument("jitter must be non-negative");
  if (page_width < 1 || page_height < 1)
    throw std::invalid_argument("page dimensions must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> score(0.6, 0.95);
  const double W = page_width;
  const double H = page_height;

  std::vector<BBox> out;
  for (const BBox& truth : true_boxes) {
    if (unit(rng) >= skill.recall) continue;
    std::uniform_real_distribution<double> wiggle(-skill.jitter, skill.jitter);
    BBox b = truth;
    b.x += wiggle(rng);
    b.y += wiggle(rng);
    b.w = std::min(std::max(b.w + wiggle(rng), 1.0), W);
    b.h = std::min(std::max(b.h + wiggle(rng), 1.0), H);
    b.x = std::clamp(b.x, 0.0, W - b.w);
    b.y = std::clamp(b.y, 0.0, H - b.h);
    b.score = score(rng);
    out.push_back(b);
  }
  for (std::size_t i = 0; i < true_boxes.size(); ++i) {
    if (unit(rng) >= 1.0 - skill.precision) continue;
    BBox b;
    b.w = std::uniform_real_distribution<double>(0.3 * W, 0.9 * W)(rng);
    b.h = std::min(std::uniform_real_distribution<double>(8.0, 24.0)(rng), H);
    b.x = std::uniform_real_distribution<double>(0.0, W - b.w)(rng);
    b.y = std::uniform_real_distribution<double>(0.0, H - b.h)(rng);
    b.score = score(rng);
    out.push_back(b);
  }
  return out;
}

OracleDetector::OracleDetector(const Corpus& truth, const OracleSkill& skill,
                               std::uint64_t seed)
    : skill_(skill), seed_(seed) {
  if (!(skill.recall >= 0.0 && skill.recall <= 1.0) ||
      !(skill.precision >= 0.0 && skill.precision <= 1.0) || !(skill.jitter >= 0.0))
    throw std::invalid_argument("oracle skill out of range");
  add_truth(truth);
}

void OracleDetector::add_truth(const Corpus& corpus) {
  for (const AnnotatedPage& page : corpus.pages) {
    auto [it, inserted] = truth_.try_emplace(page.page.id);
    if (!inserted)
      throw std::invalid_argument("duplicate truth page id '" + page.page.id + "'");
    it->second.width = page.page.width;
    it->second.height = page.page.height;
    for (const AnnotatedBox& ab : page.boxes) {
      if (ab.provenance == Provenance::GroundTruth) it->second.boxes.push_back(ab.box);
    }
  }
}

void OracleDetector::train(const std::vector<const AnnotatedPage*>&,
                           const TrainConfig& cfg, std::vector<double>* loss_trace) {
  validate_config(cfg);
  if (loss_trace) loss_trace->clear();
}

std::vector<std::vector<BBox>> OracleDetector::predict_pages(
    const std::vector<const AnnotatedPage*>& pages) const {
  std::vector<std::vector<BBox>> out;
  out.reserve(pages.size());
  for (const AnnotatedPage* p : pages) {
    auto it = truth_.find(p->page.id);
    if (it == truth_.end()) {
      out.emplace_back();
      continue;
    }
    out.push_back(oracle_predict(it->second.boxes, skill_,
                                 mix_seed(seed_, hash_str(p->page.id)),
                                 p->page.width, p->page.height));
  }
  return out;
}

nlohmann::ordered_json OracleDetector::checkpoint() const {
  ordered_json j;
  j["kind"] = "oracle";
  j["recall"] = skill_.recall;
  j["precision"] = skill_.precision;
  j["jitter"] = skill_.jitter;
  j["truth_pages"] = truth_.size();
  return j;
}

// ---- external-process bridge

namespace {

/// Temp directory removed on scope exit.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag) {
    std::string tmpl = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data()))
      throw TrainError("failed to create scratch directory for external detector");
    path = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

BBox parse_external_box(const json& jb, const std::string& id) {
  for (const char* key : {"x", "y", "w", "h", "score"}) {
    if (!jb.contains(key) || !jb[key].is_number())
      throw DataError("prediction for page '" + id + "' lacks numeric '" + key + "'");
  }
  BBox b{jb["x"].get<double>(), jb["y"].get<double>(), jb["w"].get<double>(),
         jb["h"].get<double>(), jb["score"].get<double>()};
  if (!box_valid(b))
    throw DataError("prediction for page '" + id + "' has a degenerate box");
  if (b.score >= 1.0)
    throw DataError("prediction score 1 is reserved for ground truth (page '" + id +
                    "')");
  if (b.score < 0.0)
    throw DataError("prediction for page '" + id + "' has a negative score");
  return b;
}

}  // namespace

std::map<std::string, std::vector<BBox>> external_detect(
    const std::string& command, const std::vector<const AnnotatedPage*>& pages) {
  ScratchDir scratch("selfpace-detect");
  Corpus request;
  request.split = Split::Test;
  request.pages.reserve(pages.size());
  for (const AnnotatedPage* p : pages) request.pages.push_back(*p);

  const fs::path manifest = scratch.path / "input.jsonl";
  const fs::path predictions = scratch.path / "predictions.jsonl";
  save_corpus(request, manifest.string());

  const std::string full = command + " --input \"" + manifest.string() +
                           "\" --output \"" + predictions.string() + "\"";
  const int status = std::system(full.c_str());
  if (status != 0)
    throw TrainError("external detector exited with status " + std::to_string(status) +
                     ": " + command);
  if (!fs::exists(predictions))
    throw DataError("external detector wrote no predictions file: " + command);

  std::ifstream in(predictions);
  std::map<std::string, std::vector<BBox>> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) +
                      " is not valid JSON: " + e.what());
    }
    if (!j.contains("id") || !j["id"].is_string())
      throw DataError("predictions line " + std::to_string(line_no) +
                      " lacks a string 'id'");
    const std::string id = j["id"].get<std::string>();
    if (std::none_of(pages.begin(), pages.end(),
                     [&](const AnnotatedPage* p) { return p->page.id == id; }))
      throw DataError("predictions reference unknown page id '" + id + "'");
    if (by_id.count(id))
      throw DataError("duplicate predictions line for page id '" + id + "'");
    if (!j.contains("boxes") || !j["boxes"].is_array())
      throw DataError("predictions line " + std::to_string(line_no) +
                      " lacks a 'boxes' array");
    std::vector<BBox> boxes;
    for (const json& jb : j["boxes"]) boxes.push_back(parse_external_box(jb, id));
    by_id.emplace(id, std::move(boxes));
  }
  return by_id;
}

ExternalDetector::ExternalDetector(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw std::invalid_argument("external command must not be empty");
}

void ExternalDetector::train(const std::vector<const AnnotatedPage*>&,
                             const TrainConfig& cfg, std::vector<double>* loss_trace) {
  validate_config(cfg);
  if (loss_trace) loss_trace->clear();
}

std::vector<std::vector<BBox>> ExternalDetector::predict_pages(
    const std::vector<const AnnotatedPage*>& pages) const {
  auto by_id = external_detect(command_, pages);
  std::vector<std::vector<BBox>> out;
  out.reserve(pages.size());
  for (const AnnotatedPage* p : pages) {
    auto it = by_id.find(p->page.id);
    out.push_back(it == by_id.end() ? std::vector<BBox>{} : it->second);
  }
  return out;
}

nlohmann::ordered_json ExternalDetector::checkpoint() const {
  ordered_json j;
  j["kind"] = "external";
  j["command"] = command_;
  return j;
}

}  // namespace selfpace
