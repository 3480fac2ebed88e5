#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpace/dataset.hpp"

namespace selfpace {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs_per_iter = 60;    // epochs spent per curriculum iteration
  int max_total_epochs = 2000; // cumulative cap across iterations
  int patience = 10;           // epochs without loss improvement before stopping
  int batch_size = 64;         // scanlines per SGD mini-batch
  double init_std = 0.01;      // std of the Normal(0, std) parameter init
};

/// Throws std::invalid_argument on non-positive fields or patience exceeding
/// the per-iteration epoch budget. init_std may be zero (zero-initialized
/// parameters).
void validate_config(const TrainConfig& cfg);

/// Trainable row detector: train on annotated pages, predict boxes per page.
/// Predictions never carry score >= 1; that value is reserved for ground truth.
class Detector {
public:
  virtual ~Detector() = default;

  virtual void train(const std::vector<const AnnotatedPage*>& pages,
                     const TrainConfig& cfg,
                     std::vector<double>* loss_trace = nullptr) = 0;

  /// Predictions aligned with the input page order. Implementations only read
  /// the annotations they need (the built-in detectors ignore them).
  virtual std::vector<std::vector<BBox>> predict_pages(
      const std::vector<const AnnotatedPage*>& pages) const = 0;

  virtual nlohmann::ordered_json checkpoint() const = 0;
};

// ---- scanline feature / loss arithmetic (exposed for gradient checking)

namespace scanline {

constexpr int kFeatureCount = 4;

/// Per-scanline features, one row per image row: mean intensity, intensity
/// std, mean absolute difference from the scanline above (0 for the first),
/// and the fraction of pixels darker than the page median.
Eigen::MatrixXd features(const PageImage& page);

/// 1 where the scanline's vertical center (y + 0.5) falls inside any
/// annotation box, else 0.
Eigen::VectorXd labels(const AnnotatedPage& page);

/// Mean binary cross-entropy of the logistic model params = [w; b] on rows
/// of X (numerically stable form).
double bce_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                const Eigen::VectorXd& params);

/// Analytic gradient of bce_loss with respect to params.
Eigen::VectorXd bce_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& params);

}  // namespace scanline

// ---- built-in logistic scanline detector

struct ScanlineModelConfig {
  double prob_cutoff = 0.8;  // scanline positive iff probability > cutoff
  int min_run_height = 4;    // discard shorter positive runs
};

/// From-scratch logistic regression over per-scanline features, trained with
/// plain mini-batch SGD; positive scanline runs are grouped into row boxes.
/// Single-threaded per instance; predict is read-only.
class LogisticScanlineDetector final : public Detector {
public:
  explicit LogisticScanlineDetector(std::uint64_t seed, double init_std = 0.01,
                                    ScanlineModelConfig cfg = {});

  void train(const std::vector<const AnnotatedPage*>& pages, const TrainConfig& cfg,
             std::vector<double>* loss_trace = nullptr) override;

  std::vector<BBox> predict(const PageImage& page) const;

  std::vector<std::vector<BBox>> predict_pages(
      const std::vector<const AnnotatedPage*>& pages) const override;

  /// Mean binary cross-entropy of the current parameters over the pages'
  /// scanlines, using the stored feature standardization.
  double mean_loss(const std::vector<const AnnotatedPage*>& pages) const;

  nlohmann::ordered_json checkpoint() const override;

  const Eigen::VectorXd& weights() const { return params_; }
  int total_epochs() const { return total_epochs_; }
  const ScanlineModelConfig& model_config() const { return cfg_; }

private:
  Eigen::MatrixXd standardized_features(const PageImage& page) const;

  Eigen::VectorXd params_;     // [w(4); bias]
  Eigen::VectorXd feat_mean_;  // stored training-set standardization
  Eigen::VectorXd feat_std_;
  std::mt19937_64 rng_;
  int total_epochs_ = 0;
  ScanlineModelConfig cfg_;
};

// ---- oracle detector (test double)

struct OracleSkill {
  double recall = 1.0;     // probability of returning each true box
  double precision = 1.0;  // 1 - false-positive rate per true box
  double jitter = 0.0;     // uniform +-jitter px applied per coordinate
};

/// Emits each true box with probability `skill.recall`, jittered and scored
/// in U[0.6, 0.95), plus false positives at rate 1 - precision per true box.
/// Deterministic given seed. Throws std::invalid_argument on bad skill.
std::vector<BBox> oracle_predict(const std::vector<BBox>& true_boxes,
                                 const OracleSkill& skill, std::uint64_t seed,
                                 int page_width, int page_height);

/// Detector returning oracle_predict over a registered truth corpus, looked
/// up by page id; unknown pages yield no predictions. train() is a no-op.
class OracleDetector final : public Detector {
public:
  OracleDetector(const Corpus& truth, const OracleSkill& skill, std::uint64_t seed);

  /// Registers additional truth pages (e.g. the test corpus).
  void add_truth(const Corpus& corpus);

  void train(const std::vector<const AnnotatedPage*>&, const TrainConfig&,
             std::vector<double>* loss_trace = nullptr) override;
  std::vector<std::vector<BBox>> predict_pages(
      const std::vector<const AnnotatedPage*>& pages) const override;
  nlohmann::ordered_json checkpoint() const override;

private:
  struct TruthPage {
    std::vector<BBox> boxes;
    int width = 0;
    int height = 0;
  };
  std::map<std::string, TruthPage> truth_;
  OracleSkill skill_;
  std::uint64_t seed_;
};

// ---- external-process bridge

/// Writes the pages as a manifest (plus PGM images) to a temp directory,
/// runs `command --input <manifest> --output <predictions>`, and reads the
/// predictions JSONL ({"id":..., "boxes":[{x,y,w,h,score}]}). Scores must lie
/// in [0,1); 1 is reserved for ground truth. Unknown page ids, malformed
/// output and out-of-range scores raise DataError; a nonzero exit status
/// raises TrainError.
std::map<std::string, std::vector<BBox>> external_detect(
    const std::string& command, const std::vector<const AnnotatedPage*>& pages);

class ExternalDetector final : public Detector {
public:
  explicit ExternalDetector(std::string command);

  void train(const std::vector<const AnnotatedPage*>&, const TrainConfig&,
             std::vector<double>* loss_trace = nullptr) override;
  std::vector<std::vector<BBox>> predict_pages(
      const std::vector<const AnnotatedPage*>& pages) const override;
  nlohmann::ordered_json checkpoint() const override;

private:
  std::string command_;
};

}  // namespace selfpace
