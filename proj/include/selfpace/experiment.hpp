#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfpace/dataset.hpp"
#include "selfpace/detector.hpp"
#include "selfpace/evaluation.hpp"
#include "selfpace/orchestrator.hpp"
#include "selfpace/synthgen.hpp"

namespace selfpace {

enum class DetectorKind { Logistic, Oracle, External };

std::string detector_kind_name(DetectorKind kind);
DetectorKind detector_kind_from_name(const std::string& name);

/// Full protocol for one comparison study: per seed, synthesize (or load) a
/// train/test pair, damage the training labels, then run the baseline and the
/// two curriculum regimes against the same damaged corpus.
struct ExperimentConfig {
  // data: synthesized by default, or loaded when both manifests are set
  PageStyle style;
  int train_pages = 200;
  int test_pages = 40;
  std::string train_manifest;
  std::string test_manifest;
  DropPolicy drop = DropPolicy::beta_rate();

  // algorithm
  int k = 5;
  double nms_iou = 0.5;
  double confidence_floor = 0.25;
  double eval_iou = 0.5;
  TrainConfig train;
  ScanlineModelConfig model;

  // detector under test
  DetectorKind detector = DetectorKind::Logistic;
  OracleSkill oracle_skill;
  std::string external_command;

  // protocol
  std::vector<std::uint64_t> seeds = {42};
  bool parallel_seeds = false;
  std::string out_dir;  // empty: in-memory only, no artifacts
};

void validate_experiment(const ExperimentConfig& cfg);

struct RegimeOutcome {
  std::uint64_t seed = 0;
  std::string regime;
  double final_ap_percent = 0.0;
  double final_mean_iou_percent = 0.0;
};

struct ExperimentResult {
  /// Per-seed rows (regime labels suffixed with "[seed=S]" on multi-seed
  /// runs), followed by "[mean]"/"[std]" aggregate rows per regime and
  /// iteration when more than one seed ran.
  std::vector<EvalRow> rows;
  std::vector<RegimeOutcome> outcomes;  // final-iteration metrics per regime
};

/// Runs the three regimes over every seed; identical results whether seeds
/// execute sequentially or with parallel_seeds set. When out_dir is set,
/// writes report.csv/txt/svg plus per-seed run artifacts underneath
/// seed-<S>/<regime>/.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace selfpace
