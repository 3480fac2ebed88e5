#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpace/curriculum.hpp"
#include "selfpace/dataset.hpp"
#include "selfpace/detector.hpp"
#include "selfpace/evaluation.hpp"

namespace selfpace {

struct EvalConfig {
  double iou_threshold = 0.5;
};

struct SplOptions {
  double nms_iou = 0.5;           // overlap threshold for the annotation merge
  double confidence_floor = 0.25; // predictions below this never become pseudo-labels
  std::string out_dir;            // empty: keep everything in memory, write nothing
  std::string regime_label = "self-paced";
};

void validate_options(const SplOptions& opts);

struct SplRun {
  Curriculum curriculum;
  std::vector<EvalRow> rows;  // one test evaluation per iteration, in order
  Corpus final_annotations;   // training corpus with all merged pseudo-labels
  std::map<std::string, std::vector<BBox>> test_predictions;  // final iteration
  nlohmann::ordered_json model;                               // final checkpoint
};

/// Runs the self-paced loop: per iteration, add the next batch to the pool,
/// train on the pool (pages in ascending-id order), evaluate on the test
/// corpus, and enrich the following batch's annotations with confident
/// predictions merged through overlap suppression (existing annotations take
/// precedence). Test pages influence nothing but the evaluation rows.
///
/// When `opts.out_dir` is set, writes curriculum.json, report.csv and one
/// iteration-<i>/ directory per iteration holding model.json,
/// annotations.jsonl (the pool state after merging) and predictions.jsonl
/// (test predictions).
SplRun run_spl(const Corpus& train, const Corpus& test, const Curriculum& curriculum,
               Detector& detector, const TrainConfig& tcfg, const SplOptions& opts,
               const EvalConfig& ecfg = {});

struct BaselineRun {
  EvalRow row;
  std::map<std::string, std::vector<BBox>> test_predictions;
  nlohmann::ordered_json model;
};

/// Trains once on the full training corpus (pages in ascending-id order) and
/// evaluates on the test corpus. With a single-batch curriculum and the same
/// detector seed and budget, run_spl reaches bit-identical parameters.
BaselineRun run_baseline(const Corpus& train, const Corpus& test, Detector& detector,
                         const TrainConfig& tcfg, const SplOptions& opts,
                         const EvalConfig& ecfg = {});

}  // namespace selfpace
