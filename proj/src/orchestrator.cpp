#include "selfpace/orchestrator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "selfpace/errors.hpp"

namespace selfpace {

namespace fs = std::filesystem;

void validate_options(const SplOptions& opts) {
  if (!(opts.nms_iou > 0.0 && opts.nms_iou < 1.0))
    throw std::invalid_argument("nms_iou must lie in (0, 1)");
  if (!(opts.confidence_floor >= 0.0 && opts.confidence_floor < 1.0))
    throw std::invalid_argument("confidence_floor must lie in [0, 1)");
  if (opts.regime_label.empty())
    throw std::invalid_argument("regime_label must not be empty");
}

namespace {

void check_eval(const EvalConfig& ecfg) {
  if (!(ecfg.iou_threshold > 0.0 && ecfg.iou_threshold < 1.0))
    throw std::invalid_argument("iou_threshold must lie in (0, 1)");
}

void check_curriculum(const Curriculum& curriculum, const Corpus& train) {
  std::set<std::string> seen;
  for (const auto& batch : curriculum.batches) {
    for (const auto& id : batch) {
      if (!train.find(id))
        throw std::invalid_argument("curriculum references unknown page '" + id + "'");
      if (!seen.insert(id).second)
        throw std::invalid_argument("curriculum repeats page '" + id + "'");
    }
  }
  if (seen.size() != train.pages.size())
    throw std::invalid_argument("curriculum does not cover the training corpus");
}

std::vector<const AnnotatedPage*> corpus_view(const Corpus& corpus) {
  std::vector<const AnnotatedPage*> view;
  view.reserve(corpus.pages.size());
  for (const AnnotatedPage& p : corpus.pages) view.push_back(&p);
  return view;
}

/// Training views are always presented in ascending page-id order so that the
/// visit order depends only on the pool's membership, not on how it grew.
std::vector<const AnnotatedPage*> pool_view(
    const std::map<std::string, AnnotatedPage>& working,
    const std::vector<std::string>& pool_ids) {
  std::vector<std::string> sorted = pool_ids;
  std::sort(sorted.begin(), sorted.end());
  std::vector<const AnnotatedPage*> view;
  view.reserve(sorted.size());
  for (const auto& id : sorted) view.push_back(&working.at(id));
  return view;
}

std::map<std::string, std::vector<BBox>> predictions_by_id(
    const std::vector<const AnnotatedPage*>& pages,
    const std::vector<std::vector<BBox>>& preds) {
  std::map<std::string, std::vector<BBox>> out;
  for (std::size_t i = 0; i < pages.size(); ++i) out[pages[i]->page.id] = preds[i];
  return out;
}

/// Keeps annotations ahead of new predictions, drops low-confidence
/// predictions, clamps the rest into the page, and resolves overlaps; the
/// survivors become the page's new annotation set.
void merge_predictions(AnnotatedPage& page, const std::vector<BBox>& predictions,
                       double confidence_floor, double nms_iou) {
  std::vector<BBox> combined;
  combined.reserve(page.boxes.size() + predictions.size());
  for (const AnnotatedBox& ab : page.boxes) combined.push_back(ab.box);
  const double W = page.page.width;
  const double H = page.page.height;
  for (BBox b : predictions) {
    if (b.score < confidence_floor) continue;
    b.w = std::min(b.w, W);
    b.h = std::min(b.h, H);
    b.x = std::clamp(b.x, 0.0, W - b.w);
    b.y = std::clamp(b.y, 0.0, H - b.h);
    combined.push_back(b);
  }
  std::vector<AnnotatedBox> merged;
  for (const BBox& b : nms(combined, nms_iou)) {
    merged.push_back({b, is_ground_truth_score(b.score) ? Provenance::GroundTruth
                                                        : Provenance::Pseudo});
  }
  page.boxes = std::move(merged);
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

SplRun run_spl(const Corpus& train, const Corpus& test, const Curriculum& curriculum,
               Detector& detector, const TrainConfig& tcfg, const SplOptions& opts,
               const EvalConfig& ecfg) {
  validate_corpus(train);
  validate_corpus(test);
  validate_config(tcfg);
  validate_options(opts);
  check_eval(ecfg);
  check_curriculum(curriculum, train);

  std::map<std::string, AnnotatedPage> working;
  for (const AnnotatedPage& p : train.pages) working.emplace(p.page.id, p);
  const auto test_view = corpus_view(test);

  SplRun run;
  run.curriculum = curriculum;

  std::vector<std::string> pool_ids;
  const int k = static_cast<int>(curriculum.batches.size());
  for (int i = 0; i < k; ++i) {
    pool_ids.insert(pool_ids.end(), curriculum.batches[i].begin(),
                    curriculum.batches[i].end());
    detector.train(pool_view(working, pool_ids), tcfg);

    run.test_predictions =
        predictions_by_id(test_view, detector.predict_pages(test_view));
    const EvalResult eval =
        evaluate_predictions(run.test_predictions, test, ecfg.iou_threshold);
    run.rows.push_back({opts.regime_label, std::to_string(i + 1), eval.ap * 100.0,
                        eval.miou * 100.0});

    if (i + 1 < k) {
      std::vector<const AnnotatedPage*> next;
      for (const auto& id : curriculum.batches[i + 1]) next.push_back(&working.at(id));
      const auto preds = detector.predict_pages(next);
      for (std::size_t p = 0; p < next.size(); ++p) {
        merge_predictions(working.at(next[p]->page.id), preds[p],
                          opts.confidence_floor, opts.nms_iou);
      }
    }

    if (!opts.out_dir.empty()) {
      const fs::path iter_dir =
          fs::path(opts.out_dir) / ("iteration-" + std::to_string(i + 1));
      write_text_file(iter_dir / "model.json", detector.checkpoint().dump(2) + "\n");
      Corpus snapshot;
      snapshot.split = train.split;
      for (const AnnotatedPage& p : train.pages)
        snapshot.pages.push_back(working.at(p.page.id));
      save_corpus(snapshot, iter_dir / "annotations.jsonl", /*write_images=*/false);
      write_predictions(run.test_predictions, iter_dir / "predictions.jsonl");
    }
  }

  run.final_annotations.split = train.split;
  for (const AnnotatedPage& p : train.pages)
    run.final_annotations.pages.push_back(working.at(p.page.id));
  run.model = detector.checkpoint();

  if (!opts.out_dir.empty()) {
    save_curriculum(curriculum, fs::path(opts.out_dir) / "curriculum.json");
    write_text_file(fs::path(opts.out_dir) / "report.csv", report_csv(run.rows));
  }
  return run;
}

BaselineRun run_baseline(const Corpus& train, const Corpus& test, Detector& detector,
                         const TrainConfig& tcfg, const SplOptions& opts,
                         const EvalConfig& ecfg) {
  validate_corpus(train);
  validate_corpus(test);
  validate_config(tcfg);
  validate_options(opts);
  check_eval(ecfg);
  if (train.pages.empty()) throw TrainError("cannot train on an empty corpus");

  std::map<std::string, AnnotatedPage> working;
  std::vector<std::string> ids;
  for (const AnnotatedPage& p : train.pages) {
    working.emplace(p.page.id, p);
    ids.push_back(p.page.id);
  }
  detector.train(pool_view(working, ids), tcfg);

  const auto test_view = corpus_view(test);
  BaselineRun run;
  run.test_predictions =
      predictions_by_id(test_view, detector.predict_pages(test_view));
  const EvalResult eval =
      evaluate_predictions(run.test_predictions, test, ecfg.iou_threshold);
  run.row = {opts.regime_label, "-", eval.ap * 100.0, eval.miou * 100.0};
  run.model = detector.checkpoint();

  if (!opts.out_dir.empty()) {
    const fs::path dir(opts.out_dir);
    write_text_file(dir / "model.json", run.model.dump(2) + "\n");
    write_predictions(run.test_predictions, dir / "predictions.jsonl");
    write_text_file(dir / "report.csv", report_csv({run.row}));
  }
  return run;
}

}  // namespace selfpace
