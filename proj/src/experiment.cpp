#include "selfpace/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <memory>
#include <set>
#include <stdexcept>
#include <thread>

#include "selfpace/curriculum.hpp"
#include "selfpace/errors.hpp"
#include "selfpace/random.hpp"

namespace selfpace {

namespace fs = std::filesystem;

std::string detector_kind_name(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Logistic: return "logistic";
    case DetectorKind::Oracle: return "oracle";
    case DetectorKind::External: return "external";
  }
  throw std::invalid_argument("unknown detector kind");
}

DetectorKind detector_kind_from_name(const std::string& name) {
  if (name == "logistic") return DetectorKind::Logistic;
  if (name == "oracle") return DetectorKind::Oracle;
  if (name == "external") return DetectorKind::External;
  throw std::invalid_argument("unknown detector kind '" + name +
                              "' (expected logistic, oracle or external)");
}

void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("k must be at least 1");
  if (cfg.seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() !=
      cfg.seeds.size())
    throw std::invalid_argument("seeds must be distinct");
  if (cfg.train_manifest.empty() != cfg.test_manifest.empty())
    throw std::invalid_argument(
        "either both train and test manifests or neither must be given");
  if (cfg.train_manifest.empty()) {
    validate_style(cfg.style);
    if (cfg.train_pages < 1) throw std::invalid_argument("train_pages must be positive");
    if (cfg.test_pages < 1) throw std::invalid_argument("test_pages must be positive");
  }
  if (!(cfg.nms_iou > 0.0 && cfg.nms_iou < 1.0))
    throw std::invalid_argument("nms_iou must lie in (0, 1)");
  if (!(cfg.eval_iou > 0.0 && cfg.eval_iou < 1.0))
    throw std::invalid_argument("eval_iou must lie in (0, 1)");
  if (!(cfg.confidence_floor >= 0.0 && cfg.confidence_floor < 1.0))
    throw std::invalid_argument("confidence_floor must lie in [0, 1)");
  validate_policy(cfg.drop);
  validate_config(cfg.train);
  if (cfg.detector == DetectorKind::External && cfg.external_command.empty())
    throw std::invalid_argument("external detector requires a command");
}

namespace {

struct SeedResult {
  std::vector<EvalRow> rows;            // baseline, then spl-random, then spl-sorted
  std::vector<RegimeOutcome> outcomes;  // same order
};

struct SeedData {
  Corpus train_full;  // pre-drop, used as oracle truth
  Corpus train;       // damaged labels: what every regime trains on
  Corpus test;
};

SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData data;
  if (cfg.train_manifest.empty()) {
    data.train_full = generate_corpus(cfg.style, cfg.train_pages,
                                      mix_seed(seed, hash_str("train-data")),
                                      Split::Train);
    data.test = generate_corpus(cfg.style, cfg.test_pages,
                                mix_seed(seed, hash_str("test-data")), Split::Test);
    // Prefix test ids so the two corpora never share page identities.
    for (AnnotatedPage& p : data.test.pages) {
      p.page.id = "test-" + p.page.id;
      p.page.image = "images/" + p.page.id + ".pgm";
    }
  } else {
    data.train_full = load_corpus(cfg.train_manifest);
    data.test = load_corpus(cfg.test_manifest);
    for (const AnnotatedPage& p : data.test.pages) {
      if (data.train_full.find(p.page.id))
        throw DataError("page id '" + p.page.id +
                        "' appears in both train and test manifests");
    }
  }
  data.train = drop_labels(data.train_full, cfg.drop, mix_seed(seed, hash_str("drop")));
  return data;
}

std::unique_ptr<Detector> make_detector(const ExperimentConfig& cfg,
                                        const SeedData& data, std::uint64_t seed) {
  const std::uint64_t det_seed = mix_seed(seed, hash_str("detector"));
  switch (cfg.detector) {
    case DetectorKind::Logistic:
      return std::make_unique<LogisticScanlineDetector>(det_seed, cfg.train.init_std,
                                                        cfg.model);
    case DetectorKind::Oracle: {
      auto oracle =
          std::make_unique<OracleDetector>(data.train_full, cfg.oracle_skill, det_seed);
      oracle->add_truth(data.test);
      return oracle;
    }
    case DetectorKind::External:
      return std::make_unique<ExternalDetector>(cfg.external_command);
  }
  throw std::invalid_argument("unknown detector kind");
}

/// The single-shot baseline gets the same total epoch budget the k-iteration
/// regimes spend (k * epochs_per_iter, capped by the cumulative limit).
TrainConfig baseline_budget(const TrainConfig& train, int k) {
  TrainConfig out = train;
  const long long scaled = static_cast<long long>(train.epochs_per_iter) * k;
  out.epochs_per_iter = static_cast<int>(
      std::min<long long>(scaled, train.max_total_epochs));
  out.patience = std::min(out.patience, out.epochs_per_iter);
  return out;
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedData data = prepare_data(cfg, seed);
  const EvalConfig ecfg{cfg.eval_iou};
  const fs::path seed_dir = cfg.out_dir.empty()
                                ? fs::path()
                                : fs::path(cfg.out_dir) / ("seed-" + std::to_string(seed));
  auto dir_for = [&](const char* regime) {
    return cfg.out_dir.empty() ? std::string() : (seed_dir / regime).string();
  };

  SeedResult result;
  auto record = [&](const std::string& regime, const EvalRow& final_row) {
    result.outcomes.push_back(
        {seed, regime, final_row.ap_percent, final_row.mean_iou_percent});
  };

  {
    auto detector = make_detector(cfg, data, seed);
    SplOptions opts{cfg.nms_iou, cfg.confidence_floor, dir_for("baseline"), "baseline"};
    BaselineRun run = run_baseline(data.train, data.test, *detector,
                                   baseline_budget(cfg.train, cfg.k), opts, ecfg);
    result.rows.push_back(run.row);
    record("baseline", run.row);
  }
  {
    auto detector = make_detector(cfg, data, seed);
    const Curriculum curriculum = build_random_curriculum(
        data.train, cfg.k, mix_seed(seed, hash_str("curriculum")));
    SplOptions opts{cfg.nms_iou, cfg.confidence_floor, dir_for("spl-random"),
                    "spl-random"};
    SplRun run =
        run_spl(data.train, data.test, curriculum, *detector, cfg.train, opts, ecfg);
    result.rows.insert(result.rows.end(), run.rows.begin(), run.rows.end());
    record("spl-random", run.rows.back());
  }
  {
    auto detector = make_detector(cfg, data, seed);
    const Curriculum curriculum = build_sorted_curriculum(data.train, cfg.k);
    SplOptions opts{cfg.nms_iou, cfg.confidence_floor, dir_for("spl-sorted"),
                    "spl-sorted"};
    SplRun run =
        run_spl(data.train, data.test, curriculum, *detector, cfg.train, opts, ecfg);
    result.rows.insert(result.rows.end(), run.rows.begin(), run.rows.end());
    record("spl-sorted", run.rows.back());
  }
  return result;
}

void append_aggregates(const std::vector<SeedResult>& per_seed,
                       std::vector<EvalRow>& rows) {
  // Mean and population-std rows per (regime, iteration), in first-seed order.
  const std::vector<EvalRow>& shape = per_seed.front().rows;
  for (std::size_t r = 0; r < shape.size(); ++r) {
    double ap_sum = 0.0, miou_sum = 0.0;
    for (const SeedResult& s : per_seed) {
      ap_sum += s.rows[r].ap_percent;
      miou_sum += s.rows[r].mean_iou_percent;
    }
    const double n = static_cast<double>(per_seed.size());
    const double ap_mean = ap_sum / n;
    const double miou_mean = miou_sum / n;
    double ap_var = 0.0, miou_var = 0.0;
    for (const SeedResult& s : per_seed) {
      ap_var += (s.rows[r].ap_percent - ap_mean) * (s.rows[r].ap_percent - ap_mean);
      miou_var += (s.rows[r].mean_iou_percent - miou_mean) *
                  (s.rows[r].mean_iou_percent - miou_mean);
    }
    rows.push_back(
        {shape[r].regime + "[mean]", shape[r].iteration, ap_mean, miou_mean});
    rows.push_back({shape[r].regime + "[std]", shape[r].iteration,
                    std::sqrt(ap_var / n), std::sqrt(miou_var / n)});
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_experiment(cfg);

  std::vector<SeedResult> per_seed(cfg.seeds.size());
  if (cfg.parallel_seeds && cfg.seeds.size() > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(cfg.seeds.size());
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          per_seed[i] = run_seed(cfg, cfg.seeds[i]);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      });
    }
    for (std::thread& w : workers) w.join();
    for (const std::exception_ptr& e : failures)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      per_seed[i] = run_seed(cfg, cfg.seeds[i]);
  }

  ExperimentResult result;
  const bool multi = cfg.seeds.size() > 1;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    for (EvalRow row : per_seed[i].rows) {
      if (multi) row.regime += "[seed=" + std::to_string(cfg.seeds[i]) + "]";
      result.rows.push_back(std::move(row));
    }
    result.outcomes.insert(result.outcomes.end(), per_seed[i].outcomes.begin(),
                           per_seed[i].outcomes.end());
  }
  if (multi) append_aggregates(per_seed, result.rows);

  if (!cfg.out_dir.empty()) write_report_files(result.rows, cfg.out_dir);
  return result;
}

}  // namespace selfpace
