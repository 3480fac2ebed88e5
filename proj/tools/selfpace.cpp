#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selfpace/curriculum.hpp"
#include "selfpace/dataset.hpp"
#include "selfpace/errors.hpp"
#include "selfpace/evaluation.hpp"
#include "selfpace/experiment.hpp"
#include "selfpace/synthgen.hpp"

namespace {

using nlohmann::json;

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw selfpace::DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw selfpace::DataError("config file " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw selfpace::DataError("config file " + path + " must hold a JSON object");
  return j;
}

/// Applies config-file values to options the user did not pass explicitly,
/// so precedence is: built-in default < config file < command-line flag.
class ConfigOverlay {
public:
  void bind(CLI::Option* opt, std::string key,
            std::function<void(const json&)> setter) {
    entries_.push_back({opt, std::move(key), std::move(setter)});
  }

  void apply(const json& file) const {
    for (const auto& e : entries_) {
      if (e.opt->count() == 0 && file.contains(e.key)) e.setter(file.at(e.key));
    }
    for (const auto& [key, value] : file.items()) {
      if (std::none_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.key == key; }))
        throw selfpace::DataError("config file: unknown key '" + key + "'");
    }
  }

private:
  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::function<void(const json&)> setter;
  };
  std::vector<Entry> entries_;
};

selfpace::PageStyle resolve_style(const json& value) {
  if (value.is_string())
    return selfpace::style_from_json_file(value.get<std::string>());
  if (value.is_object()) return selfpace::style_from_json_string(value.dump());
  throw selfpace::DataError("config 'style' must be a path or a style object");
}

void setup_generate(CLI::App& app) {
  auto* cmd = app.add_subcommand("generate", "Synthesize a labeled page corpus");
  struct GenerateOpts {
    std::string out;
    std::string style_path;
    int constant_rows = 0;
    int pages = 200;
    std::uint64_t seed = 42;
    std::string split = "train";
  };
  auto opts = std::make_shared<GenerateOpts>();
  cmd->add_option("--out", opts->out, "Output directory")->required();
  cmd->add_option("--style", opts->style_path, "Page style JSON file");
  cmd->add_option("--constant-rows", opts->constant_rows,
                  "Pin every page to this many rows")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--pages", opts->pages, "Number of pages")
      ->check(CLI::Range(0, 1000000));
  cmd->add_option("--seed", opts->seed, "Generator seed");
  cmd->add_option("--split", opts->split, "Manifest split tag")
      ->check(CLI::IsMember({"train", "test"}));

  cmd->callback([opts] {
    selfpace::PageStyle style;
    if (!opts->style_path.empty())
      style = selfpace::style_from_json_file(opts->style_path);
    if (opts->constant_rows > 0) {
      style.rows_min = opts->constant_rows;
      style.rows_max = opts->constant_rows;
    }
    const selfpace::Corpus corpus = selfpace::generate_corpus(
        style, opts->pages, opts->seed, selfpace::split_from_name(opts->split));
    const std::string manifest = opts->out + "/manifest.jsonl";
    selfpace::save_corpus(corpus, manifest);
    std::printf("generated %zu pages (%zu boxes) -> %s\n", corpus.pages.size(),
                corpus.total_boxes(), manifest.c_str());
  });
}

void setup_experiment(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "experiment", "Run baseline vs self-paced regimes and write a report");
  struct State {
    std::string config_path;
    selfpace::ExperimentConfig cfg;
    std::string style_path;
    std::string detector = "logistic";
    std::uint64_t seed = 42;
    std::vector<std::uint64_t> seeds;
    double drop_rate = -1.0;
    ConfigOverlay overlay;
  };
  auto st = std::make_shared<State>();

  cmd->add_option("--config", st->config_path,
                  "JSON config file; explicit flags override it");

  auto bind = [&](CLI::Option* opt, const std::string& key, auto&& setter) {
    st->overlay.bind(opt, key, setter);
  };
  auto& cfg = st->cfg;

  bind(cmd->add_option("--style", st->style_path, "Page style JSON file"), "style",
       [st](const json& v) { st->cfg.style = resolve_style(v); });
  bind(cmd->add_option("--train-manifest", cfg.train_manifest,
                       "Use this training corpus instead of synthesizing"),
       "train-manifest", [st](const json& v) { st->cfg.train_manifest = v; });
  bind(cmd->add_option("--test-manifest", cfg.test_manifest,
                       "Use this test corpus instead of synthesizing"),
       "test-manifest", [st](const json& v) { st->cfg.test_manifest = v; });
  bind(cmd->add_option("--train-pages", cfg.train_pages, "Synthesized training pages"),
       "train-pages", [st](const json& v) { st->cfg.train_pages = v; });
  bind(cmd->add_option("--test-pages", cfg.test_pages, "Synthesized test pages"),
       "test-pages", [st](const json& v) { st->cfg.test_pages = v; });

  bind(cmd->add_option("--k", cfg.k, "Number of curriculum batches"), "k",
       [st](const json& v) { st->cfg.k = v; });
  bind(cmd->add_option("--nms-iou", cfg.nms_iou,
                       "Overlap threshold for pseudo-label suppression"),
       "nms-iou", [st](const json& v) { st->cfg.nms_iou = v; });
  bind(cmd->add_option("--eval-iou", cfg.eval_iou, "Matching threshold for metrics"),
       "eval-iou", [st](const json& v) { st->cfg.eval_iou = v; });
  bind(cmd->add_option("--confidence-floor", cfg.confidence_floor,
                       "Discard pseudo-labels below this score"),
       "confidence-floor", [st](const json& v) { st->cfg.confidence_floor = v; });

  bind(cmd->add_option("--drop-alpha", cfg.drop.alpha, "Beta drop-rate alpha"),
       "drop-alpha", [st](const json& v) { st->cfg.drop.alpha = v; });
  bind(cmd->add_option("--drop-beta", cfg.drop.beta, "Beta drop-rate beta"),
       "drop-beta", [st](const json& v) { st->cfg.drop.beta = v; });
  auto* rate_opt = cmd->add_option(
      "--drop-rate", st->drop_rate,
      "Use a constant per-page drop rate instead of the Beta policy");
  bind(rate_opt, "drop-rate", [st](const json& v) { st->drop_rate = v; });

  bind(cmd->add_option("--lr", cfg.train.learning_rate, "SGD learning rate"), "lr",
       [st](const json& v) { st->cfg.train.learning_rate = v; });
  bind(cmd->add_option("--epochs-per-iter", cfg.train.epochs_per_iter,
                       "Training epochs per curriculum iteration"),
       "epochs-per-iter", [st](const json& v) { st->cfg.train.epochs_per_iter = v; });
  bind(cmd->add_option("--max-total-epochs", cfg.train.max_total_epochs,
                       "Cumulative epoch cap per regime"),
       "max-total-epochs", [st](const json& v) { st->cfg.train.max_total_epochs = v; });
  bind(cmd->add_option("--patience", cfg.train.patience,
                       "Epochs without improvement before stopping"),
       "patience", [st](const json& v) { st->cfg.train.patience = v; });
  bind(cmd->add_option("--batch-size", cfg.train.batch_size, "SGD mini-batch size"),
       "batch-size", [st](const json& v) { st->cfg.train.batch_size = v; });
  bind(cmd->add_option("--init-std", cfg.train.init_std,
                       "Std of the Normal parameter initialization"),
       "init-std", [st](const json& v) { st->cfg.train.init_std = v; });

  bind(cmd->add_option("--cutoff", cfg.model.prob_cutoff,
                       "Scanline probability cutoff of the logistic detector"),
       "cutoff", [st](const json& v) { st->cfg.model.prob_cutoff = v; });
  bind(cmd->add_option("--min-run-height", cfg.model.min_run_height,
                       "Minimum positive-run height in scanlines"),
       "min-run-height", [st](const json& v) { st->cfg.model.min_run_height = v; });

  bind(cmd->add_option("--detector", st->detector, "logistic, oracle or external")
           ->check(CLI::IsMember({"logistic", "oracle", "external"})),
       "detector", [st](const json& v) { st->detector = v; });
  bind(cmd->add_option("--oracle-recall", cfg.oracle_skill.recall,
                       "Oracle detector recall"),
       "oracle-recall", [st](const json& v) { st->cfg.oracle_skill.recall = v; });
  bind(cmd->add_option("--oracle-precision", cfg.oracle_skill.precision,
                       "Oracle detector precision"),
       "oracle-precision",
       [st](const json& v) { st->cfg.oracle_skill.precision = v; });
  bind(cmd->add_option("--oracle-jitter", cfg.oracle_skill.jitter,
                       "Oracle coordinate jitter in pixels"),
       "oracle-jitter", [st](const json& v) { st->cfg.oracle_skill.jitter = v; });
  bind(cmd->add_option("--external-command", cfg.external_command,
                       "Detector subprocess for --detector external"),
       "external-command", [st](const json& v) { st->cfg.external_command = v; });

  auto* seed_opt = cmd->add_option("--seed", st->seed, "Single run seed");
  bind(seed_opt, "seed", [st](const json& v) { st->seed = v; });
  auto* seeds_opt =
      cmd->add_option("--seeds", st->seeds, "Several seeds (one run per seed)");
  bind(seeds_opt, "seeds",
       [st](const json& v) { st->seeds = v.get<std::vector<std::uint64_t>>(); });
  seed_opt->excludes(seeds_opt);

  auto* par_opt = cmd->add_flag("--parallel-seeds", cfg.parallel_seeds,
                                "Run seeds on parallel threads");
  bind(par_opt, "parallel-seeds", [st](const json& v) { st->cfg.parallel_seeds = v; });
  bind(cmd->add_option("--out", cfg.out_dir, "Artifact output directory"), "out",
       [st](const json& v) { st->cfg.out_dir = v; });

  cmd->callback([st, cmd, seed_opt, seeds_opt, rate_opt] {
    if (!st->config_path.empty()) st->overlay.apply(read_config_file(st->config_path));
    if (cmd->count("--style") > 0)
      st->cfg.style = selfpace::style_from_json_file(st->style_path);
    st->cfg.detector = selfpace::detector_kind_from_name(st->detector);
    if (seeds_opt->count() > 0)
      st->cfg.seeds = st->seeds;
    else if (seed_opt->count() > 0)
      st->cfg.seeds = {st->seed};
    else
      st->cfg.seeds = st->seeds.empty() ? std::vector<std::uint64_t>{st->seed}
                                        : st->seeds;
    if (rate_opt->count() > 0 || st->drop_rate >= 0.0)
      st->cfg.drop = selfpace::DropPolicy::constant(st->drop_rate);

    const selfpace::ExperimentResult result = selfpace::run_experiment(st->cfg);
    std::cout << selfpace::report_table(result.rows);
    if (!st->cfg.out_dir.empty())
      std::cout << "report written to " << st->cfg.out_dir << "/report.csv\n";
  });
}

void setup_evaluate(CLI::App& app) {
  auto* cmd =
      app.add_subcommand("evaluate", "Score a prediction file against a manifest");
  struct EvaluateOpts {
    std::string predictions;
    std::string truth;
    double iou = 0.5;
    std::string csv;
    std::string label = "evaluation";
  };
  auto opts = std::make_shared<EvaluateOpts>();
  cmd->add_option("--predictions", opts->predictions, "Predictions JSONL")->required();
  cmd->add_option("--truth", opts->truth, "Ground-truth manifest JSONL")->required();
  cmd->add_option("--iou", opts->iou, "Matching IoU threshold");
  cmd->add_option("--csv", opts->csv, "Also write a one-row CSV report here");
  cmd->add_option("--label", opts->label, "Regime label used in the CSV");

  cmd->callback([opts] {
    const selfpace::Corpus truth =
        selfpace::load_corpus(opts->truth, selfpace::LoadImages::No);
    const auto predictions = selfpace::read_predictions(opts->predictions);
    const selfpace::EvalResult result =
        selfpace::evaluate_predictions(predictions, truth, opts->iou);
    std::printf("AP: %.2f\nMean IoU: %.2f\n", result.ap * 100.0, result.miou * 100.0);
    if (!opts->csv.empty()) {
      const selfpace::EvalRow row{opts->label, "-", result.ap * 100.0,
                                  result.miou * 100.0};
      std::ofstream out(opts->csv, std::ios::binary);
      if (!out) throw selfpace::DataError("cannot write CSV: " + opts->csv);
      out << selfpace::report_csv({row});
    }
  });
}

void setup_import(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "import", "Convert a directory of normalized box annotations to a manifest");
  struct ImportOpts {
    std::string dir;
    std::string out;
    std::string split = "train";
  };
  auto opts = std::make_shared<ImportOpts>();
  cmd->add_option("--dir", opts->dir, "Directory of <id>.txt / <id>.pgm pairs")
      ->required();
  cmd->add_option("--out", opts->out, "Output directory")->required();
  cmd->add_option("--split", opts->split, "Manifest split tag")
      ->check(CLI::IsMember({"train", "test"}));

  cmd->callback([opts] {
    const selfpace::Corpus corpus = selfpace::import_normalized_annotations(
        opts->dir, {}, selfpace::split_from_name(opts->split));
    const std::string manifest = opts->out + "/manifest.jsonl";
    selfpace::save_corpus(corpus, manifest);
    std::printf("imported %zu pages (%zu boxes) -> %s\n", corpus.pages.size(),
                corpus.total_boxes(), manifest.c_str());
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-paced training harness for text-row detection"};
  app.require_subcommand(1);
  setup_generate(app);
  setup_experiment(app);
  setup_evaluate(app);
  setup_import(app);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const selfpace::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const selfpace::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
