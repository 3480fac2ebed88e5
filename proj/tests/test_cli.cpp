#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "selfpace/dataset.hpp"
#include "selfpace/synthgen.hpp"

using namespace selfpace;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

/// Runs the tool with the given arguments, capturing output and exit status.
RunResult run_tool(const std::string& args) {
  const std::string cmd = std::string(TOOL_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("selfpace-cli-" + std::to_string(getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

/// Arguments for a small, fast experiment writing artifacts under `out`.
std::string small_experiment(const fs::path& out, const std::string& extra = "") {
  return "experiment --train-pages 8 --test-pages 2 --k 2 --epochs-per-iter 3"
         " --patience 3 --seed 5 --out " +
         out.string() + (extra.empty() ? "" : " " + extra);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate writes a loadable corpus and honours --pages 0") {
  TempDir tmp;
  const auto some = run_tool("generate --out " + (tmp.path / "some").string() +
                             " --pages 3 --seed 9");
  CHECK(some.exit_code == 0);
  const Corpus c = load_corpus(tmp.path / "some" / "manifest.jsonl");
  CHECK(c.pages.size() == 3);
  CHECK(c.pages[0].page.has_pixels());

  const auto none = run_tool("generate --out " + (tmp.path / "none").string() +
                             " --pages 0 --seed 9");
  CHECK(none.exit_code == 0);
  CHECK(count_lines(slurp(tmp.path / "none" / "manifest.jsonl")) == 1);
}

TEST_CASE("generate rejects a negative page count as a usage error") {
  TempDir tmp;
  const auto r = run_tool("generate --out " + (tmp.path / "x").string() +
                          " --pages -1");
  CHECK(r.exit_code == 1);
}

TEST_CASE("generate is reproducible per seed") {
  TempDir tmp;
  run_tool("generate --out " + (tmp.path / "a").string() + " --pages 2 --seed 4");
  run_tool("generate --out " + (tmp.path / "b").string() + " --pages 2 --seed 4");
  run_tool("generate --out " + (tmp.path / "c").string() + " --pages 2 --seed 5");
  CHECK(slurp(tmp.path / "a" / "manifest.jsonl") ==
        slurp(tmp.path / "b" / "manifest.jsonl"));
  CHECK(slurp(tmp.path / "a" / "manifest.jsonl") !=
        slurp(tmp.path / "c" / "manifest.jsonl"));
  CHECK(slurp(tmp.path / "a" / "images" / "page-00001.pgm") ==
        slurp(tmp.path / "b" / "images" / "page-00001.pgm"));
}

TEST_CASE("a small experiment produces the full report row set") {
  TempDir tmp;
  const auto r = run_tool(small_experiment(tmp.path / "run"));
  CHECK(r.exit_code == 0);
  const std::string csv = slurp(tmp.path / "run" / "report.csv");
  // header + baseline + k spl-random + k spl-sorted
  CHECK(count_lines(csv) == 1 + 1 + 2 + 2);
  CHECK(csv.find("baseline,-,") != std::string::npos);
  CHECK(csv.find("spl-random,1,") != std::string::npos);
  CHECK(csv.find("spl-random,2,") != std::string::npos);
  CHECK(csv.find("spl-sorted,1,") != std::string::npos);
  CHECK(csv.find("spl-sorted,2,") != std::string::npos);
  // the console mirrors the table
  CHECK(r.output.find("spl-sorted") != std::string::npos);
  // per-regime artifact tree
  CHECK(fs::exists(tmp.path / "run" / "seed-5" / "baseline" / "model.json"));
  CHECK(fs::exists(tmp.path / "run" / "seed-5" / "spl-sorted" / "curriculum.json"));
  CHECK(fs::exists(tmp.path / "run" / "seed-5" / "spl-sorted" / "iteration-2" /
                   "annotations.jsonl"));
}

TEST_CASE("experiment rejects nonsense parameters as usage errors") {
  TempDir tmp;
  CHECK(run_tool(small_experiment(tmp.path / "a", "--k 0")).exit_code == 1);
  CHECK(run_tool(small_experiment(tmp.path / "b", "--cutoff 1.5")).exit_code == 1);
  CHECK(run_tool(small_experiment(tmp.path / "c", "--seed 1 --seeds 1 2")).exit_code ==
        1);  // mutually exclusive
  // manifests must come in pairs
  CHECK(run_tool(small_experiment(tmp.path / "d",
                                  "--train-manifest /nonexistent.jsonl"))
            .exit_code == 1);
}

TEST_CASE("identical experiment invocations produce byte-identical reports") {
  TempDir tmp;
  const auto r1 = run_tool(small_experiment(tmp.path / "one"));
  const auto r2 = run_tool(small_experiment(tmp.path / "two"));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(tmp.path / "one" / "report.csv") ==
        slurp(tmp.path / "two" / "report.csv"));
}

TEST_CASE("multi-seed experiments add aggregate rows") {
  TempDir tmp;
  const auto r = run_tool(
      "experiment --train-pages 6 --test-pages 2 --k 2 --epochs-per-iter 2"
      " --patience 2 --seeds 1 2 --out " +
      (tmp.path / "run").string());
  REQUIRE(r.exit_code == 0);
  const std::string csv = slurp(tmp.path / "run" / "report.csv");
  CHECK(csv.find("baseline[seed=1],") != std::string::npos);
  CHECK(csv.find("baseline[seed=2],") != std::string::npos);
  CHECK(csv.find("baseline[mean],") != std::string::npos);
  CHECK(csv.find("baseline[std],") != std::string::npos);
  CHECK(csv.find("spl-sorted[mean],") != std::string::npos);
  // 2 seeds x 5 rows, then mean+std per distinct row shape
  CHECK(count_lines(csv) == 1 + 2 * 5 + 2 * 5);
}

TEST_CASE("parallel seeds match the sequential rows exactly") {
  TempDir tmp;
  const auto seq = run_tool(
      "experiment --train-pages 6 --test-pages 2 --k 2 --epochs-per-iter 2"
      " --patience 2 --seeds 3 4 --out " +
      (tmp.path / "seq").string());
  const auto par = run_tool(
      "experiment --train-pages 6 --test-pages 2 --k 2 --epochs-per-iter 2"
      " --patience 2 --seeds 3 4 --parallel-seeds --out " +
      (tmp.path / "par").string());
  REQUIRE(seq.exit_code == 0);
  REQUIRE(par.exit_code == 0);
  CHECK(slurp(tmp.path / "seq" / "report.csv") ==
        slurp(tmp.path / "par" / "report.csv"));
}

TEST_CASE("evaluate scores a prediction file and mirrors it to CSV") {
  TempDir tmp;
  // build a labeled corpus, echo its truth as predictions at score 0.9
  const Corpus c = generate_corpus(PageStyle{}, 2, 3, Split::Test);
  save_corpus(c, tmp.path / "truth" / "manifest.jsonl");
  std::map<std::string, std::vector<BBox>> preds;
  for (const auto& p : c.pages) {
    auto& list = preds[p.page.id];
    for (const auto& ab : p.boxes) {
      BBox b = ab.box;
      b.score = 0.9;
      list.push_back(b);
    }
  }
  write_predictions(preds, tmp.path / "preds.jsonl");

  const auto good = run_tool("evaluate --predictions " +
                             (tmp.path / "preds.jsonl").string() + " --truth " +
                             (tmp.path / "truth" / "manifest.jsonl").string() +
                             " --csv " + (tmp.path / "eval.csv").string() +
                             " --label echo");
  CHECK(good.exit_code == 0);
  CHECK(good.output.find("AP: 100.00") != std::string::npos);
  CHECK(good.output.find("Mean IoU: 100.00") != std::string::npos);
  CHECK(slurp(tmp.path / "eval.csv").find("echo,-,100.00,100.00") !=
        std::string::npos);

  // an empty prediction file scores zero
  std::ofstream(tmp.path / "empty.jsonl");
  const auto zero = run_tool("evaluate --predictions " +
                             (tmp.path / "empty.jsonl").string() + " --truth " +
                             (tmp.path / "truth" / "manifest.jsonl").string());
  CHECK(zero.exit_code == 0);
  CHECK(zero.output.find("AP: 0.00") != std::string::npos);
}

TEST_CASE("evaluate treats an unlabeled truth corpus as a data error") {
  TempDir tmp;
  const Corpus blank = generate_corpus(constant_rows_style(0), 1, 3, Split::Test);
  save_corpus(blank, tmp.path / "truth" / "manifest.jsonl");
  std::ofstream(tmp.path / "empty.jsonl");
  const auto r = run_tool("evaluate --predictions " +
                          (tmp.path / "empty.jsonl").string() + " --truth " +
                          (tmp.path / "truth" / "manifest.jsonl").string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("missing input files are data errors, not crashes") {
  const auto r = run_tool("evaluate --predictions /nonexistent-preds.jsonl"
                          " --truth /nonexistent-truth.jsonl");
  CHECK(r.exit_code == 2);
}

TEST_CASE("a failing external detector surfaces as a training error") {
  TempDir tmp;
  const auto r = run_tool(small_experiment(
      tmp.path / "run", "--detector external --external-command false"));
  CHECK(r.exit_code == 3);
}

TEST_CASE("config files feed defaults that explicit flags override") {
  TempDir tmp;
  std::ofstream(tmp.path / "cfg.json")
      << R"({"k": 2, "train-pages": 8, "test-pages": 2,)"
      << R"( "epochs-per-iter": 3, "patience": 3, "seed": 5})";

  const auto from_cfg =
      run_tool("experiment --config " + (tmp.path / "cfg.json").string() +
               " --out " + (tmp.path / "a").string());
  REQUIRE(from_cfg.exit_code == 0);
  const std::string csv_a = slurp(tmp.path / "a" / "report.csv");
  CHECK(csv_a.find("spl-sorted,2,") != std::string::npos);
  CHECK(csv_a.find("spl-sorted,3,") == std::string::npos);

  const auto overridden =
      run_tool("experiment --config " + (tmp.path / "cfg.json").string() +
               " --k 3 --train-pages 9 --out " + (tmp.path / "b").string());
  REQUIRE(overridden.exit_code == 0);
  CHECK(slurp(tmp.path / "b" / "report.csv").find("spl-sorted,3,") !=
        std::string::npos);

  std::ofstream(tmp.path / "bad.json") << R"({"k": 2, "bogus_key": 1})";
  const auto rejected =
      run_tool("experiment --config " + (tmp.path / "bad.json").string() +
               " --out " + (tmp.path / "c").string());
  CHECK(rejected.exit_code == 2);
  CHECK(rejected.output.find("bogus_key") != std::string::npos);
}

TEST_CASE("import converts a directory of normalized annotations") {
  TempDir tmp;
  const fs::path raw = tmp.path / "raw";
  fs::create_directories(raw);
  std::ofstream(raw / "scan.txt") << "0 0.5 0.5 0.5 0.25\n";
  Eigen::ArrayXXf px = Eigen::ArrayXXf::Constant(40, 80, 0.8f);
  write_pgm(raw / "scan.pgm", px);

  const auto r = run_tool("import --dir " + raw.string() + " --out " +
                          (tmp.path / "imported").string());
  CHECK(r.exit_code == 0);
  const Corpus c = load_corpus(tmp.path / "imported" / "manifest.jsonl");
  REQUIRE(c.pages.size() == 1);
  REQUIRE(c.pages[0].boxes.size() == 1);
  const BBox& b = c.pages[0].boxes[0].box;
  CHECK(b.x == 20.0);
  CHECK(b.y == 15.0);
  CHECK(b.w == 40.0);
  CHECK(b.h == 10.0);
}

TEST_CASE("experiments can consume imported manifests end to end") {
  TempDir tmp;
  // two tiny labeled corpora standing in for train and test manifests
  const Corpus train = generate_corpus(PageStyle{}, 6, 1, Split::Train);
  const Corpus test = generate_corpus(PageStyle{}, 2, 2, Split::Test);
  Corpus renamed = test;  // ids must not collide with the training corpus
  for (auto& p : renamed.pages) {
    p.page.id = "t-" + p.page.id;
    p.page.image = "t-" + p.page.image;
  }
  save_corpus(train, tmp.path / "train" / "manifest.jsonl");
  save_corpus(renamed, tmp.path / "test" / "manifest.jsonl");

  const auto r = run_tool(
      "experiment --train-manifest " +
      (tmp.path / "train" / "manifest.jsonl").string() + " --test-manifest " +
      (tmp.path / "test" / "manifest.jsonl").string() +
      " --k 2 --epochs-per-iter 2 --patience 2 --seed 7 --out " +
      (tmp.path / "run").string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(tmp.path / "run" / "report.csv"));

  // overlapping page ids between the two manifests are rejected
  save_corpus(test, tmp.path / "clash" / "manifest.jsonl");
  const auto clash = run_tool(
      "experiment --train-manifest " +
      (tmp.path / "clash" / "manifest.jsonl").string() + " --test-manifest " +
      (tmp.path / "clash" / "manifest.jsonl").string() +
      " --k 1 --epochs-per-iter 2 --patience 2 --seed 7");
  CHECK(clash.exit_code == 2);
}

TEST_CASE("help is a success, an unknown subcommand is not") {
  CHECK(run_tool("--help").exit_code == 0);
  CHECK(run_tool("frobnicate").exit_code == 1);
  CHECK(run_tool("").exit_code == 1);  // a subcommand is required
}

}  // TEST_SUITE
