#include "selfpace/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selfpace/errors.hpp"
#include "selfpace/random.hpp"

namespace selfpace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw DataError("unknown split tag: " + name);
}

std::size_t Corpus::total_boxes() const {
  std::size_t n = 0;
  for (const auto& p : pages) n += p.boxes.size();
  return n;
}

const AnnotatedPage* Corpus::find(const std::string& id) const {
  for (const auto& p : pages)
    if (p.page.id == id) return &p;
  return nullptr;
}

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& page : corpus.pages) {
    const auto& pg = page.page;
    if (pg.id.empty()) throw DataError("page with empty id");
    if (!ids.insert(pg.id).second) throw DataError("duplicate page id: " + pg.id);
    if (pg.width < 1 || pg.height < 1)
      throw DataError("page " + pg.id + ": non-positive dimensions");
    if (pg.has_pixels() &&
        (pg.pixels.rows() != pg.height || pg.pixels.cols() != pg.width))
      throw DataError("page " + pg.id + ": pixel grid does not match width/height");
    for (const auto& ab : page.boxes) {
      const BBox& b = ab.box;
      if (!box_valid(b))
        throw DataError("page " + pg.id + ": invalid box (w,h must be > 0, score in [0,1])");
      if (b.x < 0 || b.y < 0 || b.x + b.w > pg.width || b.y + b.h > pg.height)
        throw DataError("page " + pg.id + ": box outside page bounds");
      if (ab.provenance == Provenance::GroundTruth && !is_ground_truth_score(b.score))
        throw DataError("page " + pg.id + ": ground-truth box with score != 1");
      if (ab.provenance == Provenance::Pseudo && b.score >= kGroundTruthScore)
        throw DataError("page " + pg.id + ": pseudo box with score >= 1");
    }
  }
}

// ---- PGM

Eigen::ArrayXXf read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());

  auto next_token = [&in, &path]() -> std::string {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw DataError("truncated PGM header: " + path.string());
  };

  if (next_token() != "P5") throw DataError("not a binary PGM (P5): " + path.string());
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw DataError("unsupported PGM geometry in " + path.string());
  in.get();  // single whitespace byte after maxval

  std::vector<unsigned char> raster(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size()))
    throw DataError("truncated PGM raster: " + path.string());

  Eigen::ArrayXXf pixels(h, w);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      pixels(r, c) = scale * raster[static_cast<std::size_t>(r) * w + c];
  return pixels;
}

void write_pgm(const std::filesystem::path& path, const Eigen::ArrayXXf& pixels) {
  const int h = static_cast<int>(pixels.rows());
  const int w = static_cast<int>(pixels.cols());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const float v = std::clamp(pixels(r, c), 0.0f, 1.0f);
      raster[static_cast<std::size_t>(r) * w + c] =
          static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) throw DataError("failed writing image: " + path.string());
}

// ---- manifest

namespace {

constexpr const char* kFormatName = "selfpace-rows";
constexpr int kFormatVersion = 1;

ordered_json box_to_json(const AnnotatedBox& ab) {
  ordered_json j;
  j["x"] = ab.box.x;
  j["y"] = ab.box.y;
  j["w"] = ab.box.w;
  j["h"] = ab.box.h;
  j["score"] = ab.box.score;
  j["provenance"] = ab.provenance == Provenance::GroundTruth ? "gt" : "pseudo";
  return j;
}

AnnotatedBox box_from_json(const json& j, const std::string& page_id) {
  AnnotatedBox ab;
  try {
    ab.box.x = j.at("x").get<double>();
    ab.box.y = j.at("y").get<double>();
    ab.box.w = j.at("w").get<double>();
    ab.box.h = j.at("h").get<double>();
  } catch (const json::exception& e) {
    throw DataError("page " + page_id + ": bad box: " + e.what());
  }
  const std::string prov = j.value("provenance", "gt");
  if (prov == "gt")
    ab.provenance = Provenance::GroundTruth;
  else if (prov == "pseudo")
    ab.provenance = Provenance::Pseudo;
  else
    throw DataError("page " + page_id + ": unknown provenance: " + prov);
  if (j.contains("score")) {
    ab.box.score = j.at("score").get<double>();
  } else if (ab.provenance == Provenance::GroundTruth) {
    ab.box.score = kGroundTruthScore;
  } else {
    throw DataError("page " + page_id + ": pseudo box without score");
  }
  return ab;
}

}  // namespace

std::string corpus_manifest_string(const Corpus& corpus) {
  std::ostringstream out;
  ordered_json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  header["split"] = split_name(corpus.split);
  out << header.dump() << "\n";
  for (const auto& page : corpus.pages) {
    ordered_json j;
    j["id"] = page.page.id;
    j["image"] = page.page.image;
    j["width"] = page.page.width;
    j["height"] = page.page.height;
    ordered_json boxes = ordered_json::array();
    for (const auto& ab : page.boxes) boxes.push_back(box_to_json(ab));
    j["boxes"] = std::move(boxes);
    out << j.dump() << "\n";
  }
  return out.str();
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& manifest_path,
                 bool write_images) {
  validate_corpus(corpus);
  const auto dir = manifest_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
  out << corpus_manifest_string(corpus);
  if (!out) throw DataError("failed writing manifest: " + manifest_path.string());
  if (!write_images) return;
  for (const auto& page : corpus.pages) {
    if (!page.page.has_pixels()) continue;
    const auto img_path = dir / page.page.image;
    if (!img_path.parent_path().empty())
      std::filesystem::create_directories(img_path.parent_path());
    write_pgm(img_path, page.page.pixels);
  }
}

Corpus load_corpus(const std::filesystem::path& manifest_path, LoadImages load_images) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
  const auto dir = manifest_path.parent_path();

  std::string line;
  int line_no = 0;
  auto parse_line = [&](const std::string& text) -> json {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw DataError("manifest " + manifest_path.string() + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
  };

  if (!std::getline(in, line))
    throw DataError("manifest " + manifest_path.string() + ": missing header line");
  ++line_no;
  const json header = parse_line(line);
  if (header.value("format", "") != kFormatName)
    throw DataError("manifest " + manifest_path.string() + ": not a " +
                    std::string(kFormatName) + " manifest");
  if (header.value("version", 0) != kFormatVersion)
    throw DataError("manifest " + manifest_path.string() + ": unsupported version");

  Corpus corpus;
  corpus.split = split_from_name(header.value("split", "train"));

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(line);
    AnnotatedPage page;
    try {
      page.page.id = j.at("id").get<std::string>();
      page.page.image = j.at("image").get<std::string>();
      page.page.width = j.at("width").get<int>();
      page.page.height = j.at("height").get<int>();
    } catch (const json::exception& e) {
      throw DataError("manifest " + manifest_path.string() + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    for (const auto& bj : j.value("boxes", json::array()))
      page.boxes.push_back(box_from_json(bj, page.page.id));
    if (load_images == LoadImages::Yes) {
      page.page.pixels = read_pgm(dir / page.page.image);
      if (page.page.pixels.rows() != page.page.height ||
          page.page.pixels.cols() != page.page.width)
        throw DataError("page " + page.page.id + ": image size differs from manifest");
    }
    corpus.pages.push_back(std::move(page));
  }
  validate_corpus(corpus);
  return corpus;
}

// ---- predictions

void write_predictions(const std::map<std::string, std::vector<BBox>>& predictions,
                       const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write predictions: " + path.string());
  for (const auto& [id, boxes] : predictions) {
    ordered_json j;
    j["id"] = id;
    ordered_json arr = ordered_json::array();
    for (const BBox& b : boxes) {
      ordered_json bj;
      bj["x"] = b.x;
      bj["y"] = b.y;
      bj["w"] = b.w;
      bj["h"] = b.h;
      bj["score"] = b.score;
      arr.push_back(std::move(bj));
    }
    j["boxes"] = std::move(arr);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("failed writing predictions: " + path.string());
}

std::map<std::string, std::vector<BBox>> read_predictions(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path.string());
  std::map<std::string, std::vector<BBox>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("predictions " + path.string() + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("id") || !j["id"].is_string())
      throw DataError("predictions " + path.string() + " line " +
                      std::to_string(line_no) + ": missing string 'id'");
    const std::string id = j["id"].get<std::string>();
    if (out.count(id))
      throw DataError("predictions " + path.string() + ": duplicate page id '" + id +
                      "'");
    std::vector<BBox> boxes;
    for (const json& bj : j.value("boxes", json::array())) {
      BBox b;
      try {
        b.x = bj.at("x").get<double>();
        b.y = bj.at("y").get<double>();
        b.w = bj.at("w").get<double>();
        b.h = bj.at("h").get<double>();
        b.score = bj.at("score").get<double>();
      } catch (const json::exception& e) {
        throw DataError("predictions " + path.string() + " page '" + id +
                        "': bad box: " + e.what());
      }
      if (!box_valid(b))
        throw DataError("predictions " + path.string() + " page '" + id +
                        "': degenerate box");
      if (!(b.score >= 0.0 && b.score <= 1.0))
        throw DataError("predictions " + path.string() + " page '" + id +
                        "': score outside [0,1]");
      boxes.push_back(b);
    }
    out.emplace(id, std::move(boxes));
  }
  return out;
}

// ---- drop simulator

DropPolicy DropPolicy::constant(double rate) {
  DropPolicy p;
  p.kind = Kind::Constant;
  p.rate = rate;
  return p;
}

DropPolicy DropPolicy::beta_rate(double alpha, double beta) {
  DropPolicy p;
  p.kind = Kind::Beta;
  p.alpha = alpha;
  p.beta = beta;
  return p;
}

void validate_policy(const DropPolicy& policy) {
  if (policy.kind == DropPolicy::Kind::Constant) {
    if (!(policy.rate >= 0.0 && policy.rate <= 1.0))
      throw DataError("drop policy: constant rate must lie in [0,1]");
  } else {
    if (!(policy.alpha > 0.0 && policy.beta > 0.0))
      throw DataError("drop policy: Beta parameters must be positive");
  }
}

namespace {

double draw_rate(const DropPolicy& policy, std::mt19937_64& rng) {
  if (policy.kind == DropPolicy::Kind::Constant) return policy.rate;
  std::gamma_distribution<double> ga(policy.alpha, 1.0);
  std::gamma_distribution<double> gb(policy.beta, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a / (a + b);
}

}  // namespace

Corpus drop_labels(const Corpus& corpus, const DropPolicy& policy, std::uint64_t seed,
                   std::vector<double>* drawn_rates) {
  validate_policy(policy);
  if (drawn_rates) drawn_rates->clear();
  Corpus out;
  out.split = corpus.split;
  out.pages.reserve(corpus.pages.size());
  std::size_t index = 0;
  for (const auto& page : corpus.pages) {
    auto rng = std::mt19937_64(mix_seed(seed, mix_seed(index, hash_str(page.page.id))));
    const double rate = draw_rate(policy, rng);
    if (drawn_rates) drawn_rates->push_back(rate);
    AnnotatedPage kept;
    kept.page = page.page;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& ab : page.boxes) {
      if (ab.provenance != Provenance::GroundTruth)
        throw DataError("drop_labels: page " + page.page.id +
                        " carries pseudo boxes; only ground-truth corpora can be "
                        "damaged");
      if (unit(rng) >= rate) kept.boxes.push_back(ab);
    }
    out.pages.push_back(std::move(kept));
    ++index;
  }
  return out;
}

// ---- normalized-annotation import

Corpus import_normalized_annotations(const std::filesystem::path& dir,
                                     const SizeLookup& size_lookup, Split split) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("not a directory: " + dir.string());

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  Corpus corpus;
  corpus.split = split;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    AnnotatedPage page;
    page.page.id = id;
    page.page.image = id + ".pgm";

    const auto pgm_path = dir / (id + ".pgm");
    if (size_lookup) {
      const auto size = size_lookup(id);
      if (!size) throw DataError("page " + id + ": missing image dimensions");
      page.page.width = size->first;
      page.page.height = size->second;
    } else if (std::filesystem::exists(pgm_path)) {
      page.page.pixels = read_pgm(pgm_path);
      page.page.width = static_cast<int>(page.page.pixels.cols());
      page.page.height = static_cast<int>(page.page.pixels.rows());
    } else {
      throw DataError("page " + id + ": missing image dimensions (no " +
                      pgm_path.filename().string() + ")");
    }

    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      int cls = 0;
      double cx, cy, nw, nh;
      if (!(ls >> cls >> cx >> cy >> nw >> nh))
        throw DataError("page " + id + " line " + std::to_string(line_no) +
                        ": expected 'class cx cy w h'");
      for (double v : {cx, cy, nw, nh})
        if (!(v >= 0.0 && v <= 1.0))
          throw DataError("page " + id + " line " + std::to_string(line_no) +
                          ": value outside [0,1]");
      const double W = page.page.width;
      const double H = page.page.height;
      BBox b;
      b.x = (cx - nw / 2.0) * W;
      b.y = (cy - nh / 2.0) * H;
      b.w = nw * W;
      b.h = nh * H;
      b.score = kGroundTruthScore;
      // clamp into the page; normalized centers may spill over the border
      const double x2 = std::min(b.x + b.w, W);
      const double y2 = std::min(b.y + b.h, H);
      b.x = std::max(b.x, 0.0);
      b.y = std::max(b.y, 0.0);
      b.w = x2 - b.x;
      b.h = y2 - b.y;
      if (b.w <= 0.0 || b.h <= 0.0)
        throw DataError("page " + id + " line " + std::to_string(line_no) +
                        ": degenerate box");
      page.boxes.push_back({b, Provenance::GroundTruth});
    }
    corpus.pages.push_back(std::move(page));
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace selfpace
