#include "selfpace/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "selfpace/errors.hpp"
#include "selfpace/random.hpp"

namespace selfpace {

using nlohmann::json;
using nlohmann::ordered_json;

void validate_style(const PageStyle& s) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DataError(std::string("page style: ") + what);
  };
  require(s.page_width >= 1 && s.page_height >= 1, "page size must be positive");
  require(s.margin >= 0, "margin must be non-negative");
  require(s.rows_min >= 0 && s.rows_min <= s.rows_max, "empty rows range");
  require(s.row_height_min >= 1 && s.row_height_min <= s.row_height_max,
          "empty row height range");
  require(s.gap_min >= 0 && s.gap_min <= s.gap_max, "empty gap range");
  require(s.row_extent_min > 0.0 && s.row_extent_min <= s.row_extent_max &&
              s.row_extent_max <= 1.0,
          "row extent fractions must satisfy 0 < min <= max <= 1");
  require(s.ink_min >= 0.0f && s.ink_min <= s.ink_max && s.ink_max <= 1.0f,
          "ink range must lie in [0,1]");
  require(s.background_min >= 0.0f && s.background_min <= s.background_max &&
              s.background_max <= 1.0f,
          "background range must lie in [0,1]");
  require(s.noise_sigma >= 0.0f, "noise sigma must be non-negative");
  require(s.stains_min >= 0 && s.stains_min <= s.stains_max, "empty stain count range");
  require(s.stain_radius_min >= 1 && s.stain_radius_min <= s.stain_radius_max,
          "empty stain radius range");
  require(s.stain_opacity_max >= 0.0f && s.stain_opacity_max <= 1.0f,
          "stain opacity must lie in [0,1]");
  require(2 * s.margin < s.page_width, "margins exceed page width");
  // worst-case vertical layout must fit
  const long need = static_cast<long>(s.rows_max) * (s.row_height_min + s.gap_min) +
                    2L * s.margin;
  require(need <= s.page_height, "max rows do not fit the page height");
  const long inner_w = s.page_width - 2L * s.margin;
  require(static_cast<long>(std::floor(s.row_extent_min * inner_w)) >= 1,
          "inner width too small for the minimum row extent");
}

PageStyle constant_rows_style(int rows) {
  PageStyle s;
  s.rows_min = rows;
  s.rows_max = rows;
  validate_style(s);
  return s;
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PageStyle style_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("style: bad JSON: ") + e.what());
  }
  PageStyle s;
  read_field(j, "page_width", s.page_width);
  read_field(j, "page_height", s.page_height);
  read_field(j, "rows_min", s.rows_min);
  read_field(j, "rows_max", s.rows_max);
  read_field(j, "row_height_min", s.row_height_min);
  read_field(j, "row_height_max", s.row_height_max);
  read_field(j, "gap_min", s.gap_min);
  read_field(j, "gap_max", s.gap_max);
  read_field(j, "row_extent_min", s.row_extent_min);
  read_field(j, "row_extent_max", s.row_extent_max);
  read_field(j, "ink_min", s.ink_min);
  read_field(j, "ink_max", s.ink_max);
  read_field(j, "background_min", s.background_min);
  read_field(j, "background_max", s.background_max);
  read_field(j, "noise_sigma", s.noise_sigma);
  read_field(j, "stains_min", s.stains_min);
  read_field(j, "stains_max", s.stains_max);
  read_field(j, "stain_radius_min", s.stain_radius_min);
  read_field(j, "stain_radius_max", s.stain_radius_max);
  read_field(j, "stain_opacity_max", s.stain_opacity_max);
  read_field(j, "margin", s.margin);
  validate_style(s);
  return s;
}

PageStyle style_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open style file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return style_from_json_string(text);
}

std::string style_to_json_string(const PageStyle& s) {
  ordered_json j;
  j["page_width"] = s.page_width;
  j["page_height"] = s.page_height;
  j["rows_min"] = s.rows_min;
  j["rows_max"] = s.rows_max;
  j["row_height_min"] = s.row_height_min;
  j["row_height_max"] = s.row_height_max;
  j["gap_min"] = s.gap_min;
  j["gap_max"] = s.gap_max;
  j["row_extent_min"] = s.row_extent_min;
  j["row_extent_max"] = s.row_extent_max;
  j["ink_min"] = s.ink_min;
  j["ink_max"] = s.ink_max;
  j["background_min"] = s.background_min;
  j["background_max"] = s.background_max;
  j["noise_sigma"] = s.noise_sigma;
  j["stains_min"] = s.stains_min;
  j["stains_max"] = s.stains_max;
  j["stain_radius_min"] = s.stain_radius_min;
  j["stain_radius_max"] = s.stain_radius_max;
  j["stain_opacity_max"] = s.stain_opacity_max;
  j["margin"] = s.margin;
  return j.dump(2) + "\n";
}

namespace {

int draw_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

float draw_real(std::mt19937_64& rng, float lo, float hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}

}  // namespace

AnnotatedPage generate_page(const PageStyle& style, std::uint64_t seed,
                            const std::string& id) {
  validate_style(style);
  auto rng = std::mt19937_64(mix_seed(seed, hash_str(id)));

  const int W = style.page_width;
  const int H = style.page_height;
  const int inner_x0 = style.margin;
  const int inner_w = W - 2 * style.margin;
  const int n_rows = draw_int(rng, style.rows_min, style.rows_max);

  // Vertical layout: draw heights and gaps inside the margins, capping each
  // draw so the remaining slots can still meet their minima. The style
  // invariant guarantees the all-minima layout fits.
  const int available = H - 2 * style.margin;
  std::vector<int> heights(n_rows), gaps(std::max(0, n_rows - 1));
  int consumed = 0;
  for (int i = 0; i < n_rows; ++i) {
    int remaining_min = (n_rows - 1 - i) * (style.row_height_min + style.gap_min);
    int cap = available - consumed - remaining_min;
    heights[i] = draw_int(rng, style.row_height_min,
                          std::min(style.row_height_max, cap));
    consumed += heights[i];
    if (i + 1 < n_rows) {
      remaining_min = (n_rows - 1 - i) * style.row_height_min +
                      (n_rows - 2 - i) * style.gap_min;
      cap = available - consumed - remaining_min;
      gaps[i] = draw_int(rng, style.gap_min, std::min(style.gap_max, cap));
      consumed += gaps[i];
    }
  }

  AnnotatedPage page;
  page.page.id = id;
  page.page.image = "images/" + id + ".pgm";
  page.page.width = W;
  page.page.height = H;

  const float tint = draw_real(rng, style.background_min, style.background_max);
  Eigen::ArrayXXf px = Eigen::ArrayXXf::Constant(H, W, tint);

  int y = style.margin;
  for (int i = 0; i < n_rows; ++i) {
    const double extent = std::uniform_real_distribution<double>(
        style.row_extent_min, style.row_extent_max)(rng);
    const int row_w = std::max(1, static_cast<int>(std::floor(extent * inner_w)));
    const int x = inner_x0 + draw_int(rng, 0, inner_w - row_w);
    const float ink = draw_real(rng, style.ink_min, style.ink_max);
    px.block(y, x, heights[i], row_w) = ink;
    BBox b;
    b.x = x;
    b.y = y;
    b.w = row_w;
    b.h = heights[i];
    b.score = kGroundTruthScore;
    page.boxes.push_back({b, Provenance::GroundTruth});
    y += heights[i];
    if (i + 1 < n_rows) y += gaps[i];
  }

  const int n_stains = draw_int(rng, style.stains_min, style.stains_max);
  for (int s = 0; s < n_stains; ++s) {
    const int cx = draw_int(rng, 0, W - 1);
    const int cy = draw_int(rng, 0, H - 1);
    const int rx = draw_int(rng, style.stain_radius_min, style.stain_radius_max);
    const int ry = draw_int(rng, style.stain_radius_min, style.stain_radius_max);
    const float opacity = draw_real(rng, 0.0f, style.stain_opacity_max);
    const float stain_ink = draw_real(rng, style.ink_min, style.ink_max);
    const int r0 = std::max(0, cy - ry), r1 = std::min(H - 1, cy + ry);
    const int c0 = std::max(0, cx - rx), c1 = std::min(W - 1, cx + rx);
    for (int r = r0; r <= r1; ++r) {
      const float dy = static_cast<float>(r - cy) / static_cast<float>(ry);
      for (int c = c0; c <= c1; ++c) {
        const float dx = static_cast<float>(c - cx) / static_cast<float>(rx);
        if (dx * dx + dy * dy <= 1.0f)
          px(r, c) = px(r, c) * (1.0f - opacity) + stain_ink * opacity;
      }
    }
  }

  if (style.noise_sigma > 0.0f) {
    std::normal_distribution<float> noise(0.0f, style.noise_sigma);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        px(r, c) = std::clamp(px(r, c) + noise(rng), 0.0f, 1.0f);
  }

  page.page.pixels = std::move(px);
  return page;
}

Corpus generate_corpus(const PageStyle& style, int n_pages, std::uint64_t seed,
                       Split split) {
  if (n_pages < 0) throw DataError("generate_corpus: negative page count");
  validate_style(style);
  Corpus corpus;
  corpus.split = split;
  corpus.pages.reserve(static_cast<std::size_t>(n_pages));
  for (int i = 0; i < n_pages; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "page-%05d", i);
    corpus.pages.push_back(
        generate_page(style, mix_seed(seed, static_cast<std::uint64_t>(i)), buf));
  }
  return corpus;
}

}  // namespace selfpace
