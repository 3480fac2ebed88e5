#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "selfpace/dataset.hpp"

namespace selfpace {

/// Parameters of the synthetic "historical page" generator: dark horizontal
/// text bands with jittered geometry over a tinted, noisy, stained background.
struct PageStyle {
  int page_width = 256;
  int page_height = 384;
  int rows_min = 8;
  int rows_max = 14;
  int row_height_min = 12;
  int row_height_max = 20;
  int gap_min = 4;
  int gap_max = 10;
  double row_extent_min = 0.60;  // horizontal extent, fraction of inner width
  double row_extent_max = 0.95;
  float ink_min = 0.10f;
  float ink_max = 0.35f;
  float background_min = 0.75f;
  float background_max = 0.95f;
  float noise_sigma = 0.05f;
  int stains_min = 0;
  int stains_max = 3;
  int stain_radius_min = 8;
  int stain_radius_max = 24;
  float stain_opacity_max = 0.30f;
  int margin = 12;
};

/// Rejects styles whose worst-case layout cannot fit, empty ranges and
/// intensities outside [0,1]. Throws DataError.
void validate_style(const PageStyle& style);

/// Default style with the rows-per-page count pinned to a constant.
PageStyle constant_rows_style(int rows);

PageStyle style_from_json_file(const std::filesystem::path& path);
PageStyle style_from_json_string(const std::string& text);
std::string style_to_json_string(const PageStyle& style);

/// Renders one fully labeled page: n text bands (n drawn from the style's
/// rows distribution) with one ground-truth box per band, plus background
/// tint, stains and pixel noise. Bit-deterministic given (style, seed, id).
AnnotatedPage generate_page(const PageStyle& style, std::uint64_t seed,
                            const std::string& id);

/// Pages "page-00000", "page-00001", ... with per-page seeds derived from
/// (seed, index).
Corpus generate_corpus(const PageStyle& style, int n_pages, std::uint64_t seed,
                       Split split);

}  // namespace selfpace
