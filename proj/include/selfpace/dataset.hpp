#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selfpace/geometry.hpp"

namespace selfpace {

/// Grayscale page raster; intensities in [0,1], shape height x width.
/// `pixels` may be empty when a corpus was loaded without image data, in
/// which case `width`/`height` still describe the page geometry.
struct PageImage {
  std::string id;
  std::string image;  // image path, relative to the manifest directory
  int width = 0;
  int height = 0;
  Eigen::ArrayXXf pixels;  // height x width, or 0x0 when not loaded

  bool has_pixels() const { return pixels.size() > 0; }
};

enum class Provenance { GroundTruth, Pseudo };

struct AnnotatedBox {
  BBox box;
  Provenance provenance = Provenance::GroundTruth;
};

struct AnnotatedPage {
  PageImage page;
  std::vector<AnnotatedBox> boxes;  // the working annotation set T_x
};

enum class Split { Train, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Corpus {
  Split split = Split::Train;
  std::vector<AnnotatedPage> pages;

  std::size_t total_boxes() const;
  const AnnotatedPage* find(const std::string& id) const;
};

/// Checks every corpus invariant (positive box sizes, scores, provenance /
/// score coupling, boxes inside page bounds, unique page ids).
/// Throws DataError naming the offending page.
void validate_corpus(const Corpus& corpus);

// ---- PGM raster I/O (binary 8-bit P5, intensities mapped linearly to [0,1])

Eigen::ArrayXXf read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Eigen::ArrayXXf& pixels);

// ---- JSONL manifest I/O
//
// One page per line:
//   {"id":..., "image":..., "width":..., "height":..., "boxes":[...]}
// preceded by a header line {"format":"selfpace-rows","version":1,"split":...}.
// Box fields: x, y, w, h, score, provenance ("gt" | "pseudo"). A gt box with
// no score field defaults to score 1.

enum class LoadImages { Yes, No };

Corpus load_corpus(const std::filesystem::path& manifest_path,
                   LoadImages load_images = LoadImages::Yes);

/// Writes the manifest and, when `write_images` is set and pages carry pixel
/// data, the referenced PGM files (relative to the manifest directory).
/// Serialization is deterministic; re-saving a loaded corpus is byte-identical.
void save_corpus(const Corpus& corpus, const std::filesystem::path& manifest_path,
                 bool write_images = true);

std::string corpus_manifest_string(const Corpus& corpus);

// ---- Prediction I/O (JSONL, one {"id":..., "boxes":[{x,y,w,h,score}]} per page)

/// Writes one line per page in ascending page-id order; deterministic.
void write_predictions(const std::map<std::string, std::vector<BBox>>& predictions,
                       const std::filesystem::path& path);

/// Reads the format written by write_predictions. Scores must lie in [0, 1],
/// boxes must have positive extent, and page ids must be unique; violations
/// raise DataError.
std::map<std::string, std::vector<BBox>> read_predictions(
    const std::filesystem::path& path);

// ---- Missing-label simulator

/// Per-page drop-rate policy: either a constant rate or a Beta(alpha, beta)
/// draw per page, followed by independent per-box Bernoulli removal.
struct DropPolicy {
  enum class Kind { Constant, Beta };
  Kind kind = Kind::Beta;
  double rate = 0.0;   // Constant
  double alpha = 2.0;  // Beta
  double beta = 5.0;

  static DropPolicy constant(double rate);
  static DropPolicy beta_rate(double alpha = 2.0, double beta = 5.0);
};

void validate_policy(const DropPolicy& policy);

/// Removes ground-truth boxes at a per-page rate drawn from `policy`. The
/// corpus must carry only ground-truth boxes (DataError otherwise).
/// Deterministic given (corpus, policy, seed); never adds, moves or rescores
/// boxes and never touches page images. Pages may end up with zero boxes.
/// When `drawn_rates` is non-null it receives the per-page drop rate, in
/// corpus page order.
Corpus drop_labels(const Corpus& corpus, const DropPolicy& policy, std::uint64_t seed,
                   std::vector<double>* drawn_rates = nullptr);

// ---- Normalized center-format annotation import
//
// Directory layout: <page-id>.txt beside <page-id>.pgm; each text line is
// "class cx cy w h" with coordinates normalized to [0,1]. The class index is
// ignored (single-class task); boxes are converted to absolute top-left form
// and clamped to the page.

using SizeLookup =
    std::function<std::optional<std::pair<int, int>>(const std::string& page_id)>;

Corpus import_normalized_annotations(const std::filesystem::path& dir,
                                     const SizeLookup& size_lookup = {},
                                     Split split = Split::Train);

}  // namespace selfpace
