#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "selfpace/dataset.hpp"

namespace selfpace {

/// Ordered batch partition B_1..B_k of a training corpus: batches are
/// disjoint, cover every page, and differ in size by at most one.
struct Curriculum {
  std::vector<std::vector<std::string>> batches;

  int k() const { return static_cast<int>(batches.size()); }
  std::size_t total_pages() const;
};

/// Pages sorted by ground-truth box count descending (ties by ascending page
/// id), then cut into k contiguous batches; when the page count is not a
/// multiple of k the earlier batches take the extra page. Throws
/// std::invalid_argument when k is out of [1, page count].
Curriculum build_sorted_curriculum(const Corpus& corpus, int k);

/// Seeded uniform shuffle cut into k near-equal batches; no ordering
/// guarantee across batches.
Curriculum build_random_curriculum(const Corpus& corpus, int k, std::uint64_t seed);

std::string curriculum_to_json(const Curriculum& c);
Curriculum curriculum_from_json(const std::string& text);
void save_curriculum(const Curriculum& c, const std::filesystem::path& path);
Curriculum load_curriculum(const std::filesystem::path& path);

}  // namespace selfpace
