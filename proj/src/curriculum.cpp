#include "selfpace/curriculum.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selfpace/errors.hpp"

namespace selfpace {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t Curriculum::total_pages() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

namespace {

std::size_t ground_truth_count(const AnnotatedPage& page) {
  std::size_t n = 0;
  for (const auto& ab : page.boxes)
    if (ab.provenance == Provenance::GroundTruth) ++n;
  return n;
}

Curriculum slice_into_batches(std::vector<std::string> ordered_ids, int k) {
  const std::size_t n = ordered_ids.size();
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  Curriculum c;
  c.batches.resize(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    c.batches[i].assign(ordered_ids.begin() + static_cast<std::ptrdiff_t>(pos),
                        ordered_ids.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return c;
}

void check_k(const Corpus& corpus, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > corpus.pages.size())
    throw std::invalid_argument("curriculum: k must lie in [1, page count]");
}

}  // namespace

Curriculum build_sorted_curriculum(const Corpus& corpus, int k) {
  check_k(corpus, k);
  std::vector<std::pair<std::size_t, std::string>> keyed;
  keyed.reserve(corpus.pages.size());
  for (const auto& page : corpus.pages)
    keyed.emplace_back(ground_truth_count(page), page.page.id);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> ids;
  ids.reserve(keyed.size());
  for (auto& kv : keyed) ids.push_back(std::move(kv.second));
  return slice_into_batches(std::move(ids), k);
}

Curriculum build_random_curriculum(const Corpus& corpus, int k, std::uint64_t seed) {
  check_k(corpus, k);
  std::vector<std::string> ids;
  ids.reserve(corpus.pages.size());
  for (const auto& page : corpus.pages) ids.push_back(page.page.id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return slice_into_batches(std::move(ids), k);
}

std::string curriculum_to_json(const Curriculum& c) {
  ordered_json j;
  j["k"] = c.k();
  j["batches"] = c.batches;
  return j.dump(2) + "\n";
}

Curriculum curriculum_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("curriculum: bad JSON: ") + e.what());
  }
  Curriculum c;
  try {
    c.batches = j.at("batches").get<std::vector<std::vector<std::string>>>();
    if (j.contains("k") && j.at("k").get<int>() != c.k())
      throw DataError("curriculum: k does not match batch count");
  } catch (const json::exception& e) {
    throw DataError(std::string("curriculum: bad structure: ") + e.what());
  }
  return c;
}

void save_curriculum(const Curriculum& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write curriculum: " + path.string());
  out << curriculum_to_json(c);
}

Curriculum load_curriculum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open curriculum: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return curriculum_from_json(text);
}

}  // namespace selfpace
