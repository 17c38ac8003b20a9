#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ssgrl {

/// Training label sets, one per sample. Label indices are < C; duplicates
/// within a sample collapse (std::set).
struct AnnotationSet {
  std::vector<std::string> categories;
  std::vector<std::pair<std::string, std::set<int>>> samples;

  int C() const { return static_cast<int>(categories.size()); }
};

/// C x C conditional-probability adjacency. a(c, c') is the empirical
/// probability that category c' is present given c is present. Rows and
/// columns of zero-support categories are all zero; the diagonal is 1
/// wherever support is positive. Immutable once built.
class CooccurrenceGraph {
 public:
  CooccurrenceGraph(std::vector<std::string> categories,
                    std::vector<double> adjacency,
                    std::vector<std::int64_t> support);

  int C() const { return static_cast<int>(categories_.size()); }
  double a(int c, int cp) const {
    return adjacency_[static_cast<std::size_t>(c) * categories_.size() + cp];
  }
  const std::vector<double>& adjacency() const { return adjacency_; }
  const std::vector<std::string>& categories() const { return categories_; }
  std::int64_t support(int c) const { return support_[static_cast<std::size_t>(c)]; }

  // Value identity is the serialized content: names and matrix. Support
  // counts are a build-time byproduct and are not persisted.
  bool operator==(const CooccurrenceGraph& other) const {
    return categories_ == other.categories_ && adjacency_ == other.adjacency_;
  }

 private:
  std::vector<std::string> categories_;
  std::vector<double> adjacency_;        // row-major C x C
  std::vector<std::int64_t> support_;    // per-category positive counts
};

/// a(c, c') = |{i : c and c' both in y_i}| / |{i : c in y_i}|, zero when the
/// denominator is zero. Throws ConfigError on an empty annotation set.
CooccurrenceGraph build_graph(const AnnotationSet& ann);

/// Text format: line 1 "cooccurrence v1 C=<int>", line 2 comma-separated
/// category names, then C lines of C space-separated decimals (17
/// significant digits, so save/load round-trips exactly). LF line endings.
void save_graph(const CooccurrenceGraph& g, const std::filesystem::path& path);
CooccurrenceGraph load_graph(const std::filesystem::path& path);

}  // namespace ssgrl
