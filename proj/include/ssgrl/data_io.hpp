#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ssgrl/cooccurrence.hpp"
#include "ssgrl/decoupling.hpp"

namespace ssgrl {

struct ManifestEntry {
  std::string id;
  std::string path;         // feature-map file, relative to the manifest
  std::vector<int> labels;  // sorted, unique, < C
};

/// One split of a dataset on disk. TSV, UTF-8, LF:
///   line 1: "manifest v1 split=<name> C=<int>"
///   line 2: comma-separated category names
///   then one "<id>\t<path>\t<comma-separated label names>" per sample.
struct DatasetManifest {
  std::string split;
  std::vector<std::string> categories;
  std::vector<ManifestEntry> entries;

  int C() const { return static_cast<int>(categories.size()); }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Annotations alone (no feature-map paths), the input of build-graph:
///   line 1: "annotations v1 C=<int>"
///   line 2: comma-separated category names
///   then one "<id>\t<comma-separated label names>" per sample.
AnnotationSet load_annotations(const std::filesystem::path& path);
void save_annotations(const AnnotationSet& ann,
                      const std::filesystem::path& path);

/// GloVe-style text table: "<word> <v1> ... <v_ds>" per line. Every category
/// word must be present; the table is returned in category order.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::vector<std::string>& categories);
void save_embeddings(const EmbeddingTable& table,
                     const std::filesystem::path& path);

/// Binary feature map: magic "FMAP1", then u32 little-endian W, H, N, then
/// W*H*N f32 little-endian values in (w-major, then h, then channel) order.
/// Values are widened to f64 in memory.
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path);

/// Recipe for the planted-pattern generator that stands in for a CNN
/// backbone: each category gets a fixed random channel signature and home
/// location; samples carrying the label receive the signature at that
/// location on top of gaussian noise.
struct SyntheticSpec {
  int C = 4;
  int W = 2, H = 2, N = 8;
  int d_s = 5;
  int train_samples = 16;
  int test_samples = 8;
  double label_density = 1.5;   // mean labels per sample, in (0, C]
  double pattern_strength = 3.0;
  double noise_sigma = 0.25;
  std::vector<std::pair<int, int>> bias_pairs;  // (a,b): b boosted when a drawn
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticSummary {
  std::vector<std::string> categories;
  int train_samples = 0;
  int test_samples = 0;
  // Ground truth of the plant, for inspection tests.
  std::vector<std::pair<int, int>> home_locations;  // (w, h) per category
  std::vector<std::vector<double>> patterns;        // N-dim per category
};

/// Writes embeddings.txt, {train,test}_manifest.tsv,
/// {train,test}_annotations.tsv and fmaps/<id>.fmap under out_dir. The whole
/// dataset is a pure function of the spec (byte-identical per seed).
SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const std::filesystem::path& out_dir);

/// A split loaded into memory: feature maps plus binary label rows.
struct Sample {
  std::string id;
  FeatureMap fmap;
  std::vector<std::uint8_t> labels;  // length C, 0/1
};

struct Dataset {
  std::string split;
  std::vector<std::string> categories;
  std::vector<Sample> samples;

  int C() const { return static_cast<int>(categories.size()); }
};

Dataset load_dataset(const std::filesystem::path& dir,
                     const std::string& split);

AnnotationSet annotations_from(const Dataset& data);

}  // namespace ssgrl
