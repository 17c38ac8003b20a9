#include "ssgrl/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ssgrl/errors.hpp"
#include "ssgrl/rng.hpp"

namespace ssgrl {

namespace fs = std::filesystem;

namespace {

constexpr char kFmapMagic[5] = {'F', 'M', 'A', 'P', '1'};

// Conditional probability used for the second member of a bias pair once
// the first member has been drawn.
constexpr double kBiasConditional = 0.8;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

[[noreturn]] void parse_fail(const fs::path& path, int line,
                             const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::map<std::string, int> index_of(const std::vector<std::string>& names) {
  std::map<std::string, int> idx;
  for (int i = 0; i < static_cast<int>(names.size()); ++i)
    idx[names[static_cast<std::size_t>(i)]] = i;
  return idx;
}

std::vector<int> resolve_labels(const fs::path& path, int lineno,
                                const std::string& field,
                                const std::map<std::string, int>& idx) {
  std::vector<int> labels;
  if (field.empty()) return labels;
  for (const auto& name : split(field, ',')) {
    auto it = idx.find(name);
    if (it == idx.end())
      parse_fail(path, lineno, "unknown category name '" + name + "'");
    labels.push_back(it->second);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::string labels_csv(const std::vector<int>& labels,
                       const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ",";
    out += names.at(static_cast<std::size_t>(labels[i]));
  }
  return out;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  DatasetManifest m;
  char split_buf[256] = {0};
  int c_total = -1;
  if (std::sscanf(line.c_str(), "manifest v1 split=%255s C=%d", split_buf,
                  &c_total) != 2 ||
      c_total < 1)
    parse_fail(path, 1, "expected header 'manifest v1 split=<name> C=<int>'");
  m.split = split_buf;

  int lineno = 2;
  if (!std::getline(in, line)) parse_fail(path, 2, "missing category names");
  m.categories = split(line, ',');
  if (static_cast<int>(m.categories.size()) != c_total)
    parse_fail(path, 2, "expected " + std::to_string(c_total) +
                            " category names, got " +
                            std::to_string(m.categories.size()));
  const auto idx = index_of(m.categories);

  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      parse_fail(path, lineno, "expected 3 tab-separated fields, got " +
                                   std::to_string(fields.size()));
    if (!seen.insert(fields[0]).second)
      parse_fail(path, lineno, "duplicate sample id '" + fields[0] + "'");
    ManifestEntry e;
    e.id = fields[0];
    e.path = fields[1];
    e.labels = resolve_labels(path, lineno, fields[2], idx);
    if (!fs::exists(path.parent_path() / e.path))
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": referenced feature map missing: " + e.path);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "manifest v1 split=" << m.split << " C=" << m.C() << "\n";
  for (std::size_t i = 0; i < m.categories.size(); ++i)
    out << (i ? "," : "") << m.categories[i];
  out << "\n";
  for (const auto& e : m.entries)
    out << e.id << "\t" << e.path << "\t" << labels_csv(e.labels, m.categories)
        << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

AnnotationSet load_annotations(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  int c_total = -1;
  if (std::sscanf(line.c_str(), "annotations v1 C=%d", &c_total) != 1 ||
      c_total < 1)
    parse_fail(path, 1, "expected header 'annotations v1 C=<int>'");

  AnnotationSet ann;
  if (!std::getline(in, line)) parse_fail(path, 2, "missing category names");
  ann.categories = split(line, ',');
  if (static_cast<int>(ann.categories.size()) != c_total)
    parse_fail(path, 2, "expected " + std::to_string(c_total) +
                            " category names, got " +
                            std::to_string(ann.categories.size()));
  const auto idx = index_of(ann.categories);

  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2)
      parse_fail(path, lineno, "expected 2 tab-separated fields, got " +
                                   std::to_string(fields.size()));
    auto labels = resolve_labels(path, lineno, fields[1], idx);
    ann.samples.emplace_back(fields[0],
                             std::set<int>(labels.begin(), labels.end()));
  }
  return ann;
}

void save_annotations(const AnnotationSet& ann, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "annotations v1 C=" << ann.C() << "\n";
  for (std::size_t i = 0; i < ann.categories.size(); ++i)
    out << (i ? "," : "") << ann.categories[i];
  out << "\n";
  for (const auto& [id, labels] : ann.samples) {
    std::vector<int> sorted(labels.begin(), labels.end());
    out << id << "\t" << labels_csv(sorted, ann.categories) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingTable load_embeddings(const fs::path& path,
                               const std::vector<std::string>& categories) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  int d_s = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (values.empty())
      parse_fail(path, lineno, "no vector values for word '" + word + "'");
    if (d_s == -1) {
      d_s = static_cast<int>(values.size());
    } else if (static_cast<int>(values.size()) != d_s) {
      parse_fail(path, lineno,
                 "ragged dimensions: expected " + std::to_string(d_s) +
                     " values, got " + std::to_string(values.size()));
    }
    rows[word] = std::move(values);
  }
  if (d_s <= 0) throw ParseError(path.string() + ": no embeddings found");

  auto vectors = Tensor::zeros({static_cast<int>(categories.size()), d_s});
  for (int c = 0; c < static_cast<int>(categories.size()); ++c) {
    auto it = rows.find(categories[static_cast<std::size_t>(c)]);
    if (it == rows.end())
      throw LookupError("embedding word not found: '" +
                        categories[static_cast<std::size_t>(c)] + "' in " +
                        path.string());
    for (int j = 0; j < d_s; ++j)
      vectors->at(c, j) = it->second[static_cast<std::size_t>(j)];
  }
  return EmbeddingTable(categories, std::move(vectors));
}

void save_embeddings(const EmbeddingTable& table, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (int c = 0; c < table.C(); ++c) {
    out << table.names()[static_cast<std::size_t>(c)];
    for (int j = 0; j < table.dim(); ++j)
      out << " " << fmt17(table.vectors()->at(c, j));
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

FeatureMap load_feature_map(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw ParseError(path.string() + ": byte " + std::to_string(offset) +
                     ": " + what);
  };
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kFmapMagic, 5) != 0)
    fail(0, "bad magic, expected FMAP1");
  if (bytes.size() < 17) fail(bytes.size(), "truncated header");
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
    return v;
  };
  const std::uint32_t W = u32_at(5), H = u32_at(9), N = u32_at(13);
  if (W == 0 || H == 0 || N == 0) fail(5, "zero extent in header");
  const std::size_t count = static_cast<std::size_t>(W) * H * N;
  const std::size_t expected = 17 + count * 4;
  if (bytes.size() != expected)
    fail(bytes.size(), "payload is " + std::to_string(bytes.size() - 17) +
                           " bytes, expected " + std::to_string(count * 4));
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = u32_at(17 + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = static_cast<double>(f);
  }
  return FeatureMap::from(static_cast<int>(W), static_cast<int>(H),
                          static_cast<int>(N), std::move(values));
}

void save_feature_map(const FeatureMap& fm, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kFmapMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(fm.W));
  put_u32(out, static_cast<std::uint32_t>(fm.H));
  put_u32(out, static_cast<std::uint32_t>(fm.N));
  for (double v : fm.values->data) put_f32(out, static_cast<float>(v));
  if (!out) throw IoError("write failed: " + path.string());
}

void SyntheticSpec::validate() const {
  if (C < 1 || W < 1 || H < 1 || N < 1 || d_s < 1)
    throw ConfigError("synthetic spec: dimensions must be positive");
  if (train_samples < 1 || test_samples < 0)
    throw ConfigError("synthetic spec: need at least one training sample");
  if (!(label_density > 0.0) || label_density > static_cast<double>(C))
    throw ConfigError("synthetic spec: label density must be in (0, C]");
  if (noise_sigma < 0.0)
    throw ConfigError("synthetic spec: noise sigma must be >= 0");
  if (!(pattern_strength >= 0.0))
    throw ConfigError("synthetic spec: pattern strength must be >= 0");
  for (auto [a, b] : bias_pairs) {
    if (a < 0 || a >= C || b < 0 || b >= C || a == b)
      throw ConfigError("synthetic spec: bad bias pair (" + std::to_string(a) +
                        "," + std::to_string(b) + ")");
  }
}

SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir / "fmaps");
  Rng rng(spec.seed);

  SyntheticSummary summary;
  for (int c = 0; c < spec.C; ++c)
    summary.categories.push_back("cat" + std::to_string(c));

  // Per-category channel signature and home location; locations are a
  // shuffled tour of the grid so they stay distinct while C <= W*H.
  for (int c = 0; c < spec.C; ++c)
    summary.patterns.push_back(rng.unit_vector(spec.N));
  std::vector<int> cells(static_cast<std::size_t>(spec.W) * spec.H);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  rng.shuffle(cells);
  for (int c = 0; c < spec.C; ++c) {
    const int cell = cells[static_cast<std::size_t>(c) % cells.size()];
    summary.home_locations.emplace_back(cell / spec.H, cell % spec.H);
  }

  auto emb_vectors = Tensor::zeros({spec.C, spec.d_s});
  for (int c = 0; c < spec.C; ++c) {
    auto v = rng.unit_vector(spec.d_s);
    for (int j = 0; j < spec.d_s; ++j)
      emb_vectors->at(c, j) = v[static_cast<std::size_t>(j)];
  }
  EmbeddingTable table(summary.categories, std::move(emb_vectors));
  save_embeddings(table, out_dir / "embeddings.txt");

  const double q = spec.label_density / static_cast<double>(spec.C);
  auto gen_split = [&](const std::string& split, int count) {
    DatasetManifest manifest;
    manifest.split = split;
    manifest.categories = summary.categories;
    AnnotationSet ann;
    ann.categories = summary.categories;
    for (int i = 0; i < count; ++i) {
      char id_buf[64];
      std::snprintf(id_buf, sizeof id_buf, "%s%04d", split.c_str(), i);
      const std::string id = id_buf;

      std::set<int> labels;
      for (int c = 0; c < spec.C; ++c)
        if (rng.uniform() < q) labels.insert(c);
      for (auto [a, b] : spec.bias_pairs)
        if (labels.count(a) && rng.uniform() < kBiasConditional)
          labels.insert(b);

      std::vector<double> values(static_cast<std::size_t>(spec.W) * spec.H *
                                 spec.N);
      for (auto& v : values) v = spec.noise_sigma * rng.normal();
      for (int c : labels) {
        const auto [w, h] = summary.home_locations[static_cast<std::size_t>(c)];
        const std::size_t base =
            (static_cast<std::size_t>(w) * spec.H + h) * spec.N;
        for (int n = 0; n < spec.N; ++n)
          values[base + static_cast<std::size_t>(n)] +=
              spec.pattern_strength *
              summary.patterns[static_cast<std::size_t>(c)][static_cast<std::size_t>(n)];
      }
      // On-disk precision is f32; round now so save/load is an identity.
      for (auto& v : values) v = static_cast<double>(static_cast<float>(v));

      auto fm = FeatureMap::from(spec.W, spec.H, spec.N, std::move(values));
      const std::string rel = "fmaps/" + id + ".fmap";
      save_feature_map(fm, out_dir / rel);

      ManifestEntry e;
      e.id = id;
      e.path = rel;
      e.labels.assign(labels.begin(), labels.end());
      manifest.entries.push_back(std::move(e));
      ann.samples.emplace_back(id, std::move(labels));
    }
    save_manifest(manifest, out_dir / (split + "_manifest.tsv"));
    save_annotations(ann, out_dir / (split + "_annotations.tsv"));
  };

  gen_split("train", spec.train_samples);
  gen_split("test", spec.test_samples);
  summary.train_samples = spec.train_samples;
  summary.test_samples = spec.test_samples;
  return summary;
}

Dataset load_dataset(const fs::path& dir, const std::string& split) {
  auto manifest = load_manifest(dir / (split + "_manifest.tsv"));
  Dataset data;
  data.split = manifest.split;
  data.categories = manifest.categories;
  for (const auto& e : manifest.entries) {
    Sample s;
    s.id = e.id;
    s.fmap = load_feature_map(dir / e.path);
    s.labels.assign(static_cast<std::size_t>(manifest.C()), 0);
    for (int c : e.labels) s.labels[static_cast<std::size_t>(c)] = 1;
    data.samples.push_back(std::move(s));
  }
  return data;
}

AnnotationSet annotations_from(const Dataset& data) {
  AnnotationSet ann;
  ann.categories = data.categories;
  for (const auto& s : data.samples) {
    std::set<int> labels;
    for (int c = 0; c < data.C(); ++c)
      if (s.labels[static_cast<std::size_t>(c)]) labels.insert(c);
    ann.samples.emplace_back(s.id, std::move(labels));
  }
  return ann;
}

}  // namespace ssgrl
