#include "ssgrl/cooccurrence.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssgrl/errors.hpp"

namespace ssgrl {

namespace {

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

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line,
                             const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

CooccurrenceGraph::CooccurrenceGraph(std::vector<std::string> categories,
                                     std::vector<double> adjacency,
                                     std::vector<std::int64_t> support)
    : categories_(std::move(categories)),
      adjacency_(std::move(adjacency)),
      support_(std::move(support)) {
  const auto c = categories_.size();
  if (adjacency_.size() != c * c || support_.size() != c)
    throw DimError("cooccurrence graph: inconsistent sizes for C=" +
                   std::to_string(c));
  for (double v : adjacency_) {
    if (!(v >= 0.0 && v <= 1.0))
      throw NumericError("cooccurrence graph: entry outside [0,1]");
  }
}

CooccurrenceGraph build_graph(const AnnotationSet& ann) {
  const int c_total = ann.C();
  if (c_total < 1) throw ConfigError("build_graph: no categories");
  if (ann.samples.empty())
    throw ConfigError("build_graph: empty annotation set");

  std::vector<std::int64_t> support(static_cast<std::size_t>(c_total), 0);
  std::vector<std::int64_t> pair_count(
      static_cast<std::size_t>(c_total) * c_total, 0);
  for (const auto& [id, labels] : ann.samples) {
    for (int c : labels) {
      if (c < 0 || c >= c_total)
        throw ConfigError("build_graph: label index " + std::to_string(c) +
                          " out of range for C=" + std::to_string(c_total) +
                          " in sample " + id);
      ++support[static_cast<std::size_t>(c)];
      for (int cp : labels)
        ++pair_count[static_cast<std::size_t>(c) * c_total + cp];
    }
  }

  std::vector<double> adjacency(pair_count.size(), 0.0);
  for (int c = 0; c < c_total; ++c) {
    if (support[static_cast<std::size_t>(c)] == 0) continue;
    for (int cp = 0; cp < c_total; ++cp) {
      const auto idx = static_cast<std::size_t>(c) * c_total + cp;
      adjacency[idx] = static_cast<double>(pair_count[idx]) /
                       static_cast<double>(support[static_cast<std::size_t>(c)]);
    }
  }
  return CooccurrenceGraph(ann.categories, std::move(adjacency),
                           std::move(support));
}

void save_graph(const CooccurrenceGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "cooccurrence v1 C=" << g.C() << "\n";
  for (int c = 0; c < g.C(); ++c) {
    if (c) out << ",";
    out << g.categories()[static_cast<std::size_t>(c)];
  }
  out << "\n";
  for (int c = 0; c < g.C(); ++c) {
    for (int cp = 0; cp < g.C(); ++cp) {
      if (cp) out << " ";
      out << fmt17(g.a(c, cp));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

CooccurrenceGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  int c_total = -1;
  if (std::sscanf(line.c_str(), "cooccurrence v1 C=%d", &c_total) != 1 ||
      c_total < 1)
    parse_fail(path, 1, "expected header 'cooccurrence v1 C=<int>'");

  ++lineno;
  if (!std::getline(in, line)) parse_fail(path, lineno, "missing category names");
  auto names = split(line, ',');
  if (static_cast<int>(names.size()) != c_total)
    parse_fail(path, lineno,
               "expected " + std::to_string(c_total) + " category names, got " +
                   std::to_string(names.size()));

  std::vector<double> adjacency;
  adjacency.reserve(static_cast<std::size_t>(c_total) * c_total);
  for (int r = 0; r < c_total; ++r) {
    ++lineno;
    if (!std::getline(in, line))
      parse_fail(path, lineno, "expected " + std::to_string(c_total) +
                                   " matrix rows, file ends after " +
                                   std::to_string(r));
    std::istringstream row(line);
    for (int j = 0; j < c_total; ++j) {
      double v = 0.0;
      if (!(row >> v))
        parse_fail(path, lineno, "row has fewer than " +
                                     std::to_string(c_total) + " entries");
      if (!(v >= 0.0 && v <= 1.0))
        parse_fail(path, lineno, "matrix entry outside [0,1]");
      adjacency.push_back(v);
    }
    std::string extra;
    if (row >> extra)
      parse_fail(path, lineno, "row has more than " + std::to_string(c_total) +
                                   " entries");
  }
  // Extra non-blank content means the header C was wrong.
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty())
      parse_fail(path, lineno, "unexpected extra row; header said C=" +
                                   std::to_string(c_total));
  }

  // Support counts are not serialized; recover presence from the diagonal.
  std::vector<std::int64_t> support(static_cast<std::size_t>(c_total), 0);
  for (int c = 0; c < c_total; ++c)
    support[static_cast<std::size_t>(c)] =
        adjacency[static_cast<std::size_t>(c) * c_total + c] > 0.0 ? 1 : 0;
  return CooccurrenceGraph(std::move(names), std::move(adjacency),
                           std::move(support));
}

}  // namespace ssgrl
