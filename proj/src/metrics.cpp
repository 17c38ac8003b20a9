#include "ssgrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ssgrl/errors.hpp"

namespace ssgrl {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_matrix(const char* what, const ProbMatrix& p) {
  for (const auto& row : p) {
    if (row.size() != p.front().size())
      throw DimError(std::string(what) + ": ragged rows");
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0))
        throw NumericError(std::string(what) +
                           ": probability outside [0,1]");
    }
  }
}

double safe_div(double num, double denom) {
  return denom == 0.0 ? 0.0 : num / denom;
}

double f1(double p, double r) { return safe_div(2.0 * p * r, p + r); }

}  // namespace

AssignSetting assign_setting_from_string(const std::string& s) {
  if (s == "top3") return AssignSetting::top3;
  if (s == "threshold") return AssignSetting::threshold;
  throw ConfigError("unknown assignment setting '" + s +
                    "' (expected top3 or threshold)");
}

BinaryMatrix assign_labels(const ProbMatrix& probs, AssignSetting setting) {
  if (probs.empty()) return {};
  check_matrix("assign_labels", probs);
  const std::size_t C = probs.front().size();
  BinaryMatrix pred(probs.size(), std::vector<std::uint8_t>(C, 0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (setting == AssignSetting::threshold) {
      for (std::size_t c = 0; c < C; ++c)
        pred[i][c] = probs[i][c] > 0.5 ? 1 : 0;
      continue;
    }
    std::vector<std::size_t> order(C);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probs[i][a] > probs[i][b];
    });
    const std::size_t take = std::min<std::size_t>(3, C);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t c = order[k];
      if (probs[i][c] >= 0.5) pred[i][c] = 1;  // drop those below the cutoff
    }
  }
  return pred;
}

PrfCounts prf_counts(const BinaryMatrix& pred, const BinaryMatrix& gt) {
  if (pred.size() != gt.size())
    throw DimError("prf: prediction/ground-truth row counts differ");
  const std::size_t C = gt.empty() ? 0 : gt.front().size();
  PrfCounts counts;
  counts.correct.assign(C, 0);
  counts.predicted.assign(C, 0);
  counts.truth.assign(C, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (pred[i].size() != C || gt[i].size() != C)
      throw DimError("prf: ragged rows");
    for (std::size_t c = 0; c < C; ++c) {
      counts.predicted[c] += pred[i][c] ? 1 : 0;
      counts.truth[c] += gt[i][c] ? 1 : 0;
      counts.correct[c] += (pred[i][c] && gt[i][c]) ? 1 : 0;
    }
  }
  return counts;
}

PrfMetrics prf_suite(const BinaryMatrix& pred, const BinaryMatrix& gt) {
  const auto counts = prf_counts(pred, gt);
  const std::size_t C = counts.truth.size();
  PrfMetrics m;
  std::int64_t sum_c = 0, sum_p = 0, sum_g = 0;
  double cp_sum = 0, cr_sum = 0;
  std::int64_t included = 0;
  for (std::size_t c = 0; c < C; ++c) {
    sum_c += counts.correct[c];
    sum_p += counts.predicted[c];
    sum_g += counts.truth[c];
    if (counts.truth[c] == 0) continue;  // absent category, excluded
    ++included;
    cp_sum += safe_div(static_cast<double>(counts.correct[c]),
                       static_cast<double>(counts.predicted[c]));
    cr_sum += safe_div(static_cast<double>(counts.correct[c]),
                       static_cast<double>(counts.truth[c]));
  }
  m.op = safe_div(static_cast<double>(sum_c), static_cast<double>(sum_p));
  m.or_ = safe_div(static_cast<double>(sum_c), static_cast<double>(sum_g));
  m.of1 = f1(m.op, m.or_);
  m.cp = safe_div(cp_sum, static_cast<double>(included));
  m.cr = safe_div(cr_sum, static_cast<double>(included));
  m.cf1 = f1(m.cp, m.cr);
  return m;
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& gt) {
  if (scores.size() != gt.size())
    throw DimError("average_precision: length mismatch");
  std::int64_t positives = 0;
  for (auto y : gt) positives += y ? 1 : 0;
  if (positives == 0)
    throw ConfigError("average_precision: no positive samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double ap_sum = 0.0;
  std::int64_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!gt[order[rank]]) continue;
    ++hits;
    ap_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap_sum / static_cast<double>(positives);
}

EvalReport evaluate(const ProbMatrix& probs, const BinaryMatrix& gt,
                    const std::vector<std::string>& categories) {
  if (probs.size() != gt.size())
    throw DimError("evaluate: probability/label row counts differ");
  if (probs.empty()) throw ConfigError("evaluate: no samples");
  const std::size_t C = categories.size();
  if (probs.front().size() != C || gt.front().size() != C)
    throw DimError("evaluate: column count does not match categories");
  check_matrix("evaluate", probs);

  EvalReport report;
  report.categories = categories;
  report.samples = static_cast<int>(probs.size());
  report.ap.assign(C, std::numeric_limits<double>::quiet_NaN());
  report.included.assign(C, false);
  double ap_sum = 0.0;
  std::int64_t included = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      scores.push_back(probs[i][c]);
      labels.push_back(gt[i][c]);
    }
    if (std::none_of(labels.begin(), labels.end(), [](auto y) { return y; }))
      continue;
    report.ap[c] = average_precision(scores, labels);
    report.included[c] = true;
    ap_sum += report.ap[c];
    ++included;
  }
  if (included == 0) throw ConfigError("evaluate: no category has positives");
  report.map = ap_sum / static_cast<double>(included);

  auto top3_pred = assign_labels(probs, AssignSetting::top3);
  auto thr_pred = assign_labels(probs, AssignSetting::threshold);
  report.top3 = prf_suite(top3_pred, gt);
  report.threshold = prf_suite(thr_pred, gt);
  report.top3_counts = prf_counts(top3_pred, gt);
  report.threshold_counts = prf_counts(thr_pred, gt);
  return report;
}

void write_report(std::ostream& out, const EvalReport& report) {
  out << "mAP: " << fmt17(report.map) << "\n";
  out << "samples: " << report.samples << "\n";
  out << "categories: " << report.categories.size() << "\n";
  out << "[per-category-ap]\n";
  for (std::size_t c = 0; c < report.categories.size(); ++c) {
    out << report.categories[c] << ": ";
    if (report.included[c])
      out << fmt17(report.ap[c]);
    else
      out << "excluded";
    out << "\n";
  }
  auto block = [&](const char* name, const PrfMetrics& m) {
    out << "[" << name << "]\n";
    out << "OP: " << fmt17(m.op) << "\n";
    out << "OR: " << fmt17(m.or_) << "\n";
    out << "OF1: " << fmt17(m.of1) << "\n";
    out << "CP: " << fmt17(m.cp) << "\n";
    out << "CR: " << fmt17(m.cr) << "\n";
    out << "CF1: " << fmt17(m.cf1) << "\n";
  };
  block("top3", report.top3);
  block("threshold", report.threshold);

  nlohmann::json machine;
  machine["mAP"] = report.map;
  machine["samples"] = report.samples;
  nlohmann::json ap = nlohmann::json::object();
  for (std::size_t c = 0; c < report.categories.size(); ++c)
    if (report.included[c]) ap[report.categories[c]] = report.ap[c];
  machine["ap"] = ap;
  auto pack = [](const PrfMetrics& m) {
    return nlohmann::json{{"OP", m.op}, {"OR", m.or_}, {"OF1", m.of1},
                          {"CP", m.cp}, {"CR", m.cr}, {"CF1", m.cf1}};
  };
  machine["top3"] = pack(report.top3);
  machine["threshold"] = pack(report.threshold);
  out << "[machine]\n" << machine.dump() << "\n";
}

}  // namespace ssgrl
