#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace ssgrl {

using ProbMatrix = std::vector<std::vector<double>>;        // M x C
using BinaryMatrix = std::vector<std::vector<std::uint8_t>>;  // M x C

/// top3: the three highest-probability labels per image (ties broken by
/// ascending index), minus any with probability below 0.5.
/// threshold: positive iff probability is strictly greater than 0.5.
enum class AssignSetting { top3, threshold };

AssignSetting assign_setting_from_string(const std::string& s);

BinaryMatrix assign_labels(const ProbMatrix& probs, AssignSetting setting);

struct PrfCounts {
  std::vector<std::int64_t> correct;    // N_i^c
  std::vector<std::int64_t> predicted;  // N_i^p
  std::vector<std::int64_t> truth;      // N_i^g
};

struct PrfMetrics {
  double op = 0, or_ = 0, of1 = 0;  // overall (micro)
  double cp = 0, cr = 0, cf1 = 0;   // per-class (macro)
};

PrfCounts prf_counts(const BinaryMatrix& pred, const BinaryMatrix& gt);

/// Overall and per-class precision/recall/F1 from pooled per-category
/// counts. Zero denominators yield 0; macro averages run over categories
/// with at least one ground-truth positive.
PrfMetrics prf_suite(const BinaryMatrix& pred, const BinaryMatrix& gt);

/// Precision averaged at each positive's rank, scores sorted descending
/// with ties broken by ascending sample index. Requires >= 1 positive.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& gt);

struct EvalReport {
  std::vector<std::string> categories;
  std::vector<double> ap;          // NaN for excluded categories
  std::vector<bool> included;      // has ground-truth positives
  double map = 0;                  // mean over included categories
  PrfMetrics top3, threshold;
  PrfCounts top3_counts, threshold_counts;
  int samples = 0;
};

/// AP/mAP from raw probabilities plus both label-assignment settings.
EvalReport evaluate(const ProbMatrix& probs, const BinaryMatrix& gt,
                    const std::vector<std::string>& categories);

/// Key: value lines grouped by setting, then one machine-readable JSON
/// line with the same numbers. Deterministic formatting (17 significant
/// digits).
void write_report(std::ostream& out, const EvalReport& report);

}  // namespace ssgrl
