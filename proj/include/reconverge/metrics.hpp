#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "reconverge/events.hpp"
#include "reconverge/program_model.hpp"

namespace reconverge {

struct BranchRow {
  Pc pc = 0;
  std::uint64_t instances = 0;
  std::uint64_t mispredictions = 0; ///< branch predictor
  std::uint64_t mp_selected = 0;    ///< instances the decision table sent to merge prediction
  std::uint64_t mp_correct = 0;
  std::uint64_t mp_incorrect = 0;
  std::uint64_t mp_misses = 0;
  std::uint64_t mp_drops = 0;

  double mp_gated() const { return instances == 0 ? 0.0 : static_cast<double>(mp_selected) / static_cast<double>(instances); }
  friend bool operator==(const BranchRow&, const BranchRow&) = default;
};

struct MetricSet {
  std::uint64_t retired = 0;
  std::uint64_t branches = 0;
  std::uint64_t bp_mispredictions = 0;
  std::uint64_t mp_resolved = 0;
  std::uint64_t mp_correct = 0;
  std::uint64_t mp_incorrect = 0;
  std::uint64_t mp_excluded = 0; ///< incorrect resolutions on instances that loop back before any merge
  std::uint64_t mp_misses = 0;
  std::uint64_t mp_drops = 0;
  std::uint64_t bp_handled_mispredictions = 0;

  double accuracy = 0;
  double coverage = 0;
  double mean_predicted_distance = 0;
  double mean_true_distance = 0;
  double mean_overestimate = 0;
  double old_mpki = 0;
  double new_mpki = 0;
  double mpki_improvement = 0;

  std::vector<BranchRow> per_branch;

  /// Fractional MPKI reduction relative to old MPKI.
  double mpki_reduction() const { return old_mpki == 0 ? 0.0 : mpki_improvement / old_mpki; }
  const BranchRow* branch(Pc pc) const;
};

struct AuditFinding {
  std::uint64_t index = 0; ///< architectural index of the branch instance
  Pc pc = 0;
  Pc merge_pc = 0;
  std::uint32_t age = 0;
  std::string reason;
};

struct ScoreOptions {
  std::uint64_t retired = 0; ///< total retired instructions of the run
  std::uint64_t warmup = 0;  ///< events for earlier instances are ignored
  /// When set, Correct resolutions are checked against the oracle and loop-back
  /// instances are excluded from accuracy.
  const ProgramModel* model = nullptr;
  std::uint64_t seed = 0;
  unsigned max_distance = 100;
};

struct ScoreResult {
  MetricSet metrics;
  std::vector<AuditFinding> violations;
  std::uint64_t audited = 0; ///< Correct resolutions checked
};

ScoreResult score(const SimEventLog& log, const ScoreOptions& opt);

/// Arithmetic mean of the rate metrics; counts are summed.
MetricSet amean(const std::vector<MetricSet>& runs);

enum class ReportFormat { Human, Csv, Json };

ReportFormat parse_report_format(const std::string& s);
const char* extension(ReportFormat f);

struct LabeledMetrics {
  std::string label;
  MetricSet metrics;
};

extern const char* const kCsvHeader;

/// Stable column order, rates to 4 decimals. With `with_amean` an extra row
/// labeled "amean" follows the runs.
std::string report(const std::vector<LabeledMetrics>& rows, ReportFormat format, bool with_amean);
std::string per_branch_csv(const MetricSet& m);

nlohmann::ordered_json to_json(const MetricSet& m);
MetricSet metrics_from_json(const nlohmann::ordered_json& j);

} // namespace reconverge
