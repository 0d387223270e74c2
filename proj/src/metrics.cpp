#include "reconverge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "reconverge/json_util.hpp"
#include "reconverge/oracle.hpp"

namespace reconverge {

using ojson = nlohmann::ordered_json;

const BranchRow* MetricSet::branch(Pc pc) const {
  for (const BranchRow& r : per_branch)
    if (r.pc == pc) return &r;
  return nullptr;
}

namespace {

double ratio(double num, double den) { return den == 0 ? 0.0 : num / den; }
double round4(double v) { return std::round(v * 1e4) / 1e4; }

} // namespace

ScoreResult score(const SimEventLog& log, const ScoreOptions& opt) {
  ScoreResult out;
  MetricSet& m = out.metrics;
  std::map<Pc, BranchRow> rows;

  std::optional<ArchTrace> trace;
  std::optional<MergeOracle> oracle;
  if (opt.model) {
    trace = replay_architectural(*opt.model, opt.seed, opt.retired + opt.max_distance + 1);
    oracle.emplace(*opt.model, opt.max_distance);
  }

  double sum_pred = 0, sum_true = 0, sum_over = 0;

  for (const Event& e : log) {
    if (e.wrong_path) continue;
    const bool counted = e.index >= opt.warmup;
    if (e.kind == EventKind::BranchRetired && counted) {
      BranchRow& r = rows[e.pc];
      r.pc = e.pc;
      ++r.instances;
      ++m.branches;
      if (e.mispredicted) {
        ++r.mispredictions;
        ++m.bp_mispredictions;
      }
      const bool mp_handled = e.use_mp && e.mp == MpStatus::Predicted;
      if (e.use_mp) ++r.mp_selected;
      if (e.mp == MpStatus::Miss) {
        ++r.mp_misses;
        ++m.mp_misses;
      } else if (e.mp == MpStatus::Dropped) {
        ++r.mp_drops;
        ++m.mp_drops;
      }
      if (!mp_handled && e.mispredicted) ++m.bp_handled_mispredictions;
    } else if (e.kind == EventKind::MpResolved) {
      std::optional<OracleMerge> truth;
      if (trace) {
        const auto& pcs = trace->pcs;
        if (e.index >= pcs.size() || pcs[e.index] != e.pc || trace->taken[e.index] < 0) {
          out.violations.push_back({e.index, e.pc, e.merge_pc, e.age, "instance does not match the architectural trace"});
          continue;
        }
        const std::size_t avail = pcs.size() - e.index - 1;
        const std::span<const Pc> cont(pcs.data() + e.index + 1, std::min<std::size_t>(avail, opt.max_distance));
        truth = oracle->merge(e.pc, trace->taken[e.index] != 0, cont);
      }
      const bool correct = is_correct(e.verdict);
      if (correct && truth) {
        ++out.audited;
        if (!truth->in_merge_set(e.merge_pc, e.age)) {
          out.violations.push_back({e.index, e.pc, e.merge_pc, e.age, "merge pc is not a convergence point at that distance"});
        } else if (e.age > std::max(e.distance, e.new_distance)) {
          out.violations.push_back({e.index, e.pc, e.merge_pc, e.age, "merge observed beyond the predicted distance"});
        }
      }
      if (!counted) continue;
      BranchRow& r = rows[e.pc];
      r.pc = e.pc;
      ++m.mp_resolved;
      sum_pred += e.distance;
      if (correct) {
        ++m.mp_correct;
        ++r.mp_correct;
        sum_true += e.age;
        sum_over += static_cast<double>(e.distance) - static_cast<double>(e.age);
      } else {
        ++m.mp_incorrect;
        ++r.mp_incorrect;
        if (truth && truth->loop_back) ++m.mp_excluded;
      }
    }
  }

  m.retired = opt.retired - std::min(opt.retired, opt.warmup);
  const auto kilo = static_cast<double>(m.retired) / 1000.0;
  m.accuracy = ratio(static_cast<double>(m.mp_correct), static_cast<double>(m.mp_resolved - m.mp_excluded));
  m.coverage = ratio(static_cast<double>(m.mp_correct), static_cast<double>(m.mp_resolved + m.mp_misses + m.mp_drops));
  m.mean_predicted_distance = ratio(sum_pred, static_cast<double>(m.mp_resolved));
  m.mean_true_distance = ratio(sum_true, static_cast<double>(m.mp_correct));
  m.mean_overestimate = ratio(sum_over, static_cast<double>(m.mp_correct));
  m.old_mpki = ratio(static_cast<double>(m.bp_mispredictions), kilo);
  m.new_mpki = ratio(static_cast<double>(m.bp_handled_mispredictions + m.mp_incorrect), kilo);
  m.mpki_improvement = m.old_mpki - m.new_mpki;
  for (auto& [pc, r] : rows) m.per_branch.push_back(r);
  return out;
}

MetricSet amean(const std::vector<MetricSet>& runs) {
  MetricSet a;
  if (runs.empty()) return a;
  for (const MetricSet& m : runs) {
    a.retired += m.retired;
    a.branches += m.branches;
    a.bp_mispredictions += m.bp_mispredictions;
    a.mp_resolved += m.mp_resolved;
    a.mp_correct += m.mp_correct;
    a.mp_incorrect += m.mp_incorrect;
    a.mp_excluded += m.mp_excluded;
    a.mp_misses += m.mp_misses;
    a.mp_drops += m.mp_drops;
    a.bp_handled_mispredictions += m.bp_handled_mispredictions;
    a.accuracy += m.accuracy;
    a.coverage += m.coverage;
    a.mean_predicted_distance += m.mean_predicted_distance;
    a.mean_true_distance += m.mean_true_distance;
    a.mean_overestimate += m.mean_overestimate;
    a.old_mpki += m.old_mpki;
    a.new_mpki += m.new_mpki;
    a.mpki_improvement += m.mpki_improvement;
  }
  const auto n = static_cast<double>(runs.size());
  for (double* v : {&a.accuracy, &a.coverage, &a.mean_predicted_distance, &a.mean_true_distance, &a.mean_overestimate,
                    &a.old_mpki, &a.new_mpki, &a.mpki_improvement})
    *v /= n;
  return a;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "human") return ReportFormat::Human;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw ParseError("format", "unknown report format '" + s + "' (expected human, csv or json)");
}

const char* extension(ReportFormat f) {
  switch (f) {
  case ReportFormat::Human: return "txt";
  case ReportFormat::Csv: return "csv";
  case ReportFormat::Json: return "json";
  }
  return "txt";
}

const char* const kCsvHeader =
    "label,retired,branches,bp_mispredictions,mp_resolved,mp_correct,mp_incorrect,mp_excluded,mp_misses,mp_drops,"
    "accuracy,coverage,mean_predicted_distance,mean_true_distance,mean_overestimate,old_mpki,new_mpki,mpki_improvement";

ojson to_json(const MetricSet& m) {
  ojson j;
  j["retired"] = m.retired;
  j["branches"] = m.branches;
  j["bp_mispredictions"] = m.bp_mispredictions;
  j["mp_resolved"] = m.mp_resolved;
  j["mp_correct"] = m.mp_correct;
  j["mp_incorrect"] = m.mp_incorrect;
  j["mp_excluded"] = m.mp_excluded;
  j["mp_misses"] = m.mp_misses;
  j["mp_drops"] = m.mp_drops;
  j["bp_handled_mispredictions"] = m.bp_handled_mispredictions;
  j["accuracy"] = round4(m.accuracy);
  j["coverage"] = round4(m.coverage);
  j["mean_predicted_distance"] = round4(m.mean_predicted_distance);
  j["mean_true_distance"] = round4(m.mean_true_distance);
  j["mean_overestimate"] = round4(m.mean_overestimate);
  j["old_mpki"] = round4(m.old_mpki);
  j["new_mpki"] = round4(m.new_mpki);
  j["mpki_improvement"] = round4(m.mpki_improvement);
  ojson rows = ojson::array();
  for (const BranchRow& r : m.per_branch) {
    rows.push_back({{"pc", r.pc},
                    {"instances", r.instances},
                    {"mispredictions", r.mispredictions},
                    {"mp_selected", r.mp_selected},
                    {"mp_gated", round4(r.mp_gated())},
                    {"mp_correct", r.mp_correct},
                    {"mp_incorrect", r.mp_incorrect},
                    {"mp_misses", r.mp_misses},
                    {"mp_drops", r.mp_drops}});
  }
  j["per_branch"] = rows;
  return j;
}

MetricSet metrics_from_json(const ojson& j) {
  MetricSet m;
  auto u = [&](const char* k) { return json_get<std::uint64_t>(json_at(j, k, ""), k); };
  auto d = [&](const char* k) { return json_get<double>(json_at(j, k, ""), k); };
  m.retired = u("retired");
  m.branches = u("branches");
  m.bp_mispredictions = u("bp_mispredictions");
  m.mp_resolved = u("mp_resolved");
  m.mp_correct = u("mp_correct");
  m.mp_incorrect = u("mp_incorrect");
  m.mp_excluded = u("mp_excluded");
  m.mp_misses = u("mp_misses");
  m.mp_drops = u("mp_drops");
  m.bp_handled_mispredictions = u("bp_handled_mispredictions");
  m.accuracy = d("accuracy");
  m.coverage = d("coverage");
  m.mean_predicted_distance = d("mean_predicted_distance");
  m.mean_true_distance = d("mean_true_distance");
  m.mean_overestimate = d("mean_overestimate");
  m.old_mpki = d("old_mpki");
  m.new_mpki = d("new_mpki");
  m.mpki_improvement = d("mpki_improvement");
  if (j.contains("per_branch")) {
    const ojson& rows = j["per_branch"];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string w = "per_branch[" + std::to_string(i) + "]";
      auto ru = [&](const char* k) { return json_get<std::uint64_t>(json_at(rows[i], k, w), w + "." + k); };
      BranchRow r;
      r.pc = ru("pc");
      r.instances = ru("instances");
      r.mispredictions = ru("mispredictions");
      r.mp_selected = ru("mp_selected");
      r.mp_correct = ru("mp_correct");
      r.mp_incorrect = ru("mp_incorrect");
      r.mp_misses = ru("mp_misses");
      r.mp_drops = ru("mp_drops");
      m.per_branch.push_back(r);
    }
  }
  return m;
}

namespace {

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_row(const std::string& label, const MetricSet& m) {
  std::ostringstream s;
  s << label << ',' << m.retired << ',' << m.branches << ',' << m.bp_mispredictions << ',' << m.mp_resolved << ','
    << m.mp_correct << ',' << m.mp_incorrect << ',' << m.mp_excluded << ',' << m.mp_misses << ',' << m.mp_drops << ','
    << fmt4(m.accuracy) << ',' << fmt4(m.coverage) << ',' << fmt4(m.mean_predicted_distance) << ','
    << fmt4(m.mean_true_distance) << ',' << fmt4(m.mean_overestimate) << ',' << fmt4(m.old_mpki) << ','
    << fmt4(m.new_mpki) << ',' << fmt4(m.mpki_improvement);
  return s.str();
}

std::string human_row(const std::string& label, const MetricSet& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-24s %10llu %9llu %9s %9s %10s %10s %10s %9s %9s %9s", label.c_str(),
                static_cast<unsigned long long>(m.retired), static_cast<unsigned long long>(m.branches),
                fmt4(m.accuracy).c_str(), fmt4(m.coverage).c_str(), fmt4(m.mean_predicted_distance).c_str(),
                fmt4(m.mean_true_distance).c_str(), fmt4(m.mean_overestimate).c_str(), fmt4(m.old_mpki).c_str(),
                fmt4(m.new_mpki).c_str(), fmt4(m.mpki_improvement).c_str());
  return buf;
}

} // namespace

std::string report(const std::vector<LabeledMetrics>& rows, ReportFormat format, bool with_amean) {
  std::vector<MetricSet> all;
  for (const auto& r : rows) all.push_back(r.metrics);
  const MetricSet mean = amean(all);
  std::ostringstream out;
  switch (format) {
  case ReportFormat::Csv:
    out << kCsvHeader << '\n';
    for (const auto& r : rows) out << csv_row(r.label, r.metrics) << '\n';
    if (with_amean) out << csv_row("amean", mean) << '\n';
    break;
  case ReportFormat::Human: {
    char head[512];
    std::snprintf(head, sizeof head, "%-24s %10s %9s %9s %9s %10s %10s %10s %9s %9s %9s", "run", "retired", "branches",
                  "accuracy", "coverage", "pred_dist", "true_dist", "overest", "old_mpki", "new_mpki", "improve");
    out << head << '\n';
    for (const auto& r : rows) out << human_row(r.label, r.metrics) << '\n';
    if (with_amean) out << human_row("amean", mean) << '\n';
    break;
  }
  case ReportFormat::Json: {
    ojson j;
    j["runs"] = ojson::array();
    for (const auto& r : rows) {
      ojson rj;
      rj["label"] = r.label;
      rj.update(to_json(r.metrics));
      j["runs"].push_back(rj);
    }
    if (with_amean) j["amean"] = to_json(mean);
    out << j.dump(1) << '\n';
    break;
  }
  }
  return out.str();
}

std::string per_branch_csv(const MetricSet& m) {
  std::ostringstream out;
  out << "pc,instances,mispredictions,mp_selected,mp_gated,mp_correct,mp_incorrect,mp_misses,mp_drops\n";
  for (const BranchRow& r : m.per_branch) {
    out << r.pc << ',' << r.instances << ',' << r.mispredictions << ',' << r.mp_selected << ',' << fmt4(r.mp_gated())
        << ',' << r.mp_correct << ',' << r.mp_incorrect << ',' << r.mp_misses << ',' << r.mp_drops << '\n';
  }
  return out.str();
}

} // namespace reconverge
