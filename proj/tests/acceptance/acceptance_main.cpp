// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "reconverge/cli.hpp"
#include "reconverge/conf_cost.hpp"
#include "reconverge/merge_pred.hpp"
#include "reconverge/metrics.hpp"
#include "reconverge/oracle.hpp"
#include "reconverge/pipeline.hpp"
#include "reconverge/workload_gen.hpp"
#include "../stress.hpp"

using namespace reconverge;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kDiamondMinAccuracy = 0.99;
constexpr std::uint64_t kDiamondTrainInstances = 1000;
constexpr double kHardMinCoverage = 0.95;
constexpr double kHardMinReduction = 0.40;
constexpr double kHardMinSeedShare = 0.95;
constexpr unsigned kHardSeeds = 100;
constexpr std::uint64_t kHardBudget = 50000;
constexpr std::uint64_t kHardWarmup = 10000;
constexpr std::uint64_t kCorpusBudget = 100000;
constexpr unsigned kCorpusRandomSeeds = 200;
constexpr double kMixRandomMin = 0.80;
constexpr double kMixBiasedMax = 0.05;
constexpr double kMixSlowMin = 0.50;
constexpr unsigned kMixSeeds = 10;
constexpr std::uint64_t kMixBudget = 100000;
constexpr std::uint64_t kMixWarmup = 20000;
constexpr std::uint64_t kStressEvents = 1'000'000;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report_line(int id, const char* name, const Outcome& o, double seconds, double limit) {
  const bool in_time = seconds <= limit;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds,
              limit, in_time ? "" : ", over time");
  std::fflush(stdout);
}

void criterion(int id, const char* name, double limit, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report_line(id, name, o, s, limit);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

struct Fails {
  std::vector<std::string> items;
  void expect(bool ok, const std::string& what) {
    if (!ok) items.push_back(what);
  }
  Outcome outcome(const std::string& pass_detail) const {
    if (items.empty()) return {true, pass_detail};
    std::string d = std::to_string(items.size()) + " rule(s) violated:";
    for (const auto& i : items) d += " " + i + ";";
    return {false, d};
  }
};

RunConfig config(Policy p, std::uint64_t seed, std::uint64_t budget, std::uint64_t warmup = 0) {
  RunConfig c;
  c.policy = p;
  c.seed = seed;
  c.pipeline.budget = budget;
  c.warmup = warmup;
  return c;
}

ScoreResult scored(const ProgramModel& m, const RunConfig& c, const SimResult& r, bool audit) {
  ScoreOptions o;
  o.retired = r.stats.retired;
  o.warmup = c.warmup;
  o.max_distance = c.merge.max_distance;
  o.seed = c.seed;
  if (audit) o.model = &m;
  return score(r.log, o);
}

// ---- 1 ----

Outcome decision_table() {
  struct Cell {
    ConfLevel conf;
    LatLevel lat;
    bool mp;
  };
  const Cell table[] = {{ConfLevel::Low, LatLevel::Low, true},   {ConfLevel::Low, LatLevel::High, true},
                        {ConfLevel::Med, LatLevel::Low, false},  {ConfLevel::Med, LatLevel::High, true},
                        {ConfLevel::High, LatLevel::Low, false}, {ConfLevel::High, LatLevel::High, false}};
  int ok = 0;
  for (const Cell& c : table) ok += decide(c.conf, c.lat) == c.mp;
  return {ok == 6, std::to_string(ok) + "/6 cells match"};
}

// ---- 2 ----

DynInstr dyn(Pc pc, RegSet dests = {}) {
  DynInstr d;
  d.pc = pc;
  d.dests = dests;
  return d;
}

MergeEntry entry(Pc b, Pc m, std::uint32_t dist, std::uint8_t ctr, RegSet indep = RegSet::all(16)) {
  MergeEntry e;
  e.branch_pc = b;
  e.merge_pc = m;
  e.merge_distance = dist;
  e.ctr = ctr;
  e.indep_regs = indep;
  e.valid = true;
  return e;
}

Outcome mechanism_rules() {
  Fails f;
  MergeConfig cfg;
  std::vector<DynInstr> seq;
  for (Pc i = 0; i < 150; ++i) seq.push_back(dyn(1000 + i, RegSet::of({static_cast<unsigned>(i % 16)})));

  // Fill stop conditions.
  f.expect(wpb_fill(5, std::span(seq).first(30), cfg).fill_attempts == 30, "fill: end of rob");
  f.expect(wpb_fill(5, seq, cfg).fill_attempts == 100, "fill: maximum distance");
  auto loop = seq;
  loop[6].pc = 5;
  f.expect(wpb_fill(5, loop, cfg).fill_attempts == 6, "fill: branch recurs");
  {
    const WpbContext c = wpb_fill(9, std::vector<DynInstr>{dyn(10, RegSet::of({1})), dyn(11, RegSet::of({2}))}, cfg);
    const WpbSlot* a = c.store.lookup(10);
    const WpbSlot* b = c.store.lookup(11);
    f.expect(a && a->wp_distance == 1 && a->wp_regs == RegSet::of({1}) && b && b->wp_distance == 2 &&
                 b->wp_regs == RegSet::of({1, 2}),
             "fill: accumulation");
  }

  // Probe stop conditions and distance.
  {
    WpbContext c = wpb_fill(7, std::vector<DynInstr>{dyn(20, RegSet::of({1})), dyn(21), dyn(30)}, cfg);
    (void)wpb_probe(c, dyn(40, RegSet::of({2})), cfg);
    (void)wpb_probe(c, dyn(41, RegSet::of({3})), cfg);
    const ProbeResult r = wpb_probe(c, dyn(30), cfg);
    f.expect(r.kind == ProbeKind::Hit && r.found.merge_distance == 3 &&
                 r.found.indep_regs == RegSet::of({1, 2, 3}).complement(16),
             "probe: hit");
  }
  {
    WpbContext c = wpb_fill(7, std::span(seq).first(4), cfg);
    c.store.insert(30, 5, {}, {});
    (void)wpb_probe(c, dyn(50), cfg);
    const ProbeResult r = wpb_probe(c, dyn(30), cfg);
    f.expect(r.kind == ProbeKind::Hit && r.found.merge_distance == 5, "probe: max(wp, cp)");
  }
  {
    WpbContext c = wpb_fill(7, std::span(seq).first(4), cfg);
    f.expect(wpb_probe(c, dyn(7), cfg).kind == ProbeKind::Exhausted, "probe: branch recurs");
    MergeConfig small = cfg;
    small.max_distance = 2;
    WpbContext d = wpb_fill(7, std::span(seq).first(2), small);
    (void)wpb_probe(d, dyn(60), small);
    (void)wpb_probe(d, dyn(61), small);
    f.expect(wpb_probe(d, dyn(62), small).kind == ProbeKind::Exhausted, "probe: maximum distance");
  }
  {
    MergeConfig cam = cfg;
    cam.wpb_fully_associative = true;
    bool all = true;
    for (std::uint32_t wp = 1; wp <= 30; ++wp) {
      for (std::uint32_t cp = 1; cp <= 30; ++cp) {
        std::vector<DynInstr> tail(seq.begin(), seq.begin() + wp);
        tail.back().pc = 77;
        WpbContext c = wpb_fill(7, tail, cam);
        for (std::uint32_t k = 1; k < cp; ++k) (void)wpb_probe(c, dyn(5000 + k), cam);
        const ProbeResult r = wpb_probe(c, dyn(77), cam);
        all = all && r.kind == ProbeKind::Hit && r.found.merge_distance == std::max(wp, cp);
      }
    }
    f.expect(all, "probe: exhaustive max(wp, cp)");
  }

  // Selection.
  {
    PredictorTable t(cfg);
    t.install(entry(100, 300, 20, 3));
    t.install(entry(100, 200, 10, 5));
    f.expect(t.predict(100)->prediction.merge_pc == 200, "select: highest counter");
    PredictorTable u(cfg);
    u.install(entry(100, 300, 20, 4));
    u.install(entry(100, 200, 10, 4));
    f.expect(u.predict(100)->prediction.merge_pc == 200, "select: minimum distance");
    f.expect(!u.predict(101).has_value(), "select: miss");
  }
  // Eviction.
  {
    PredictorTable t(cfg);
    const std::uint8_t ctrs[] = {7, 2, 5, 6};
    for (int i = 0; i < 4; ++i) t.install(entry(100, 200 + i, 10, ctrs[i]));
    const InstallResult r = t.install(entry(100, 999, 10, 4));
    f.expect(r.evicted && r.victim.ctr == 2, "evict: smallest counter");
    PredictorTable u(cfg);
    const std::uint32_t d[] = {10, 80, 30, 50};
    for (int i = 0; i < 4; ++i) u.install(entry(100, 200 + i, d[i], 4));
    const InstallResult s = u.install(entry(100, 999, 10, 4));
    f.expect(s.evicted && s.victim.merge_distance == 80, "evict: largest distance");
    PredictorTable v(cfg);
    v.install(entry(100, 200, 10, 4));
    f.expect(!v.install(entry(100, 201, 10, 4)).evicted, "evict: free way");
  }
  // Update list verdicts.
  auto resolve = [](UpdatePolicy pol, const MergeEntry& e, const std::vector<DynInstr>& stream) {
    UpdateList ul(8, 100, pol);
    UpdateListEntry u;
    u.branch_pc = e.branch_pc;
    u.entry = e;
    u.owner = 1;
    u.selected = true;
    u.predicted_distance = e.merge_distance;
    ul.insert(u);
    ul.activate(1);
    for (const DynInstr& d : stream) {
      auto r = ul.on_retire(d);
      if (!r.empty()) return std::optional<Resolution>(r.front());
    }
    return std::optional<Resolution>();
  };
  const RegSet hi(0xFFF8);
  {
    auto r = resolve(UpdatePolicy::Plain, entry(100, 50, 5, 4, hi), {dyn(60, RegSet::of({1})), dyn(61, RegSet::of({2})), dyn(50)});
    f.expect(r && r->verdict == Verdict::Correct && r->age == 3 && r->entry.entry.ctr == 5, "verdict: correct");
    r = resolve(UpdatePolicy::Plain, entry(100, 50, 2, 4, hi), {dyn(60), dyn(61), dyn(62)});
    f.expect(r && r->verdict == Verdict::WrongDistance && r->age == 3 && r->entry.entry.ctr == 3, "verdict: wrong distance");
    r = resolve(UpdatePolicy::Plain, entry(100, 50, 5, 4, hi), {dyn(60, RegSet::of({5}))});
    f.expect(r && r->verdict == Verdict::UnexpectedWrite && r->entry.entry.ctr == 3, "verdict: unexpected write");
    r = resolve(UpdatePolicy::Plain, entry(100, 50, 5, 4, hi), {dyn(60), dyn(100)});
    f.expect(r && r->verdict == Verdict::LoopBack && r->entry.entry.ctr == 3, "verdict: loop back");
    std::vector<DynInstr> far;
    for (Pc p = 60; p < 68; ++p) far.push_back(dyn(p));
    far.push_back(dyn(50));
    r = resolve(UpdatePolicy::UpdateMax, entry(100, 50, 5, 4, hi), far);
    f.expect(r && r->verdict == Verdict::Correct && r->age == 9 && r->entry.entry.merge_distance == 9, "update max growth");
  }
  return f.outcome("fill x3, probe x3, max(wp,cp) 900 pairs, selection, eviction, 4 verdicts, update max");
}

// ---- 3 and 6 ----

struct CorpusRun {
  std::string name;
  MetricSet mpp;
  MetricSet mpp_max;
  std::size_t violations = 0;
  std::uint64_t audited = 0;
};

std::vector<Workload> corpus() {
  std::vector<Workload> out;
  out.push_back(gen_hammock({.branch_bias = {0.5}, .seed = 1}));
  out.push_back(gen_nested({.shape = Shape::NestedDiamond, .branch_bias = {0.5, 0.05}, .seed = 1}));
  out.push_back(gen_loop({.shape = Shape::LoopWithExit, .seed = 1, .trip_count = 10}));
  for (std::uint64_t s = 1; s <= kCorpusRandomSeeds; ++s)
    out.push_back(gen_random_reducible({.shape = Shape::RandomReducible, .seed = s}));
  return out;
}

std::vector<CorpusRun> corpus_runs;
double corpus_seconds = 0;

void run_corpus() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ws = corpus();
  const char* names[] = {"hammock", "nested", "loop"};
  for (std::size_t i = 0; i < ws.size(); ++i) {
    CorpusRun cr;
    cr.name = i < 3 ? names[i] : "random_s" + std::to_string(i - 2);
    for (Policy p : {Policy::Mpp, Policy::MppMax}) {
      const RunConfig c = config(p, 1, kCorpusBudget);
      const SimResult r = run(ws[i].model, c);
      const ScoreResult s = scored(ws[i].model, c, r, true);
      cr.violations += s.violations.size();
      cr.audited += s.audited;
      (p == Policy::Mpp ? cr.mpp : cr.mpp_max) = s.metrics;
    }
    corpus_runs.push_back(std::move(cr));
  }
  corpus_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome oracle_soundness() {
  run_corpus();
  std::size_t v = 0;
  std::uint64_t audited = 0;
  std::string worst;
  for (const auto& r : corpus_runs) {
    v += r.violations;
    audited += r.audited;
    if (r.violations && worst.empty()) worst = " first offender " + r.name;
  }
  return {v == 0, std::to_string(corpus_runs.size()) + " workloads x 2 policies, " + std::to_string(audited) +
                      " correct resolutions audited, " + std::to_string(v) + " contradicted" + worst};
}

Outcome max_vs_plain() {
  std::size_t acc_bad = 0, over_bad = 0;
  std::string examples;
  for (const auto& r : corpus_runs) {
    const bool a = r.mpp_max.accuracy + 1e-12 >= r.mpp.accuracy;
    const bool o = r.mpp_max.mean_overestimate + 1e-12 >= r.mpp.mean_overestimate;
    if (!a) ++acc_bad;
    if (!o) ++over_bad;
    if ((!a || !o) && examples.size() < 400)
      examples += " " + r.name + fmt("(acc %.4f vs %.4f, over %.4f", r.mpp_max.accuracy, r.mpp.accuracy, r.mpp_max.mean_overestimate) +
                  fmt(" vs %.4f)", r.mpp.mean_overestimate);
  }
  std::vector<MetricSet> a, b;
  for (const auto& r : corpus_runs) {
    a.push_back(r.mpp);
    b.push_back(r.mpp_max);
  }
  const MetricSet ma = amean(a), mb = amean(b);
  std::string d = std::to_string(corpus_runs.size()) + " workloads; accuracy ordering broken on " + std::to_string(acc_bad) +
                  ", overestimate ordering broken on " + std::to_string(over_bad) +
                  fmt("; amean accuracy mpp %.4f mpp_max %.4f", ma.accuracy, mb.accuracy) +
                  fmt(", overestimate mpp %.2f mpp_max %.2f", ma.mean_overestimate, mb.mean_overestimate);
  if (acc_bad + over_bad) d += ";" + examples;
  return {acc_bad == 0 && over_bad == 0, d};
}

// ---- 4 ----

Outcome nested_diamond() {
  Fails f;
  const Workload w = gen_nested({.shape = Shape::NestedDiamond, .branch_bias = {0.5, 0.0}, .seed = 1});
  const Pc a = w.model.block(0).instrs.back().pc;
  const Pc d = w.model.first_pc(3);
  const Pc fpc = w.model.first_pc(5);
  f.expect(static_postdominator(w.model, a) == fpc, "postdominator of A is not F");

  const RunConfig c = config(Policy::Mpp, 1, 200000);
  const SimResult r = run(w.model, c);
  std::uint64_t instances = 0, predicted = 0, predicted_d = 0, resolved = 0, correct = 0;
  std::uint64_t trained_from = 0;
  for (const Event& e : r.log) {
    if (e.wrong_path || e.pc != a) continue;
    if (e.kind == EventKind::BranchRetired && ++instances == kDiamondTrainInstances) trained_from = e.index + 1;
    if (instances < kDiamondTrainInstances || e.index < trained_from) continue;
    if (e.kind == EventKind::MpPredicted) {
      ++predicted;
      predicted_d += e.merge_pc == d;
    } else if (e.kind == EventKind::MpResolved) {
      ++resolved;
      correct += is_correct(e.verdict);
    }
  }
  const double acc = resolved ? static_cast<double>(correct) / static_cast<double>(resolved) : 0.0;
  MergeConfig mc = c.effective_merge();
  // Final table state: the selected prediction for A.
  PredictorTable t(mc);
  for (const MergeEntry& e : r.merge_table) t.install(e);
  const auto final_pred = t.predict(a);
  f.expect(instances > kDiamondTrainInstances, "fewer than 1000 instances of A");
  f.expect(predicted > 0 && predicted_d == predicted, "selected prediction is not D after training");
  f.expect(final_pred && final_pred->prediction.merge_pc == d, "final table does not select D");
  f.expect(acc >= kDiamondMinAccuracy, "accuracy below 99%");
  return f.outcome(std::to_string(instances) + " instances of A; after " + std::to_string(kDiamondTrainInstances) + ": " +
                   std::to_string(predicted_d) + "/" + std::to_string(predicted) + " predictions select D, " +
                   fmt("accuracy %.4f", acc) + "; postdom(A) = F");
}

// ---- 5 ----

Outcome hard_branch() {
  unsigned ok = 0;
  double min_cov = 1, min_red = 1, sum_cov = 0, sum_red = 0;
  for (unsigned s = 1; s <= kHardSeeds; ++s) {
    const Workload w = gen_hammock({.branch_bias = {0.5}, .seed = s});
    const RunConfig cb = config(Policy::BpOnly, s, kHardBudget, kHardWarmup);
    const RunConfig cm = config(Policy::Mpp, s, kHardBudget, kHardWarmup);
    const MetricSet bp = scored(w.model, cb, run(w.model, cb), false).metrics;
    const MetricSet mp = scored(w.model, cm, run(w.model, cm), true).metrics;
    const double red = bp.old_mpki > 0 ? (bp.old_mpki - mp.new_mpki) / bp.old_mpki : 0.0;
    min_cov = std::min(min_cov, mp.coverage);
    min_red = std::min(min_red, red);
    sum_cov += mp.coverage;
    sum_red += red;
    if (mp.coverage >= kHardMinCoverage && red >= kHardMinReduction) ++ok;
  }
  const double share = static_cast<double>(ok) / kHardSeeds;
  return {share >= kHardMinSeedShare,
          std::to_string(ok) + "/" + std::to_string(kHardSeeds) + " seeds meet coverage>=0.95 and reduction>=0.40" +
              fmt("; mean coverage %.4f (min %.4f)", sum_cov / kHardSeeds, min_cov) +
              fmt(", mean MPKI reduction %.4f (min %.4f)", sum_red / kHardSeeds, min_red)};
}

// ---- 7 ----

Outcome selectivity() {
  std::uint64_t inst[3] = {0, 0, 0}, sel[3] = {0, 0, 0};
  double lo[3] = {1, 1, 1};
  for (unsigned s = 1; s <= kMixSeeds; ++s) {
    const Workload w = gen_confidence_mix(s);
    const auto sites = w.model.branch_sites();
    const RunConfig c = config(Policy::Mpp, s, kMixBudget, kMixWarmup);
    const MetricSet m = scored(w.model, c, run(w.model, c), false).metrics;
    for (int k = 0; k < 3; ++k) {
      const BranchRow* row = m.branch(sites[static_cast<std::size_t>(k)].first);
      if (!row) continue;
      inst[k] += row->instances;
      sel[k] += row->mp_selected;
      lo[k] = std::min(lo[k], row->mp_gated());
    }
  }
  double frac[3];
  for (int k = 0; k < 3; ++k) frac[k] = inst[k] ? static_cast<double>(sel[k]) / static_cast<double>(inst[k]) : 0.0;
  const bool pass = frac[0] > kMixRandomMin && frac[1] < kMixBiasedMax && frac[2] > kMixSlowMin;
  return {pass, fmt("MP-selected: random site %.4f, always-taken site %.4f, slow biased site %.4f", frac[0], frac[1], frac[2]) +
                    fmt(" (pooled over 10 seeds; per-seed minimum %.4f / -- / %.4f)", lo[0], lo[2])};
}

// ---- 8 ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "reconverge_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) { return run_cli(args, sink, sink); };
  if (cli({"gen", "random", "--seed", "11", "--out", (root / "r.json").string()}) != 0 ||
      cli({"gen", "nested", "--bias", "0.5,0.1", "--out", (root / "n.json").string()}) != 0)
    return {false, "gen failed"};
  std::ofstream(root / "spec.json") << R"({"runs": [{"model": "r.json", "seeds": [1, 2, 3], "policy": "mpp"},
                                                    {"model": "n.json", "seeds": [4], "policy": "mpp_max"}],
                                           "format": "csv"})";
  for (const char* o : {"a", "b"})
    if (cli({"run", "--spec", (root / "spec.json").string(), "--budget", "20000", "--out", (root / o).string()}) != 0)
      return {false, "run failed"};
  std::size_t files = 0, diffs = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"))) ++diffs;
  }
  fs::remove_all(root);
  return {diffs == 0 && files > 0, std::to_string(files) + " output files compared, " + std::to_string(diffs) + " differ"};
}

// ---- 9 ----

Outcome counter_safety() {
  const stress::Report a = stress::predictors(91, kStressEvents);
  const stress::Report b = stress::latency(92, kStressEvents);
  const stress::Report c = stress::merge(93, kStressEvents, UpdatePolicy::Plain);
  const stress::Report d = stress::merge(94, kStressEvents, UpdatePolicy::UpdateMax);
  std::string faults;
  for (const auto* r : {&a, &b, &c, &d})
    for (const auto& f : r->faults) faults += " " + f + ";";
  const bool ok = faults.empty();
  return {ok, std::to_string(a.events + b.events + c.events + d.events) + " random events, " +
                  (ok ? std::string("all counters, distances and register sets in range") : "faults:" + faults)};
}

} // namespace

int main() {
  criterion(1, "decision table exactness", 1, decision_table);
  criterion(2, "mechanism rule exactness", 5, mechanism_rules);
  criterion(3, "oracle soundness on the synthetic corpus", 300, oracle_soundness);
  criterion(4, "nested diamond merge at D", 10, nested_diamond);
  criterion(5, "coin-flip hammock coverage and MPKI reduction", 120, hard_branch);
  // Reuses the corpus runs of criterion 3; its time is charged there.
  criterion(6, "update-max vs plain ordering", 300, max_vs_plain);
  criterion(7, "confidence-cost selectivity", 60, selectivity);
  criterion(8, "byte-identical reruns", 60, determinism);
  criterion(9, "counter and range safety", 60, counter_safety);
  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
