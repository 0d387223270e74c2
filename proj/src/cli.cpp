#include "reconverge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "reconverge/json_util.hpp"
#include "reconverge/metrics.hpp"
#include "reconverge/pipeline.hpp"
#include "reconverge/workload_gen.hpp"

namespace reconverge {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

unsigned run_thread_limit() {
  if (const char* env = std::getenv("RECONVERGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ParseError(p.string(), "cannot open for writing");
  out << text;
}

ojson read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError(p.string(), "cannot open file");
  try {
    return parse_json_stream(in);
  } catch (const ParseError& e) {
    rethrow_in_file(p.string(), e);
  }
}

// ---- gen ----

struct GenArgs {
  std::string shape;
  GenParams params;
  std::string out;
  bool once = false;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  GenParams p = a.params;
  p.shape = parse_shape(a.shape);
  p.repeat = !a.once;
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError("gen", e.what());
  }
  const Workload w = generate(p);
  fs::path model_path(a.out);
  fs::path truth_path = model_path;
  truth_path.replace_extension(".truth");
  if (truth_path == model_path) throw UsageError("--out must not end in .truth");
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model_file(w.model, model_path.string());
  save_truth_file(w.truth, truth_path.string());
  out << "wrote " << model_path.string() << " (" << w.model.blocks.size() << " blocks, " << w.model.instr_count()
      << " instructions) and " << truth_path.string() << '\n';
  return kExitOk;
}

// ---- run ----

struct Entry {
  std::string model;
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> policies;
};

struct Experiment {
  std::vector<Entry> entries;
  std::string out;
  std::string format = "human";
  bool format_given = false;
  std::optional<std::uint64_t> budget;
  std::optional<std::uint64_t> warmup;
};

struct Job {
  std::string model_path;
  ProgramModel model;
  RunConfig cfg;
  std::string key;
  std::string label;
  fs::path dir;
};

struct JobOutput {
  MetricSet metrics;
};

ojson stats_json(const SimStats& s) {
  const MergeStats& m = s.merge;
  return {{"cycles", s.cycles},
          {"retired", s.retired},
          {"fetched", s.fetched},
          {"wrong_path_fetched", s.wrong_path_fetched},
          {"branches", s.branches},
          {"mispredictions", s.mispredictions},
          {"flushes", s.flushes},
          {"squashed", s.squashed},
          {"mean_wrong_path_length", std::round(s.mean_wrong_path_length() * 1e4) / 1e4},
          {"mp_selected", s.mp_selected},
          {"mp_flushes", s.mp_flushes},
          {"mp_penalty_cycles", s.mp_penalty_cycles},
          {"merge",
           {{"wpb_fills", m.wpb_fills},
            {"wpb_exhausted", m.wpb_exhausted},
            {"detections", m.detections},
            {"installs", m.installs},
            {"refreshes", m.refreshes},
            {"evictions", m.evictions},
            {"lookups", m.lookups},
            {"table_misses", m.table_misses},
            {"ul_inserts", m.ul_inserts},
            {"ul_drops", m.ul_drops},
            {"false_negatives", m.false_negatives},
            {"resolutions", m.resolutions}}}};
}

JobOutput execute(const Job& job, ReportFormat fmt) {
  const SimResult r = run(job.model, job.cfg);
  ScoreOptions opt;
  opt.retired = r.stats.retired;
  opt.warmup = job.cfg.warmup;
  opt.max_distance = job.cfg.merge.max_distance;
  opt.model = &job.model;
  opt.seed = job.cfg.seed;
  const ScoreResult s = score(r.log, opt);

  fs::create_directories(job.dir);
  save_model_file(job.model, (job.dir / "model.json").string());
  {
    std::ofstream ev(job.dir / "events.ndjson", std::ios::binary);
    if (!ev) throw ParseError((job.dir / "events.ndjson").string(), "cannot open for writing");
    write_event_log(r.log, ev);
  }
  ojson rj;
  rj["key"] = job.key;
  rj["label"] = job.label;
  rj["model"] = job.model_path;
  rj["config"] = to_json(job.cfg);
  rj["stats"] = stats_json(r.stats);
  write_text(job.dir / "run.json", rj.dump(1) + "\n");
  write_text(job.dir / "metrics.json", to_json(s.metrics).dump(1) + "\n");
  write_text(job.dir / (std::string("report.") + extension(fmt)), report({{job.label, s.metrics}}, fmt, false));
  write_text(job.dir / "per_branch.csv", per_branch_csv(s.metrics));
  return {s.metrics};
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned limit, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(limit, n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Job> plan(const Experiment& x) {
  std::vector<Job> jobs;
  std::set<std::string> labels;
  for (const Entry& en : x.entries) {
    ojson base = en.config.empty() ? ojson::object() : read_json_file(en.config);
    if (!base.is_object()) throw ParseError(en.config, "expected an object");
    const std::string where = en.config.empty() ? std::string("flags") : en.config;
    if (!en.seeds.empty() && base.contains("seed")) throw UsageError("--seed duplicates key 'seed' in " + where);
    if (!en.policies.empty() && base.contains("policy")) throw UsageError("--policy duplicates key 'policy' in " + where);
    if (x.budget) {
      if (base.contains("pipeline") && base["pipeline"].is_object() && base["pipeline"].contains("budget"))
        throw UsageError("--budget duplicates key 'pipeline.budget' in " + where);
      base["pipeline"]["budget"] = *x.budget;
    }
    if (x.warmup) {
      if (base.contains("warmup")) throw UsageError("--warmup duplicates key 'warmup' in " + where);
      base["warmup"] = *x.warmup;
    }

    const ProgramModel model = load_model_file(en.model);
    const auto report = validate_model(model);
    if (!report.empty()) throw ParseError(en.model + ": " + report.front().where, report.front().message);

    std::vector<std::optional<std::uint64_t>> seeds;
    for (auto s : en.seeds) seeds.emplace_back(s);
    if (seeds.empty()) seeds.emplace_back(std::nullopt);
    std::vector<std::optional<std::string>> policies;
    for (const auto& p : en.policies) policies.emplace_back(p);
    if (policies.empty()) policies.emplace_back(std::nullopt);

    const std::string stem = fs::path(en.model).stem().string();
    for (const auto& pol : policies) {
      for (const auto& seed : seeds) {
        ojson cj = base;
        if (seed) cj["seed"] = *seed;
        if (pol) cj["policy"] = *pol;
        Job job;
        job.model_path = en.model;
        job.model = model;
        try {
          job.cfg = run_config_from_json(cj);
        } catch (const ParseError& e) {
          if (en.config.empty()) throw;
          rethrow_in_file(en.config, e);
        }
        job.key = stem + "_s" + std::to_string(job.cfg.seed);
        job.label = stem + "_" + to_string(job.cfg.policy) + "_s" + std::to_string(job.cfg.seed);
        if (!labels.insert(job.label).second) throw UsageError("two runs share the label " + job.label);
        job.dir = fs::path(x.out) / job.label;
        jobs.push_back(std::move(job));
      }
    }
  }
  return jobs;
}

int cmd_run(const Experiment& x, std::ostream& out) {
  if (x.entries.empty()) throw UsageError("run needs --model or --spec");
  if (x.out.empty()) throw UsageError("run needs --out");
  const ReportFormat fmt = parse_report_format(x.format);
  const std::vector<Job> jobs = plan(x);
  std::vector<JobOutput> results(jobs.size());
  fs::create_directories(x.out);
  parallel_for(jobs.size(), run_thread_limit(), [&](std::size_t i) { results[i] = execute(jobs[i], fmt); });

  std::vector<LabeledMetrics> rows;
  for (std::size_t i = 0; i < jobs.size(); ++i) rows.push_back({jobs[i].label, results[i].metrics});
  const std::string summary = report(rows, fmt, true);
  write_text(fs::path(x.out) / (std::string("summary.") + extension(fmt)), summary);
  if (fmt != ReportFormat::Json) write_text(fs::path(x.out) / "summary.json", report(rows, ReportFormat::Json, true));
  out << summary;
  return kExitOk;
}

Experiment load_experiment(const std::string& path) {
  const ojson j = read_json_file(path);
  Experiment x;
  const ojson& runs = json_at(j, "runs", "");
  if (!runs.is_array() || runs.empty()) throw ParseError(path + ": runs", "expected a non-empty array");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string w = "runs[" + std::to_string(i) + "]";
    const ojson& r = runs[i];
    Entry e;
    e.model = resolve(json_get<std::string>(json_at(r, "model", w), w + ".model"));
    if (r.contains("config")) e.config = resolve(json_get<std::string>(r["config"], w + ".config"));
    if (r.contains("seeds")) {
      if (!r["seeds"].is_array() || r["seeds"].empty()) throw ParseError(path + ": " + w + ".seeds", "expected a non-empty array");
      for (const auto& s : r["seeds"]) e.seeds.push_back(json_get<std::uint64_t>(s, w + ".seeds"));
    }
    if (r.contains("policy")) e.policies.push_back(json_get<std::string>(r["policy"], w + ".policy"));
    x.entries.push_back(std::move(e));
  }
  if (j.contains("out")) x.out = resolve(json_get<std::string>(j["out"], "out"));
  if (j.contains("format")) {
    x.format = json_get<std::string>(j["format"], "format");
    x.format_given = true;
  }
  return x;
}

// ---- compare / audit ----

struct RunDir {
  fs::path dir;
  std::string key;
  std::string label;
  ojson run;
  MetricSet metrics;
};

std::vector<RunDir> load_runs(const fs::path& dir) {
  auto load_one = [](const fs::path& d) {
    RunDir r;
    r.dir = d;
    r.run = read_json_file(d / "run.json");
    r.key = json_get<std::string>(json_at(r.run, "key", "run.json"), "key");
    r.label = json_get<std::string>(json_at(r.run, "label", "run.json"), "label");
    try {
      r.metrics = metrics_from_json(read_json_file(d / "metrics.json"));
    } catch (const ParseError& e) {
      rethrow_in_file((d / "metrics.json").string(), e);
    }
    return r;
  };
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), "not a directory");
  if (fs::exists(dir / "run.json")) return {load_one(dir)};
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "run.json")) subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  if (subs.empty()) throw ParseError(dir.string(), "no run directories found");
  std::vector<RunDir> out;
  for (const auto& s : subs) out.push_back(load_one(s));
  return out;
}

std::string f4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& format, std::ostream& out) {
  if (dirs.size() < 2) throw UsageError("compare needs at least two run directories");
  const ReportFormat fmt = parse_report_format(format);
  std::vector<std::map<std::string, MetricSet>> sets;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    std::map<std::string, MetricSet> m;
    for (RunDir& r : load_runs(dirs[i])) {
      if (i == 0) keys.push_back(r.key);
      m[r.key] = r.metrics;
    }
    sets.push_back(std::move(m));
  }
  std::vector<std::string> common;
  for (const auto& k : keys)
    if (std::all_of(sets.begin(), sets.end(), [&](const auto& s) { return s.contains(k); })) common.push_back(k);
  if (common.empty()) throw ParseError("compare", "the directories share no runs (matched by model and seed)");

  struct Row {
    std::string key;
    std::size_t dir;
    MetricSet m;
  };
  std::vector<Row> rows;
  for (const auto& k : common)
    for (std::size_t i = 0; i < sets.size(); ++i) rows.push_back({k, i, sets[i].at(k)});
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::vector<MetricSet> all;
    for (const auto& k : common) all.push_back(sets[i].at(k));
    rows.push_back({"amean", i, amean(all)});
  }
  auto base_of = [&](const Row& r) -> const MetricSet& {
    for (const Row& b : rows)
      if (b.key == r.key && b.dir == 0) return b.m;
    return r.m;
  };

  if (fmt == ReportFormat::Json) {
    ojson j = ojson::array();
    for (const Row& r : rows) {
      const MetricSet& b = base_of(r);
      j.push_back({{"key", r.key},
                   {"dir", dirs[r.dir]},
                   {"accuracy", std::round(r.m.accuracy * 1e4) / 1e4},
                   {"coverage", std::round(r.m.coverage * 1e4) / 1e4},
                   {"mean_overestimate", std::round(r.m.mean_overestimate * 1e4) / 1e4},
                   {"old_mpki", std::round(r.m.old_mpki * 1e4) / 1e4},
                   {"new_mpki", std::round(r.m.new_mpki * 1e4) / 1e4},
                   {"delta_accuracy", std::round((r.m.accuracy - b.accuracy) * 1e4) / 1e4},
                   {"delta_overestimate", std::round((r.m.mean_overestimate - b.mean_overestimate) * 1e4) / 1e4},
                   {"delta_new_mpki", std::round((r.m.new_mpki - b.new_mpki) * 1e4) / 1e4}});
    }
    out << j.dump(1) << '\n';
    return kExitOk;
  }
  const bool csv = fmt == ReportFormat::Csv;
  if (csv) {
    out << "key,dir,accuracy,coverage,mean_overestimate,old_mpki,new_mpki,delta_accuracy,delta_overestimate,delta_new_mpki\n";
  } else {
    for (std::size_t i = 0; i < dirs.size(); ++i) out << '[' << i << "] " << dirs[i] << '\n';
    char head[256];
    std::snprintf(head, sizeof head, "%-28s %4s %9s %9s %9s %9s %9s %9s %9s %9s", "key", "dir", "accuracy", "coverage",
                  "overest", "old_mpki", "new_mpki", "d_acc", "d_over", "d_mpki");
    out << head << '\n';
  }
  for (const Row& r : rows) {
    const MetricSet& b = base_of(r);
    const std::string vals[] = {f4(r.m.accuracy), f4(r.m.coverage), f4(r.m.mean_overestimate), f4(r.m.old_mpki),
                                f4(r.m.new_mpki), f4(r.m.accuracy - b.accuracy),
                                f4(r.m.mean_overestimate - b.mean_overestimate), f4(r.m.new_mpki - b.new_mpki)};
    if (csv) {
      out << r.key << ',' << dirs[r.dir];
      for (const auto& v : vals) out << ',' << v;
      out << '\n';
    } else {
      char line[256];
      std::snprintf(line, sizeof line, "%-28s %4zu %9s %9s %9s %9s %9s %9s %9s %9s", r.key.c_str(), r.dir,
                    vals[0].c_str(), vals[1].c_str(), vals[2].c_str(), vals[3].c_str(), vals[4].c_str(), vals[5].c_str(),
                    vals[6].c_str(), vals[7].c_str());
      out << line << '\n';
    }
  }
  return kExitOk;
}

int cmd_audit(const std::vector<std::string>& dirs, std::ostream& out) {
  if (dirs.empty()) throw UsageError("audit needs a run directory");
  std::size_t total_violations = 0;
  for (const auto& d : dirs) {
    for (const RunDir& r : load_runs(d)) {
      const ProgramModel model = load_model_file((r.dir / "model.json").string());
      RunConfig cfg;
      try {
        cfg = run_config_from_json(json_at(r.run, "config", "run.json"));
      } catch (const ParseError& e) {
        rethrow_in_file((r.dir / "run.json").string(), e);
      }
      std::ifstream ev(r.dir / "events.ndjson");
      if (!ev) throw ParseError((r.dir / "events.ndjson").string(), "cannot open file");
      SimEventLog log;
      try {
        log = read_event_log(ev);
      } catch (const ParseError& e) {
        rethrow_in_file((r.dir / "events.ndjson").string(), e);
      }
      ScoreOptions opt;
      opt.retired = json_get<std::uint64_t>(json_at(json_at(r.run, "stats", "run.json"), "retired", "stats"), "retired");
      opt.warmup = cfg.warmup;
      opt.model = &model;
      opt.seed = cfg.seed;
      opt.max_distance = cfg.merge.max_distance;
      const ScoreResult s = score(log, opt);
      out << r.label << ": " << s.audited << " correct resolutions audited, " << s.violations.size() << " violations\n";
      for (std::size_t i = 0; i < std::min<std::size_t>(s.violations.size(), 20); ++i) {
        const AuditFinding& f = s.violations[i];
        out << "  instance " << f.index << " branch pc " << f.pc << " merge pc " << f.merge_pc << " age " << f.age << ": "
            << f.reason << '\n';
      }
      total_violations += s.violations.size();
    }
  }
  return total_violations == 0 ? kExitOk : kExitAudit;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic merge point prediction simulator", "reconverge"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic workload and its .truth sidecar");
  g->add_option("shape", gen.shape, "hammock, nested, loop or random")->required();
  g->add_option("--out", gen.out, "model file to write; the sidecar gets the .truth extension")->required();
  g->add_option("--seed", gen.params.seed, "generator seed");
  g->add_option("--block-min", gen.params.block_min, "minimum instructions per block");
  g->add_option("--block-max", gen.params.block_max, "maximum instructions per block");
  g->add_option("--bias", gen.params.branch_bias, "per-site taken probabilities")->delimiter(',');
  g->add_option("--reg-pressure", gen.params.reg_pressure, "probability that an instruction writes a register");
  g->add_option("--regs", gen.params.arch_reg_count, "architectural register count");
  g->add_option("--trip-count", gen.params.trip_count, "loop trip count (loop shape)");
  g->add_option("--max-distance", gen.params.max_distance, "merge search bound for the sidecar");
  g->add_flag("--once", gen.once, "do not wrap the shape in an outer loop");

  Experiment x;
  std::vector<std::string> models;
  std::string config, spec;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> policies;
  std::uint64_t budget = 0, warmup = 0;
  auto* r = app.add_subcommand("run", "simulate workloads and write per-run reports");
  r->add_option("--model", models, "model file (repeatable)");
  r->add_option("--config", config, "run config file");
  r->add_option("--spec", spec, "experiment file listing runs");
  r->add_option("--seed", seeds, "run seeds")->delimiter(',');
  r->add_option("--policy", policies, "bp_only, mpp or mpp_max")->delimiter(',');
  auto* budget_opt = r->add_option("--budget", budget, "retired-instruction budget");
  auto* warmup_opt = r->add_option("--warmup", warmup, "retired instructions excluded from metrics");
  auto* format_opt = r->add_option("--format", x.format, "human, csv or json");
  auto* out_opt = r->add_option("--out", x.out, "output directory");

  std::vector<std::string> compare_dirs;
  std::string compare_format = "human";
  auto* c = app.add_subcommand("compare", "side-by-side metrics of run directories");
  c->add_option("dirs", compare_dirs, "run directories; deltas are relative to the first")->required();
  c->add_option("--format", compare_format, "human, csv or json");

  std::vector<std::string> audit_dirs;
  auto* a = app.add_subcommand("audit", "check every correct merge prediction against the oracle");
  a->add_option("dirs", audit_dirs, "run directories")->required();

  std::vector<std::string> argv_store{"reconverge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*r) {
      if (!spec.empty()) {
        if (!models.empty() || !config.empty() || !seeds.empty() || !policies.empty())
          throw UsageError("--spec cannot be combined with --model, --config, --seed or --policy");
        Experiment fromfile = load_experiment(spec);
        if (*out_opt && !fromfile.out.empty()) throw UsageError("--out duplicates key 'out' in " + spec);
        if (*format_opt && fromfile.format_given) throw UsageError("--format duplicates key 'format' in " + spec);
        if (*out_opt) fromfile.out = x.out;
        if (*format_opt) fromfile.format = x.format;
        x = std::move(fromfile);
      } else {
        for (const auto& m : models) x.entries.push_back({m, config, seeds, policies});
      }
      if (*budget_opt) x.budget = budget;
      if (*warmup_opt) x.warmup = warmup;
      return cmd_run(x, out);
    }
    if (*c) return cmd_compare(compare_dirs, compare_format, out);
    if (*a) return cmd_audit(audit_dirs, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitUsage;
}

} // namespace reconverge
