#include "reconverge/pipeline.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <queue>
#include <random>

namespace reconverge {

std::vector<DynInstr> rob_walk(const std::deque<RobEntry>& rob, std::size_t branch_index) {
  std::vector<DynInstr> out;
  if (branch_index >= rob.size()) return out;
  out.reserve(rob.size() - branch_index - 1);
  for (std::size_t i = branch_index + 1; i < rob.size(); ++i) out.push_back(rob[i].instr);
  return out;
}

namespace {

using RegReady = std::array<std::uint64_t, kMaxArchRegs>;

class Simulator {
public:
  Simulator(const ProgramModel& model, const RunConfig& cfg)
      : model_(model), cfg_(cfg), tage_(cfg.tage), jrs_(cfg.jrs), latency_(cfg.latency),
        walker_(make_walker(model, cfg.seed)) {
    if (cfg.policy != Policy::BpOnly) merge_.emplace(cfg.effective_merge());
    std::seed_seq cp{0x7131u, static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    std::seed_seq wp{0x7132u, static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    correct_rng_.seed(cp);
    wrong_rng_.seed(wp);
    reg_ready_.fill(0);
  }

  SimResult run() {
    const auto budget = cfg_.pipeline.budget;
    while (stats_.retired < budget && !(arch_done_ && rob_.empty())) {
      resolve();
      retire();
      if (stats_.retired >= budget) break;
      fetch();
      advance();
    }
    stats_.cycles = now_;
    if (merge_) {
      stats_.merge = merge_->stats();
      for (const MergeEntry& e : merge_->table().all())
        if (e.valid) result_.merge_table.push_back(e);
    }
    result_.stats = stats_;
    return std::move(result_);
  }

private:
  using Pending = std::pair<std::uint64_t, std::uint64_t>; // (complete cycle, fetch id)

  std::uint64_t exec_latency(Pc pc, std::mt19937_64& rng) {
    const LatencyClass& lc = model_.instr(pc).latency;
    if (const auto* f = std::get_if<FixedLatency>(&lc)) return f->cycles;
    const auto& m = std::get<LoadMissLatency>(lc);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u < m.miss_prob) return m.miss_cycles == 0 ? cfg_.pipeline.load_miss_latency : m.miss_cycles;
    return m.hit_cycles;
  }

  std::uint64_t schedule(const DynInstr& d, std::mt19937_64& rng) {
    std::uint64_t ready = now_ + 1;
    for (unsigned r : d.srcs.to_vector()) ready = std::max(ready, reg_ready_[r]);
    const std::uint64_t done = ready + exec_latency(d.pc, rng);
    for (unsigned r : d.dests.to_vector()) reg_ready_[r] = done;
    return done;
  }

  bool path_exhausted() const { return diverged_ ? wp_cursor_.ended : arch_done_; }

  void fetch() {
    if (now_ < stall_until_) return;
    for (unsigned n = 0; n < cfg_.pipeline.fetch_width; ++n) {
      if (rob_.size() >= cfg_.pipeline.rob_size) return;
      if (!(diverged_ ? fetch_wrong() : fetch_correct())) return;
    }
  }

  bool fetch_correct() {
    auto d = step_architectural(model_, walker_);
    if (!d) {
      arch_done_ = true;
      return false;
    }
    RobEntry e;
    e.instr = *d;
    e.fetch_id = next_fetch_id_++;
    e.arch_index = arch_fetched_++;
    e.fetch_cycle = now_;
    e.complete_cycle = schedule(e.instr, correct_rng_);
    ++stats_.fetched;
    if (e.instr.branch) {
      const std::uint64_t gh = ghist_;
      predict_branch(e, tage_.predict(e.instr.pc, gh), gh);
      e.actual_dir = e.instr.branch->taken;
      pending_.emplace(e.complete_cycle, e.fetch_id);
      if (e.predicted_dir != e.actual_dir) {
        ghist_ckpt_ = push_history(gh, e.actual_dir);
        reg_ckpt_ = reg_ready_;
        const CondBranch cb = *model_.cond_at(e.instr.pc);
        wp_cursor_ = PathCursor{{e.predicted_dir ? cb.taken : cb.not_taken, 0}, false};
        diverged_ = true;
      }
      ghist_ = push_history(gh, e.predicted_dir);
    }
    rob_.push_back(std::move(e));
    return true;
  }

  bool fetch_wrong() {
    std::optional<TagePrediction> pred;
    const std::uint64_t gh = ghist_;
    auto dir = [&](Pc pc, SiteId) {
      pred = tage_.predict(pc, gh);
      return pred->dir;
    };
    auto d = step_path(model_, wp_cursor_, next_fetch_id_, dir);
    if (!d) return false;
    RobEntry e;
    e.instr = *d;
    e.fetch_id = next_fetch_id_++;
    e.fetch_cycle = now_;
    e.wrong_path = true;
    e.complete_cycle = schedule(e.instr, wrong_rng_);
    ++stats_.fetched;
    ++stats_.wrong_path_fetched;
    if (pred) {
      predict_branch(e, *pred, gh);
      ghist_ = push_history(gh, e.predicted_dir);
    }
    rob_.push_back(std::move(e));
    return true;
  }

  void predict_branch(RobEntry& e, const TagePrediction& p, std::uint64_t gh) {
    const Pc pc = e.instr.pc;
    e.is_cond = true;
    e.ghist = gh;
    e.tage = p;
    e.predicted_dir = p.dir;
    e.cc.conf = classify_confidence(p.is_weak, jrs_.confidence(pc, gh) == JrsLevel::HighConf);
    e.cc.lat = latency_.classify_latency(pc);
    e.cc.use_mp = decide(e.cc.conf, e.cc.lat);
    if (e.cc.use_mp && merge_) e.mp = merge_->query(pc, e.fetch_id);

    Event ev = base_event(EventKind::BranchPredicted, e);
    ev.taken = e.predicted_dir;
    ev.conf = e.cc.conf;
    ev.lat = e.cc.lat;
    ev.use_mp = e.cc.use_mp;
    ev.mp = e.mp.status;
    log(ev);
    if (e.mp.status == MpStatus::Predicted) {
      Event mp = base_event(EventKind::MpPredicted, e);
      mp.merge_pc = e.mp.prediction.merge_pc;
      mp.distance = e.mp.prediction.merge_distance;
      log(mp);
    }
  }

  Event base_event(EventKind k, const RobEntry& e) const {
    Event ev;
    ev.kind = k;
    ev.cycle = now_;
    ev.index = e.wrong_path ? e.fetch_id : e.arch_index;
    ev.pc = e.instr.pc;
    ev.wrong_path = e.wrong_path;
    return ev;
  }

  void log(const Event& e) { result_.log.push_back(e); }

  std::size_t rob_position(std::uint64_t fetch_id) const {
    auto it = std::lower_bound(rob_.begin(), rob_.end(), fetch_id,
                               [](const RobEntry& e, std::uint64_t id) { return e.fetch_id < id; });
    return static_cast<std::size_t>(it - rob_.begin());
  }

  void resolve() {
    while (!pending_.empty() && pending_.top().first <= now_) {
      const auto [done, fid] = pending_.top();
      pending_.pop();
      const std::size_t idx = rob_position(fid);
      const RobEntry& e = rob_[idx];
      const std::uint64_t lat = done - e.fetch_cycle;
      latency_.record_latency(e.instr.pc, lat);
      Event ev = base_event(EventKind::BranchResolved, e);
      ev.mispredicted = e.predicted_dir != e.actual_dir;
      ev.latency = lat;
      log(ev);
      if (ev.mispredicted) flush(idx);
    }
  }

  void flush(std::size_t idx) {
    const RobEntry& br = rob_[idx];
    const std::vector<DynInstr> tail = rob_walk(rob_, idx);
    if (merge_) {
      merge_->on_mispredict(br.instr.pc, br.fetch_id, tail);
      merge_->on_squash(br.fetch_id);
    }
    Event ev = base_event(EventKind::Flush, br);
    ev.squashed = tail.size();
    log(ev);
    ++stats_.flushes;
    stats_.squashed += tail.size();
    rob_.erase(rob_.begin() + static_cast<std::ptrdiff_t>(idx) + 1, rob_.end());
    ghist_ = ghist_ckpt_;
    reg_ready_ = reg_ckpt_;
    diverged_ = false;
    stall_until_ = now_ + cfg_.pipeline.flush_refill_penalty;
  }

  std::uint64_t owner_index(std::uint64_t fetch_id) const {
    auto it = std::lower_bound(retired_branches_.begin(), retired_branches_.end(), fetch_id,
                               [](const Pending& p, std::uint64_t id) { return p.first < id; });
    return it != retired_branches_.end() && it->first == fetch_id ? it->second : 0;
  }

  void retire() {
    for (unsigned n = 0; n < cfg_.pipeline.fetch_width && !rob_.empty(); ++n) {
      RobEntry& e = rob_.front();
      if (e.complete_cycle > now_) break;
      ++stats_.retired;
      const Pc pc = e.instr.pc;
      if (e.is_cond) {
        const bool correct = e.predicted_dir == e.actual_dir;
        tage_.update(pc, e.ghist, e.actual_dir, e.tage);
        jrs_.update(pc, e.ghist, correct);
        ++stats_.branches;
        if (!correct) ++stats_.mispredictions;
        if (e.cc.use_mp) ++stats_.mp_selected;
        Event ev = base_event(EventKind::BranchRetired, e);
        ev.taken = e.actual_dir;
        ev.mispredicted = !correct;
        ev.use_mp = e.cc.use_mp;
        ev.conf = e.cc.conf;
        ev.lat = e.cc.lat;
        ev.mp = e.mp.status;
        if (e.mp.status == MpStatus::Predicted) {
          ev.merge_pc = e.mp.prediction.merge_pc;
          ev.distance = e.mp.prediction.merge_distance;
        }
        log(ev);
      }
      if (cfg_.log_retired) log(base_event(EventKind::Retired, e));
      if (merge_) on_merge_retire(e);
      if (e.is_cond) {
        retired_branches_.emplace_back(e.fetch_id, e.arch_index);
        trim_retired_branches(e.arch_index);
      }
      rob_.pop_front();
      if (stats_.retired >= cfg_.pipeline.budget) break;
    }
  }

  void on_merge_retire(const RobEntry& e) {
    RetireOutcome out = merge_->on_retire(e.instr, e.fetch_id);
    for (const MergeEntry& d : out.detections) {
      Event ev = base_event(EventKind::WpbDetected, e);
      ev.pc = d.branch_pc;
      ev.merge_pc = d.merge_pc;
      ev.distance = d.merge_distance;
      log(ev);
    }
    for (const Resolution& r : out.resolutions) {
      if (!r.entry.selected) continue;
      Event ev;
      ev.kind = EventKind::MpResolved;
      ev.cycle = now_;
      ev.index = owner_index(r.entry.owner);
      ev.pc = r.entry.branch_pc;
      ev.merge_pc = r.entry.entry.merge_pc;
      ev.distance = r.entry.predicted_distance;
      ev.age = r.age;
      ev.new_distance = r.entry.entry.merge_distance;
      ev.verdict = r.verdict;
      log(ev);
      if (!is_correct(r.verdict)) {
        ++stats_.mp_flushes;
        stats_.mp_penalty_cycles += cfg_.pipeline.flush_refill_penalty;
      }
    }
  }

  // Update-list entries live at most max_distance retirements past their owner.
  void trim_retired_branches(std::uint64_t newest) {
    const std::uint64_t keep = cfg_.merge.max_distance + 2;
    while (!retired_branches_.empty() && retired_branches_.front().second + keep < newest)
      retired_branches_.pop_front();
  }

  void advance() {
    const bool can_fetch = rob_.size() < cfg_.pipeline.rob_size && !path_exhausted();
    if (can_fetch && now_ + 1 >= stall_until_) {
      ++now_;
      return;
    }
    std::uint64_t next = std::numeric_limits<std::uint64_t>::max();
    if (!rob_.empty()) next = std::min(next, rob_.front().complete_cycle);
    if (!pending_.empty()) next = std::min(next, pending_.top().first);
    if (can_fetch) next = std::min(next, stall_until_);
    now_ = std::max(now_ + 1, next == std::numeric_limits<std::uint64_t>::max() ? now_ + 1 : next);
  }

  const ProgramModel& model_;
  const RunConfig& cfg_;
  TageLite tage_;
  JrsTable jrs_;
  LatencyTable latency_;
  std::optional<MergePredictor> merge_;
  WalkerState walker_;
  std::mt19937_64 correct_rng_;
  std::mt19937_64 wrong_rng_;

  std::uint64_t now_ = 0;
  std::uint64_t stall_until_ = 0;
  std::uint64_t next_fetch_id_ = 1;
  std::uint64_t arch_fetched_ = 0;
  bool arch_done_ = false;

  std::uint64_t ghist_ = 0;
  RegReady reg_ready_{};
  bool diverged_ = false;
  PathCursor wp_cursor_;
  std::uint64_t ghist_ckpt_ = 0;
  RegReady reg_ckpt_{};

  std::deque<RobEntry> rob_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
  std::deque<Pending> retired_branches_; // (fetch id, arch index)

  SimStats stats_;
  SimResult result_;
};

} // namespace

SimResult run(const ProgramModel& model, const RunConfig& cfg) {
  cfg.validate();
  const ValidationReport report = validate_model(model);
  if (!report.empty()) throw ModelError("model invalid: " + report.front().where + ": " + report.front().message);
  Simulator sim(model, cfg);
  return sim.run();
}

} // namespace reconverge
