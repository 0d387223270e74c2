#include "reconverge/merge_pred.hpp"

#include <algorithm>
#include <stdexcept>

namespace reconverge {

const char* to_string(UpdatePolicy p) { return p == UpdatePolicy::Plain ? "plain" : "update_max"; }

const char* to_string(Verdict v) {
  switch (v) {
  case Verdict::Correct: return "correct";
  case Verdict::WrongDistance: return "wrong_distance";
  case Verdict::LoopBack: return "loop_back";
  case Verdict::UnexpectedWrite: return "unexpected_write";
  }
  return "?";
}

void MergeConfig::validate() const {
  auto geometry_ok = [](unsigned entries, unsigned ways) {
    return entries > 0 && ways > 0 && entries % ways == 0 && std::has_single_bit(entries / ways);
  };
  if (!geometry_ok(table_entries, table_ways)) throw std::invalid_argument("merge table geometry invalid");
  if (!wpb_fully_associative && !geometry_ok(wpb_entries, wpb_ways)) throw std::invalid_argument("wpb geometry invalid");
  if (max_distance == 0) throw std::invalid_argument("max distance must be positive");
  if (ul_capacity == 0) throw std::invalid_argument("update list capacity must be positive");
  if (wpb_contexts == 0) throw std::invalid_argument("need at least one wpb context");
  if (initial_ctr > kMergeCtrMax) throw std::invalid_argument("initial counter above 7");
  if (arch_reg_count == 0 || arch_reg_count > kMaxArchRegs) throw std::invalid_argument("arch_reg_count out of range");
}

// ---------------------------------------------------------------------------
// Predictor table

PredictorTable::PredictorTable(const MergeConfig& cfg)
    : sets_(cfg.table_entries / cfg.table_ways), ways_(cfg.table_ways), slots_(cfg.table_entries) {}

std::uint32_t PredictorTable::set_index(Pc branch_pc) const {
  return static_cast<std::uint32_t>(mix64(branch_pc) & (sets_ - 1));
}

std::optional<TableLookup> PredictorTable::predict(Pc pc) const {
  const std::uint32_t set = set_index(pc);
  TableLookup out;
  for (std::uint32_t w = 0; w < ways_; ++w) {
    const MergeEntry& e = slots_[set * ways_ + w];
    if (e.valid && e.branch_pc == pc) out.matches.push_back({e, {set, w}});
  }
  if (out.matches.empty()) return std::nullopt;

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.matches.size(); ++i) {
    const MergeEntry& a = out.matches[i].entry;
    const MergeEntry& b = out.matches[best].entry;
    if (a.ctr > b.ctr || (a.ctr == b.ctr && a.merge_distance < b.merge_distance)) best = i;
  }
  const MergeEntry& sel = out.matches[best].entry;
  out.selected = best;
  out.prediction = {sel.merge_pc, sel.merge_distance, sel.indep_regs};
  return out;
}

std::optional<SlotRef> PredictorTable::find(Pc branch_pc, Pc merge_pc) const {
  const std::uint32_t set = set_index(branch_pc);
  for (std::uint32_t w = 0; w < ways_; ++w) {
    const MergeEntry& e = slots_[set * ways_ + w];
    if (e.valid && e.branch_pc == branch_pc && e.merge_pc == merge_pc) return SlotRef{set, w};
  }
  return std::nullopt;
}

InstallResult PredictorTable::install(const MergeEntry& fresh) {
  InstallResult res;
  if (auto existing = find(fresh.branch_pc, fresh.merge_pc)) {
    MergeEntry& e = at(*existing);
    e.merge_distance = std::max(e.merge_distance, fresh.merge_distance);
    e.indep_regs &= fresh.indep_regs;
    e.lru_stamp = ++clock_;
    res.slot = *existing;
    res.refreshed = true;
    return res;
  }

  const std::uint32_t set = set_index(fresh.branch_pc);
  std::optional<std::uint32_t> way;
  for (std::uint32_t w = 0; w < ways_ && !way; ++w)
    if (!slots_[set * ways_ + w].valid) way = w;
  if (!way) {
    std::uint32_t victim = 0;
    for (std::uint32_t w = 1; w < ways_; ++w) {
      const MergeEntry& a = slots_[set * ways_ + w];
      const MergeEntry& b = slots_[set * ways_ + victim];
      if (a.ctr < b.ctr || (a.ctr == b.ctr && a.merge_distance > b.merge_distance)) victim = w;
    }
    way = victim;
    res.evicted = true;
    res.victim = slots_[set * ways_ + victim];
  }
  MergeEntry& e = slots_[set * ways_ + *way];
  e = fresh;
  e.valid = true;
  e.lru_stamp = ++clock_;
  res.slot = {set, *way};
  return res;
}

std::size_t PredictorTable::valid_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const MergeEntry& e) { return e.valid; }));
}

// ---------------------------------------------------------------------------
// Wrong path buffer

WpbStore::WpbStore(unsigned entries, unsigned ways) : sets_(entries / ways), ways_(ways), slots_(entries) {}

const WpbSlot* WpbStore::lookup(Pc pc) const {
  const std::size_t set = sets_ == 1 ? 0 : static_cast<std::size_t>(mix64(pc) & (sets_ - 1));
  for (std::size_t w = 0; w < ways_; ++w) {
    const WpbSlot& s = slots_[set * ways_ + w];
    if (s.valid && s.pc == pc) return &s;
  }
  return nullptr;
}

bool WpbStore::insert(Pc pc, std::uint32_t distance, RegSet regs, RegSet prior_regs) {
  const std::size_t set = sets_ == 1 ? 0 : static_cast<std::size_t>(mix64(pc) & (sets_ - 1));
  WpbSlot* victim = nullptr;
  for (std::size_t w = 0; w < ways_; ++w) {
    WpbSlot& s = slots_[set * ways_ + w];
    if (s.valid && s.pc == pc) return false;
    if (!s.valid) {
      if (victim == nullptr || victim->valid) victim = &s;
    } else if (victim == nullptr || (victim->valid && s.lru < victim->lru)) {
      victim = &s;
    }
  }
  if (victim->valid) ++evictions_;
  *victim = WpbSlot{pc, distance, regs, prior_regs, ++clock_, true};
  return true;
}

std::size_t WpbStore::valid_count() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const WpbSlot& s) { return s.valid; }));
}

WpbContext::WpbContext(const MergeConfig& cfg)
    : store(cfg.wpb_entries, cfg.wpb_fully_associative ? cfg.wpb_entries : cfg.wpb_ways), shadow_enabled(cfg.cam_compare) {}

WpbContext wpb_fill(Pc branch_pc, std::span<const DynInstr> rob_tail, const MergeConfig& cfg) {
  WpbContext ctx(cfg);
  ctx.tag = branch_pc;
  RegSet acc;
  std::uint32_t distance = 0;
  for (const DynInstr& d : rob_tail) {
    if (d.pc == branch_pc) break;              // loop back to the branch
    if (distance >= cfg.max_distance) break;   // maximum merge distance
    ++distance;
    const RegSet prior = acc;
    acc |= d.dests;
    ++ctx.fill_attempts;
    ctx.store.insert(d.pc, distance, acc, prior);
    if (ctx.shadow_enabled) ctx.shadow.insert(d.pc);
  }
  ctx.valid = true;
  return ctx;
}

ProbeResult wpb_probe(WpbContext& ctx, const DynInstr& retired, const MergeConfig& cfg) {
  ProbeResult res;
  if (!ctx.valid) {
    res.kind = ProbeKind::Exhausted;
    return res;
  }
  ++ctx.cp_distance;
  if (ctx.cp_distance > cfg.max_distance || retired.pc == ctx.tag) {
    ctx.valid = false;
    res.kind = ProbeKind::Exhausted;
    return res;
  }
  if (const WpbSlot* hit = ctx.store.lookup(retired.pc)) {
    MergeEntry e;
    e.branch_pc = ctx.tag;
    e.merge_pc = retired.pc;
    e.merge_distance = std::max(hit->wp_distance, ctx.cp_distance);
    e.indep_regs = (hit->wp_prior_regs | ctx.cp_regs).complement(cfg.arch_reg_count);
    e.ctr = cfg.initial_ctr;
    e.valid = true;
    ctx.valid = false;
    res.kind = ProbeKind::Hit;
    res.found = e;
    return res;
  }
  if (ctx.shadow_enabled && !ctx.false_negative && ctx.shadow.contains(retired.pc)) ctx.false_negative = true;
  ctx.cp_regs |= retired.dests;
  return res;
}

// ---------------------------------------------------------------------------
// Update list

UpdateList::UpdateList(unsigned capacity, unsigned max_distance, UpdatePolicy policy)
    : capacity_(capacity), max_distance_(max_distance), policy_(policy) {}

bool UpdateList::insert(const UpdateListEntry& e) {
  if (entries_.size() >= capacity_) return false;
  entries_.push_back(e);
  return true;
}

std::size_t UpdateList::insert(const TableLookup& lookup, Pc branch_pc, std::uint64_t owner) {
  auto make = [&](std::size_t i) {
    UpdateListEntry e;
    e.branch_pc = branch_pc;
    e.entry = lookup.matches[i].entry;
    e.slot = lookup.matches[i].slot;
    e.owner = owner;
    e.selected = i == lookup.selected;
    e.predicted_distance = e.entry.merge_distance;
    return e;
  };
  std::size_t inserted = 0;
  if (!insert(make(lookup.selected))) return 0;
  ++inserted;
  for (std::size_t i = 0; i < lookup.matches.size(); ++i) {
    if (i == lookup.selected) continue;
    if (!insert(make(i))) break;
    ++inserted;
  }
  return inserted;
}

void UpdateList::activate(std::uint64_t owner) {
  for (auto& e : entries_)
    if (e.owner == owner) e.active = true;
}

void UpdateList::discard_younger(std::uint64_t owner) {
  std::erase_if(entries_, [owner](const UpdateListEntry& e) { return e.owner > owner; });
}

std::vector<Resolution> UpdateList::on_retire(const DynInstr& retired) {
  std::vector<Resolution> out;
  for (auto it = entries_.begin(); it != entries_.end();) {
    UpdateListEntry& e = *it;
    if (!e.active) {
      ++it;
      continue;
    }
    ++e.age;
    const std::uint32_t limit = policy_ == UpdatePolicy::UpdateMax ? max_distance_ : e.entry.merge_distance;
    std::optional<Verdict> v;
    if (e.age > limit) {
      v = Verdict::WrongDistance;
    } else if (retired.pc == e.entry.merge_pc) {
      v = Verdict::Correct;
    } else if (retired.pc == e.branch_pc) {
      v = Verdict::LoopBack;
    } else if (retired.dests.intersects(e.entry.indep_regs)) {
      v = Verdict::UnexpectedWrite;
    }
    if (!v) {
      e.observed_regs |= retired.dests;
      ++it;
      continue;
    }
    if (*v == Verdict::Correct) {
      e.entry.ctr = sat_inc<std::uint8_t>(e.entry.ctr, kMergeCtrMax);
      if (policy_ == UpdatePolicy::UpdateMax) e.entry.merge_distance = std::max(e.entry.merge_distance, e.age);
    } else {
      e.entry.ctr = sat_dec<std::uint8_t>(e.entry.ctr, 0);
    }
    out.push_back({e, *v, e.age});
    it = entries_.erase(it);
  }
  return out;
}

void writeback(PredictorTable& table, const Resolution& res, UpdatePolicy policy) {
  const MergeEntry& copy = res.entry.entry;
  auto apply = [&](MergeEntry& live) {
    live.ctr = is_correct(res.verdict) ? sat_inc<std::uint8_t>(live.ctr, kMergeCtrMax) : sat_dec<std::uint8_t>(live.ctr, 0);
    if (policy == UpdatePolicy::UpdateMax && is_correct(res.verdict))
      live.merge_distance = std::max(live.merge_distance, copy.merge_distance);
  };
  MergeEntry& slot = table.at(res.entry.slot);
  if (slot.valid && slot.branch_pc == copy.branch_pc && slot.merge_pc == copy.merge_pc) {
    apply(slot);
    return;
  }
  if (auto moved = table.find(copy.branch_pc, copy.merge_pc)) {
    apply(table.at(*moved));
    return;
  }
  table.install(copy);
}

// ---------------------------------------------------------------------------
// Facade

MergePredictor::MergePredictor(MergeConfig cfg)
    : cfg_((cfg.validate(), cfg)), table_(cfg_), ul_(cfg_.ul_capacity, cfg_.max_distance, cfg_.policy) {
  contexts_.reserve(cfg_.wpb_contexts);
}

MpQuery MergePredictor::query(Pc branch_pc, std::uint64_t owner) {
  ++stats_.lookups;
  MpQuery q;
  auto hit = table_.predict(branch_pc);
  if (!hit) {
    ++stats_.table_misses;
    q.status = MpStatus::Miss;
    return q;
  }
  const std::size_t inserted = ul_.insert(*hit, branch_pc, owner);
  stats_.ul_inserts += inserted;
  stats_.ul_drops += hit->matches.size() - inserted;
  if (inserted == 0) {
    q.status = MpStatus::Dropped;
    return q;
  }
  q.status = MpStatus::Predicted;
  q.prediction = hit->prediction;
  return q;
}

void MergePredictor::on_mispredict(Pc branch_pc, std::uint64_t owner, std::span<const DynInstr> rob_tail) {
  WpbContext ctx = wpb_fill(branch_pc, rob_tail, cfg_);
  ctx.owner = owner;
  ++stats_.wpb_fills;
  if (contexts_.size() < cfg_.wpb_contexts) {
    contexts_.push_back(std::move(ctx));
    return;
  }
  for (auto& c : contexts_) {
    if (!c.valid) {
      if (c.false_negative) ++stats_.false_negatives;
      c = std::move(ctx);
      return;
    }
  }
  WpbContext& old = contexts_[next_context_];
  if (old.false_negative) ++stats_.false_negatives;
  old = std::move(ctx);
  next_context_ = (next_context_ + 1) % contexts_.size();
}

RetireOutcome MergePredictor::on_retire(const DynInstr& retired, std::uint64_t fetch_id) {
  RetireOutcome out;
  for (auto& ctx : contexts_) {
    if (!ctx.valid || !ctx.armed) continue;
    ProbeResult r = wpb_probe(ctx, retired, cfg_);
    if (r.kind == ProbeKind::Hit) {
      ++stats_.detections;
      const InstallResult ir = table_.install(r.found);
      if (ir.refreshed) {
        ++stats_.refreshes;
      } else {
        ++stats_.installs;
        if (ir.evicted) ++stats_.evictions;
      }
      out.detections.push_back(r.found);
    } else if (r.kind == ProbeKind::Exhausted) {
      ++stats_.wpb_exhausted;
    }
    if (r.kind != ProbeKind::Continue && ctx.false_negative) {
      ++stats_.false_negatives;
      ctx.false_negative = false;
    }
  }

  out.resolutions = ul_.on_retire(retired);
  for (const Resolution& r : out.resolutions) {
    writeback(table_, r, cfg_.policy);
    ++stats_.resolutions;
  }

  ul_.activate(fetch_id);
  for (auto& ctx : contexts_)
    if (ctx.valid && ctx.owner == fetch_id) ctx.armed = true;
  return out;
}

} // namespace reconverge
