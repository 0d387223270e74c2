#include "reconverge/oracle.hpp"

#include <algorithm>

namespace reconverge {

bool OracleMerge::in_merge_set(Pc pc, std::uint32_t position) const {
  return std::find(merge_set.begin(), merge_set.end(), std::pair{pc, position}) != merge_set.end();
}

namespace {

void instr_successors(const ProgramModel& model, Pc pc, std::vector<Pc>& out) {
  out.clear();
  const Location loc = model.location(pc);
  const BasicBlock& blk = model.block(loc.block);
  if (loc.index + 1 < blk.instrs.size()) {
    out.push_back(pc + 1);
    return;
  }
  for (BlockId s : successors(model, blk)) out.push_back(model.first_pc(s));
}

CondBranch require_cond(const ProgramModel& model, Pc branch_pc) {
  auto cb = model.cond_at(branch_pc);
  if (!cb) throw ModelError("pc " + std::to_string(branch_pc) + " is not a conditional branch");
  return *cb;
}

// Scans the continuation against a reachability function.
template <typename DepthFn, typename RegsFn>
OracleMerge scan(Pc branch_pc, bool actual_dir, std::span<const Pc> continuation, unsigned max,
                 const ProgramModel& model, DepthFn depth_of, RegsFn regs_of) {
  OracleMerge o;
  o.branch_pc = branch_pc;
  o.actual_dir = actual_dir;
  RegSet written;
  const std::size_t n = std::min<std::size_t>(continuation.size(), max);
  for (std::size_t k = 0; k < n; ++k) {
    const Pc pc = continuation[k];
    if (pc == branch_pc) {
      if (!o.merge_pc) o.loop_back = true;
      break;
    }
    const std::uint32_t d = depth_of(pc);
    if (d != 0) {
      const auto pos = static_cast<std::uint32_t>(k + 1);
      o.merge_set.emplace_back(pc, pos);
      if (!o.merge_pc) {
        o.merge_pc = pc;
        o.distance = pos;
        o.alt_distance = d;
        o.cp_regs = written;
        const auto [lo, hi] = regs_of(pc);
        o.alt_regs_min = lo;
        o.alt_regs_max = hi;
      }
    }
    written |= model.instr(pc).dests;
  }
  return o;
}

} // namespace

AltReach alt_reach(const ProgramModel& model, Pc branch_pc, bool start_dir, unsigned max_distance) {
  const CondBranch cb = require_cond(model, branch_pc);
  const std::size_t n = model.instr_count();
  AltReach r;
  r.depth.assign(n, 0);
  r.regs_min.assign(n, RegSet{});
  r.regs_max.assign(n, RegSet{});
  if (max_distance == 0) return r;

  std::vector<Pc> frontier{model.first_pc(start_dir ? cb.taken : cb.not_taken)};
  r.depth[frontier[0]] = 1;
  std::vector<Pc> next, succ;
  for (std::uint32_t d = 1; d < max_distance && !frontier.empty(); ++d) {
    next.clear();
    for (Pc p : frontier) {
      if (p == branch_pc) continue;
      const RegSet w = model.instr(p).dests;
      instr_successors(model, p, succ);
      for (Pc s : succ) {
        if (r.depth[s] == 0) {
          r.depth[s] = d + 1;
          r.regs_min[s] = r.regs_min[p] | w;
          r.regs_max[s] = r.regs_max[p] | w;
          next.push_back(s);
        } else if (r.depth[s] == d + 1) {
          r.regs_min[s] &= r.regs_min[p] | w;
          r.regs_max[s] |= r.regs_max[p] | w;
        }
      }
    }
    frontier.swap(next);
  }
  return r;
}

MergeOracle::MergeOracle(const ProgramModel& model, unsigned max_distance) : model_(model), max_(max_distance) {}

OracleMerge MergeOracle::merge(Pc branch_pc, bool actual_dir, std::span<const Pc> continuation) {
  const auto key = std::pair{branch_pc, !actual_dir};
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, alt_reach(model_, branch_pc, !actual_dir, max_)).first;
  const AltReach& r = it->second;
  return scan(
      branch_pc, actual_dir, continuation, max_, model_, [&](Pc pc) { return r.depth[pc]; },
      [&](Pc pc) { return std::pair{r.regs_min[pc], r.regs_max[pc]}; });
}

OracleMerge oracle_merge(const ProgramModel& model, Pc branch_pc, bool actual_dir, std::span<const Pc> continuation,
                         unsigned max_distance) {
  MergeOracle o(model, max_distance);
  return o.merge(branch_pc, actual_dir, continuation);
}

OracleMerge oracle_merge_directed(const ProgramModel& model, Pc branch_pc, bool actual_dir,
                                  std::span<const Pc> continuation, const FollowPolicy& policy, unsigned max_distance) {
  const std::vector<DynInstr> walk = step_wrong_path(model, branch_pc, !actual_dir, policy, max_distance);
  std::vector<std::uint32_t> depth(model.instr_count(), 0);
  std::vector<RegSet> before(model.instr_count());
  RegSet written;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    if (depth[walk[i].pc] == 0) {
      depth[walk[i].pc] = static_cast<std::uint32_t>(i + 1);
      before[walk[i].pc] = written;
    }
    if (walk[i].pc == branch_pc) break;
    written |= walk[i].dests;
  }
  return scan(
      branch_pc, actual_dir, continuation, max_distance, model, [&](Pc pc) { return depth[pc]; },
      [&](Pc pc) { return std::pair{before[pc], before[pc]}; });
}

std::vector<Pc> static_continuation(const ProgramModel& model, Pc branch_pc, bool dir, unsigned max_distance) {
  std::vector<Pc> out;
  for (const DynInstr& d : step_wrong_path(model, branch_pc, dir, FollowPolicy::static_bias(), max_distance)) {
    if (d.pc == branch_pc) break;
    out.push_back(d.pc);
  }
  return out;
}

std::optional<Pc> static_postdominator(const ProgramModel& model, Pc branch_pc) {
  if (!model.has_pc(branch_pc)) throw ModelError("pc " + std::to_string(branch_pc) + " does not exist");
  const std::size_t n = model.blocks.size();
  const std::size_t exit = n; // virtual exit node
  using Bits = std::vector<char>;
  std::vector<Bits> pdom(n + 1, Bits(n + 1, 1));
  pdom[exit] = Bits(n + 1, 0);
  pdom[exit][exit] = 1;

  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (BlockId s : successors(model, model.blocks[b])) succ[b].push_back(s);
    if (std::holds_alternative<Halt>(model.blocks[b].term)) succ[b].push_back(exit);
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = n; b-- > 0;) {
      Bits next(n + 1, 1);
      if (succ[b].empty()) next.assign(n + 1, 0);
      for (std::size_t s : succ[b])
        for (std::size_t i = 0; i <= n; ++i) next[i] = static_cast<char>(next[i] && pdom[s][i]);
      next[b] = 1;
      if (next != pdom[b]) {
        pdom[b] = std::move(next);
        changed = true;
      }
    }
  }

  const std::size_t blk = model.location(branch_pc).block;
  // The immediate postdominator is the strict postdominator with the most postdominators of its own.
  std::optional<std::size_t> best;
  std::size_t best_size = 0;
  for (std::size_t d = 0; d <= n; ++d) {
    if (d == blk || !pdom[blk][d]) continue;
    const auto size = static_cast<std::size_t>(std::count(pdom[d].begin(), pdom[d].end(), 1));
    if (!best || size > best_size) {
      best = d;
      best_size = size;
    }
  }
  if (!best || *best == exit) return std::nullopt;
  return model.first_pc(static_cast<BlockId>(*best));
}

ArchTrace replay_architectural(const ProgramModel& model, std::uint64_t seed, std::uint64_t count) {
  ArchTrace t;
  WalkerState w = make_walker(model, seed);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto d = step_architectural(model, w);
    if (!d) break;
    t.pcs.push_back(d->pc);
    t.taken.push_back(d->branch ? static_cast<std::int8_t>(d->branch->taken) : std::int8_t{-1});
  }
  return t;
}

} // namespace reconverge
