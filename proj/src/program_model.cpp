#include "reconverge/program_model.hpp"

#include <set>
#include <sstream>

namespace reconverge {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string block_where(std::size_t b) { return "blocks[" + std::to_string(b) + "]"; }

} // namespace

const char* to_string(InstrClass cls) {
  switch (cls) {
  case InstrClass::Alu: return "alu";
  case InstrClass::Load: return "load";
  case InstrClass::Store: return "store";
  case InstrClass::Branch: return "branch";
  case InstrClass::Nop: return "nop";
  }
  return "?";
}

bool static_bias_direction(const OutcomeSource& src) {
  return std::visit(overloaded{
                        [](const Bernoulli& b) { return b.bias > 0.5; },
                        [](const Pattern& p) {
                          std::size_t ones = 0;
                          for (bool bit : p.bits) ones += bit ? 1 : 0;
                          return ones * 2 > p.bits.size();
                        },
                        [](const AlwaysTaken&) { return true; },
                        [](const AlwaysNotTaken&) { return false; },
                    },
                    src);
}

void ProgramModel::finalize() {
  locations_.clear();
  Pc pc = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].instrs.size(); ++i) {
      blocks[b].instrs[i].pc = pc++;
      locations_.push_back({static_cast<BlockId>(b), static_cast<std::uint32_t>(i)});
    }
  }
}

const InstrTemplate& ProgramModel::instr(Pc pc) const {
  const Location& loc = location(pc);
  return blocks[loc.block].instrs[loc.index];
}

std::vector<std::pair<Pc, BlockId>> ProgramModel::branch_sites() const {
  std::vector<std::pair<Pc, BlockId>> out;
  for (const auto& b : blocks)
    if (std::holds_alternative<CondBranch>(b.term) && !b.instrs.empty())
      out.emplace_back(b.instrs.back().pc, b.id);
  return out;
}

std::optional<CondBranch> ProgramModel::cond_at(Pc pc) const {
  if (!has_pc(pc)) return std::nullopt;
  const Location& loc = location(pc);
  const BasicBlock& b = blocks[loc.block];
  const auto* cb = std::get_if<CondBranch>(&b.term);
  if (cb == nullptr || loc.index + 1 != b.instrs.size()) return std::nullopt;
  return *cb;
}

std::vector<BlockId> successors(const ProgramModel& model, const BasicBlock& block) {
  return std::visit(overloaded{
                        [&](const Fallthrough&) { return std::vector<BlockId>{block.id + 1}; },
                        [](const CondBranch& c) { return std::vector<BlockId>{c.taken, c.not_taken}; },
                        [](const Jump& j) { return std::vector<BlockId>{j.target}; },
                        [](const Halt&) { return std::vector<BlockId>{}; },
                    },
                    block.term);
  (void)model;
}

ValidationReport validate_model(const ProgramModel& model) {
  ValidationReport report;
  auto fail = [&](std::string where, std::string msg) { report.push_back({std::move(where), std::move(msg)}); };

  if (model.arch_reg_count == 0 || model.arch_reg_count > kMaxArchRegs)
    fail("arch_reg_count", "must be in [1, 64]");
  if (model.blocks.empty()) {
    fail("blocks", "model has no blocks");
    return report;
  }
  if (model.entry >= model.blocks.size()) fail("entry", "entry block " + std::to_string(model.entry) + " does not exist");

  const RegSet regs_ok = RegSet::all(model.arch_reg_count);
  std::set<Pc> seen_pcs;
  std::set<SiteId> used_sites;
  std::optional<Pc> prev_pc;

  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const BasicBlock& blk = model.blocks[b];
    const std::string where = block_where(b);
    if (blk.id != b) fail(where + ".id", "block id " + std::to_string(blk.id) + " does not match its position");
    if (blk.instrs.empty()) fail(where, "block has no instructions");

    for (std::size_t i = 0; i < blk.instrs.size(); ++i) {
      const InstrTemplate& ins = blk.instrs[i];
      const std::string iw = where + ".instrs[" + std::to_string(i) + "]";
      if (!seen_pcs.insert(ins.pc).second) fail(iw, "duplicate pc " + std::to_string(ins.pc));
      if (prev_pc && ins.pc != *prev_pc + 1) fail(iw, "pc not dense in declaration order");
      prev_pc = ins.pc;
      if (!ins.dests.subset_of(regs_ok) || !ins.srcs.subset_of(regs_ok)) fail(iw, "register id >= arch_reg_count");
      const bool last = i + 1 == blk.instrs.size();
      const bool is_cond = std::holds_alternative<CondBranch>(blk.term);
      if (ins.cls == InstrClass::Branch && !(last && is_cond))
        fail(iw, "branch instruction is not the terminator of a conditional block");
      if (last && is_cond && ins.cls != InstrClass::Branch)
        fail(iw, "conditional block must end with a branch instruction");
      if (const auto* lm = std::get_if<LoadMissLatency>(&ins.latency)) {
        if (!(lm->miss_prob >= 0.0 && lm->miss_prob <= 1.0)) fail(iw, "miss probability outside [0,1]");
      }
    }

    std::visit(overloaded{
                   [&](const Fallthrough&) {
                     if (b + 1 >= model.blocks.size()) fail(where + ".term", "fallthrough past the last block");
                   },
                   [&](const CondBranch& c) {
                     if (c.taken >= model.blocks.size())
                       fail(where + ".term.taken", "successor " + std::to_string(c.taken) + " does not exist");
                     if (c.not_taken >= model.blocks.size())
                       fail(where + ".term.not_taken", "successor " + std::to_string(c.not_taken) + " does not exist");
                     if (!model.sources.contains(c.site))
                       fail(where + ".term.source", "no outcome source for site " + std::to_string(c.site));
                     if (!used_sites.insert(c.site).second)
                       fail(where + ".term.source", "site " + std::to_string(c.site) + " used by two branches");
                   },
                   [&](const Jump& j) {
                     if (j.target >= model.blocks.size())
                       fail(where + ".term.target", "successor " + std::to_string(j.target) + " does not exist");
                   },
                   [](const Halt&) {},
               },
               blk.term);
  }

  for (const auto& [site, src] : model.sources) {
    const std::string where = "sources[" + std::to_string(site) + "]";
    if (const auto* bern = std::get_if<Bernoulli>(&src)) {
      if (!(bern->bias >= 0.0 && bern->bias <= 1.0)) fail(where, "bias outside [0,1]");
    } else if (const auto* pat = std::get_if<Pattern>(&src)) {
      if (pat->bits.empty()) fail(where, "empty pattern");
    }
  }
  return report;
}

std::optional<DynInstr> step_path(const ProgramModel& model, PathCursor& cursor, std::uint64_t seq_no,
                                  const DirectionFn& direction) {
  if (cursor.ended) return std::nullopt;
  if (cursor.at.block >= model.blocks.size()) throw ModelError("walk reached invalid block " + std::to_string(cursor.at.block));
  const BasicBlock& blk = model.blocks[cursor.at.block];
  if (cursor.at.index >= blk.instrs.size()) throw ModelError("walk reached an empty block " + std::to_string(blk.id));

  const InstrTemplate& ins = blk.instrs[cursor.at.index];
  DynInstr out{ins.pc, ins.cls, ins.dests, ins.srcs, seq_no, std::nullopt};

  if (cursor.at.index + 1 < blk.instrs.size()) {
    ++cursor.at.index;
    return out;
  }

  auto go = [&](BlockId next) {
    if (next >= model.blocks.size() || model.blocks[next].instrs.empty())
      throw ModelError("block " + std::to_string(blk.id) + " has invalid successor " + std::to_string(next));
    cursor.at = {next, 0};
  };
  std::visit(overloaded{
                 [&](const Fallthrough&) { go(blk.id + 1); },
                 [&](const CondBranch& c) {
                   const bool taken = direction(ins.pc, c.site);
                   const BlockId next = taken ? c.taken : c.not_taken;
                   go(next);
                   out.branch = BranchInfo{taken, model.blocks[next].instrs[0].pc};
                 },
                 [&](const Jump& j) { go(j.target); },
                 [&](const Halt&) { cursor.ended = true; },
             },
             blk.term);
  return out;
}

SourceCursor::SourceCursor(const OutcomeSource& src, std::uint64_t master_seed, SiteId site) : source_(src) {
  std::uint64_t salt = 0;
  if (const auto* b = std::get_if<Bernoulli>(&src)) salt = b->seed;
  const std::uint64_t s = master_seed ^ site;
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32), static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  rng_.seed(seq);
}

bool SourceCursor::next() {
  return std::visit(overloaded{
                        [&](const Bernoulli& b) {
                          const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
                          return u < b.bias;
                        },
                        [&](const Pattern& p) {
                          const bool bit = p.bits[pos_];
                          pos_ = (pos_ + 1) % p.bits.size();
                          return bit;
                        },
                        [](const AlwaysTaken&) { return true; },
                        [](const AlwaysNotTaken&) { return false; },
                    },
                    source_);
}

WalkerState make_walker(const ProgramModel& model, std::uint64_t master_seed) {
  WalkerState st;
  st.cursor.at = {model.entry, 0};
  for (const auto& [site, src] : model.sources) st.sources.emplace(site, SourceCursor(src, master_seed, site));
  return st;
}

std::optional<DynInstr> step_architectural(const ProgramModel& model, WalkerState& state) {
  auto dir = [&](Pc, SiteId site) {
    auto it = state.sources.find(site);
    if (it == state.sources.end()) throw ModelError("no outcome source for site " + std::to_string(site));
    return it->second.next();
  };
  auto out = step_path(model, state.cursor, state.seq, dir);
  if (out) ++state.seq;
  return out;
}

std::vector<DynInstr> step_wrong_path(const ProgramModel& model, Pc branch_pc, bool forced_dir,
                                      const FollowPolicy& policy, std::size_t max_len, std::uint64_t first_seq) {
  const auto cb = model.cond_at(branch_pc);
  if (!cb) throw ModelError("pc " + std::to_string(branch_pc) + " is not a conditional branch site");
  const BlockId start = forced_dir ? cb->taken : cb->not_taken;
  if (start >= model.blocks.size()) throw ModelError("branch successor " + std::to_string(start) + " does not exist");

  DirectionFn dir;
  if (policy.kind == FollowKind::StaticBias) {
    dir = [&](Pc, SiteId site) { return static_bias_direction(model.sources.at(site)); };
  } else {
    dir = policy.direction;
  }

  std::vector<DynInstr> out;
  PathCursor cursor{{start, 0}, false};
  std::uint64_t seq = first_seq;
  while (out.size() < max_len) {
    auto d = step_path(model, cursor, seq++, dir);
    if (!d) break;
    out.push_back(*d);
  }
  return out;
}

} // namespace reconverge
