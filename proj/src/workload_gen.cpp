#include "reconverge/workload_gen.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <random>

#include "json.hpp"
#include "reconverge/json_util.hpp"

namespace reconverge {

using ojson = nlohmann::ordered_json;

const char* to_string(Shape s) {
  switch (s) {
  case Shape::Hammock: return "hammock";
  case Shape::NestedDiamond: return "nested";
  case Shape::LoopWithExit: return "loop";
  case Shape::RandomReducible: return "random";
  }
  return "?";
}

Shape parse_shape(const std::string& s) {
  if (s == "hammock") return Shape::Hammock;
  if (s == "nested") return Shape::NestedDiamond;
  if (s == "loop") return Shape::LoopWithExit;
  if (s == "random") return Shape::RandomReducible;
  throw ParseError("shape", "unknown shape '" + s + "' (expected hammock, nested, loop or random)");
}

void GenParams::validate() const {
  if (block_min < 1 || block_max < block_min) throw std::invalid_argument("block size range must satisfy 1 <= min <= max");
  for (double b : branch_bias)
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("branch biases must lie in [0, 1]");
  if (!(reg_pressure >= 0.0 && reg_pressure <= 1.0)) throw std::invalid_argument("reg_pressure must lie in [0, 1]");
  if (arch_reg_count < 1 || arch_reg_count > kMaxArchRegs) throw std::invalid_argument("arch_reg_count must be in [1, 64]");
  if (trip_count < 1) throw std::invalid_argument("trip_count must be at least 1");
  if (max_distance < 1) throw std::invalid_argument("max_distance must be at least 1");
}

namespace {

class Builder {
public:
  explicit Builder(const GenParams& p) : p_(p) {
    std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32), 0x9e11u};
    rng_.seed(seq);
    model.arch_reg_count = p.arch_reg_count;
    reg_limit_ = p.arch_reg_count;
  }

  ProgramModel model;
  std::vector<std::pair<BlockId, BlockId>> postdoms;

  void limit_regs(unsigned n) { reg_limit_ = std::min(n, p_.arch_reg_count); }
  void enable_loads(bool on) { loads_ = on; }

  BlockId block(bool cond) {
    const auto id = static_cast<BlockId>(model.blocks.size());
    BasicBlock b;
    b.id = id;
    const unsigned n = uniform(p_.block_min, p_.block_max);
    const unsigned body = cond ? n - 1 : n;
    bool wrote = false;
    for (unsigned i = 0; i < body; ++i) {
      InstrTemplate ins;
      ins.cls = InstrClass::Alu;
      if (coin(p_.reg_pressure) || (!wrote && i + 1 == body && p_.reg_pressure > 0.0)) {
        ins.dests.insert(reg());
        wrote = true;
      }
      ins.srcs.insert(reg());
      if (coin(0.5)) ins.srcs.insert(reg());
      if (loads_ && coin(0.1)) {
        ins.cls = InstrClass::Load;
        ins.latency = LoadMissLatency{0.1, 3, 0};
      }
      b.instrs.push_back(ins);
    }
    if (cond) {
      InstrTemplate br;
      br.cls = InstrClass::Branch;
      br.srcs.insert(reg());
      b.instrs.push_back(br);
    }
    b.term = Halt{};
    model.blocks.push_back(std::move(b));
    return id;
  }

  void cond(BlockId b, BlockId taken, BlockId not_taken, OutcomeSource src) {
    const SiteId site = next_site_++;
    model.blocks[b].term = CondBranch{taken, not_taken, site};
    model.sources.emplace(site, std::move(src));
  }

  void go(BlockId from, BlockId to) {
    if (to == from + 1) {
      model.blocks[from].term = Fallthrough{};
    } else {
      model.blocks[from].term = Jump{to};
    }
  }

  Bernoulli bernoulli(double bias) { return Bernoulli{bias, rng_()}; }

  /// Appends the outer loop (or nothing) after `last` and finalizes the model.
  Workload finish(BlockId entry, BlockId last) {
    model.entry = entry;
    if (p_.repeat) {
      const BlockId latch = block(true);
      model.blocks[latch].instrs.erase(model.blocks[latch].instrs.begin(), model.blocks[latch].instrs.end() - 1);
      const BlockId halt = block(false);
      model.blocks[halt].instrs.resize(1);
      model.blocks[halt].instrs[0] = InstrTemplate{0, InstrClass::Nop, {}, {}, FixedLatency{1}};
      go(last, latch);
      cond(latch, entry, halt, AlwaysTaken{});
      postdoms.emplace_back(latch, halt);
    }
    model.finalize();
    Workload w;
    w.truth = compute_truth(model, postdoms, p_.max_distance);
    w.model = std::move(model);
    return w;
  }

  std::mt19937_64& rng() { return rng_; }

  unsigned uniform(unsigned lo, unsigned hi) { return std::uniform_int_distribution<unsigned>(lo, hi)(rng_); }
  bool coin(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }

private:
  unsigned reg() { return uniform(0, reg_limit_ - 1); }

  const GenParams& p_;
  std::mt19937_64 rng_;
  SiteId next_site_ = 0;
  unsigned reg_limit_ = 16;
  bool loads_ = false;
};

double bias_at(const GenParams& p, std::size_t i, double fallback) {
  return i < p.branch_bias.size() ? p.branch_bias[i] : fallback;
}

// ---- random reducible regions ----

struct Region {
  enum Kind { Block, Seq, IfThen, IfElse, Loop } kind = Block;
  std::vector<Region> kids;
};

Region random_region(Builder& b, unsigned budget) {
  if (budget <= 1) return {};
  std::vector<Region::Kind> kinds{Region::Seq, Region::IfThen, Region::Loop};
  if (budget >= 3) kinds.push_back(Region::IfElse);
  const Region::Kind k = kinds[b.uniform(0, static_cast<unsigned>(kinds.size()) - 1)];
  Region r;
  r.kind = k;
  switch (k) {
  case Region::Seq: {
    const unsigned left = b.uniform(1, budget - 1);
    r.kids.push_back(random_region(b, left));
    r.kids.push_back(random_region(b, budget - left));
    break;
  }
  case Region::IfThen:
  case Region::Loop:
    r.kids.push_back(random_region(b, budget - 1));
    break;
  case Region::IfElse: {
    const unsigned left = b.uniform(1, budget - 2);
    r.kids.push_back(random_region(b, left));
    r.kids.push_back(random_region(b, budget - 1 - left));
    break;
  }
  case Region::Block:
    break;
  }
  return r;
}

struct Hole {
  BlockId block;
  int arm; ///< 0 unconditional, 1 taken, 2 not-taken
};

struct Laid {
  BlockId entry = 0;
  std::vector<Hole> holes;
  std::vector<BlockId> waiting; ///< branch blocks whose postdominator is the exit target
};

struct RandomLayout {
  Builder& b;
  const GenParams& p;

  void patch(const Laid& l, BlockId target) {
    for (const Hole& h : l.holes) {
      BasicBlock& blk = b.model.blocks[h.block];
      if (h.arm == 0) {
        b.go(h.block, target);
      } else if (auto* c = std::get_if<CondBranch>(&blk.term)) {
        (h.arm == 1 ? c->taken : c->not_taken) = target;
      }
    }
    for (BlockId w : l.waiting) b.postdoms.emplace_back(w, target);
  }

  OutcomeSource branch_source() {
    if (!p.branch_bias.empty()) return b.bernoulli(p.branch_bias[site_count_++ % p.branch_bias.size()]);
    static constexpr double kBiases[] = {0.0, 0.05, 0.2, 0.5, 0.8, 0.95, 1.0};
    return b.bernoulli(kBiases[b.uniform(0, 6)]);
  }

  OutcomeSource loop_source() {
    const unsigned trips = b.uniform(1, 4);
    Pattern pat;
    pat.bits.assign(trips - 1, true);
    pat.bits.push_back(false);
    return pat;
  }

  Laid lay(const Region& r) {
    Laid out;
    switch (r.kind) {
    case Region::Block: {
      out.entry = b.block(false);
      out.holes.push_back({out.entry, 0});
      break;
    }
    case Region::Seq: {
      Laid a = lay(r.kids[0]);
      Laid c = lay(r.kids[1]);
      patch(a, c.entry);
      out.entry = a.entry;
      out.holes = std::move(c.holes);
      out.waiting = std::move(c.waiting);
      break;
    }
    case Region::IfThen: {
      const BlockId head = b.block(true);
      b.cond(head, 0, 0, branch_source());
      Laid t = lay(r.kids[0]);
      std::get<CondBranch>(b.model.blocks[head].term).taken = t.entry;
      out.entry = head;
      out.holes = std::move(t.holes);
      out.holes.push_back({head, 2});
      out.waiting = std::move(t.waiting);
      out.waiting.push_back(head);
      break;
    }
    case Region::IfElse: {
      const BlockId head = b.block(true);
      b.cond(head, 0, 0, branch_source());
      Laid t = lay(r.kids[0]);
      Laid e = lay(r.kids[1]);
      auto& c = std::get<CondBranch>(b.model.blocks[head].term);
      c.taken = t.entry;
      c.not_taken = e.entry;
      out.entry = head;
      out.holes = std::move(t.holes);
      out.holes.insert(out.holes.end(), e.holes.begin(), e.holes.end());
      out.waiting = std::move(t.waiting);
      out.waiting.insert(out.waiting.end(), e.waiting.begin(), e.waiting.end());
      out.waiting.push_back(head);
      break;
    }
    case Region::Loop: {
      Laid body = lay(r.kids[0]);
      const BlockId latch = b.block(true);
      patch(body, latch);
      b.cond(latch, body.entry, 0, loop_source());
      out.entry = body.entry;
      out.holes.push_back({latch, 2});
      out.waiting.push_back(latch);
      break;
    }
    }
    return out;
  }

  std::size_t site_count_ = 0;
};

BlockId static_next(const ProgramModel& m, const BasicBlock& blk, bool& stop) {
  stop = false;
  if (std::holds_alternative<Fallthrough>(blk.term)) return blk.id + 1;
  if (const auto* j = std::get_if<Jump>(&blk.term)) return j->target;
  if (const auto* c = std::get_if<CondBranch>(&blk.term))
    return static_bias_direction(m.sources.at(c->site)) ? c->taken : c->not_taken;
  stop = true;
  return 0;
}

ArmTruth arm_truth(const ProgramModel& m, BlockId branch_block, const CondBranch& cb, bool dir, unsigned max) {
  ArmTruth t;
  t.dir = dir;
  const Pc branch_pc = m.blocks[branch_block].instrs.back().pc;

  // Continuation: statically favored walk over whole blocks.
  std::vector<const InstrTemplate*> cont;
  BlockId cur = dir ? cb.taken : cb.not_taken;
  bool done = false;
  while (!done) {
    for (const InstrTemplate& ins : m.blocks[cur].instrs) {
      if (ins.pc == branch_pc || cont.size() >= max) {
        done = true;
        break;
      }
      cont.push_back(&ins);
    }
    if (done) break;
    bool stop = false;
    cur = static_next(m, m.blocks[cur], stop);
    done = stop;
  }

  // Shortest instruction count from the other successor to each block start,
  // never leaving through the branch block.
  constexpr std::uint64_t kInf = std::numeric_limits<std::uint64_t>::max();
  const std::size_t nb = m.blocks.size();
  std::vector<std::uint64_t> dist(nb, kInf);
  using Item = std::pair<std::uint64_t, BlockId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const BlockId alt = dir ? cb.not_taken : cb.taken;
  dist[alt] = 0;
  pq.emplace(0, alt);
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d != dist[u] || u == branch_block) continue;
    const std::uint64_t nd = d + m.blocks[u].instrs.size();
    for (BlockId v : successors(m, m.blocks[u])) {
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }

  for (std::size_t k = 0; k < cont.size(); ++k) {
    const Location loc = m.location(cont[k]->pc);
    if (dist[loc.block] == kInf) continue;
    const std::uint64_t depth = dist[loc.block] + loc.index + 1;
    if (depth > max) continue;
    t.merge_pc = cont[k]->pc;
    t.distance = static_cast<std::uint32_t>(k + 1);
    t.alt_distance = static_cast<std::uint32_t>(depth);
    for (std::size_t i = 0; i < k; ++i) t.cp_regs |= cont[i]->dests;

    // Blocks lying on some shortest walk into the merge block.
    std::vector<bool> on_path(nb, false);
    std::vector<BlockId> stack{loc.block};
    while (!stack.empty()) {
      const BlockId v = stack.back();
      stack.pop_back();
      for (std::size_t u = 0; u < nb; ++u) {
        if (on_path[u] || u == branch_block || dist[u] == kInf) continue;
        const auto succ = successors(m, m.blocks[u]);
        if (std::find(succ.begin(), succ.end(), v) == succ.end()) continue;
        if (dist[u] + m.blocks[u].instrs.size() != dist[v]) continue;
        on_path[u] = true;
        stack.push_back(static_cast<BlockId>(u));
      }
    }
    for (std::size_t u = 0; u < nb; ++u)
      if (on_path[u] && u != loc.block)
        for (const InstrTemplate& ins : m.blocks[u].instrs) t.alt_regs |= ins.dests;
    for (std::uint32_t i = 0; i < loc.index; ++i) t.alt_regs |= m.blocks[loc.block].instrs[i].dests;
    break;
  }
  return t;
}

} // namespace

GroundTruth compute_truth(const ProgramModel& model, const std::vector<std::pair<BlockId, BlockId>>& postdoms,
                          unsigned max_distance) {
  GroundTruth g;
  g.max_distance = max_distance;
  std::map<BlockId, BlockId> pd(postdoms.begin(), postdoms.end());
  for (const auto& [pc, blk] : model.branch_sites()) {
    const auto& cb = std::get<CondBranch>(model.blocks[blk].term);
    SiteTruth s;
    s.site = cb.site;
    s.branch_pc = pc;
    s.block = blk;
    if (auto it = pd.find(blk); it != pd.end()) s.postdom_pc = model.first_pc(it->second);
    s.taken = arm_truth(model, blk, cb, true, max_distance);
    s.not_taken = arm_truth(model, blk, cb, false, max_distance);
    g.sites.push_back(s);
  }
  return g;
}

const SiteTruth* GroundTruth::find(Pc branch_pc) const {
  for (const SiteTruth& s : sites)
    if (s.branch_pc == branch_pc) return &s;
  return nullptr;
}

Workload gen_hammock(const GenParams& p) {
  p.validate();
  Builder b(p);
  const BlockId a = b.block(true);
  const BlockId arm_t = b.block(false);
  const BlockId arm_n = b.block(false);
  const BlockId join = b.block(false);
  b.cond(a, arm_t, arm_n, b.bernoulli(bias_at(p, 0, 0.5)));
  b.go(arm_t, join);
  b.go(arm_n, join);
  b.postdoms.emplace_back(a, join);
  return b.finish(a, join);
}

Workload gen_nested(const GenParams& p) {
  p.validate();
  Builder b(p);
  const BlockId a = b.block(true);
  const BlockId bb = b.block(true);
  const BlockId c = b.block(true);
  const BlockId d = b.block(false);
  const BlockId e = b.block(false);
  const BlockId f = b.block(false);
  const double eps = bias_at(p, 1, 0.0);
  b.cond(a, bb, c, b.bernoulli(bias_at(p, 0, 0.5)));
  b.cond(bb, e, d, b.bernoulli(eps));
  b.cond(c, e, d, b.bernoulli(eps));
  b.go(d, f);
  b.go(e, f);
  for (BlockId x : {a, bb, c}) b.postdoms.emplace_back(x, f);
  return b.finish(a, f);
}

Workload gen_loop(const GenParams& p) {
  p.validate();
  Builder b(p);
  const BlockId pre = b.block(false);
  const BlockId body = b.block(true);
  const BlockId exit = b.block(false);
  Pattern pat;
  pat.bits.assign(p.trip_count - 1, true);
  pat.bits.push_back(false);
  b.go(pre, body);
  b.cond(body, body, exit, pat);
  b.postdoms.emplace_back(body, exit);
  return b.finish(pre, exit);
}

Workload gen_random_reducible(const GenParams& p) {
  p.validate();
  Builder b(p);
  b.enable_loads(true);
  const unsigned total = b.uniform(5, 50);
  // One block of the total is the exit tail; the outer-loop latch and halt come on top.
  const Region root = random_region(b, total - 1);
  RandomLayout layout{b, p};
  Laid l = layout.lay(root);
  // The region exit gets one more block so every hole has a target.
  const BlockId tail = b.block(false);
  layout.patch(l, tail);
  return b.finish(l.entry, tail);
}

Workload generate(const GenParams& p) {
  switch (p.shape) {
  case Shape::Hammock: return gen_hammock(p);
  case Shape::NestedDiamond: return gen_nested(p);
  case Shape::LoopWithExit: return gen_loop(p);
  case Shape::RandomReducible: return gen_random_reducible(p);
  }
  throw std::invalid_argument("unknown shape");
}

Workload gen_confidence_mix(std::uint64_t seed, std::uint32_t miss_cycles) {
  GenParams p;
  p.seed = seed;
  p.block_min = 3;
  p.block_max = 4;
  Builder b(p);
  b.limit_regs(12);
  constexpr unsigned kLoadReg = 15;

  auto hammock = [&](OutcomeSource src) {
    const BlockId a = b.block(true);
    const BlockId t = b.block(false);
    const BlockId n = b.block(false);
    const BlockId j = b.block(false);
    b.cond(a, t, n, std::move(src));
    b.go(t, j);
    b.go(n, j);
    b.postdoms.emplace_back(a, j);
    return std::pair{a, j};
  };

  const auto [a1, j1] = hammock(b.bernoulli(0.5));
  const auto [a2, j2] = hammock(AlwaysTaken{});
  const auto [a3, j3] = hammock(b.bernoulli(0.9));
  b.go(j1, a2);
  b.go(j2, a3);

  auto& slow = b.model.blocks[a3].instrs;
  InstrTemplate load;
  load.cls = InstrClass::Load;
  load.dests.insert(kLoadReg);
  load.srcs.insert(0);
  load.latency = LoadMissLatency{1.0, 3, miss_cycles};
  slow.insert(slow.begin(), load);
  slow.back().srcs = RegSet::of({kLoadReg});
  return b.finish(a1, j3);
}

// ---- sidecar ----

namespace {

ojson regs_json(RegSet r) { return r.to_vector(); }

ojson arm_json(const ArmTruth& a) {
  ojson j;
  j["dir"] = a.dir ? "taken" : "not_taken";
  j["merge_pc"] = a.merge_pc ? ojson(*a.merge_pc) : ojson(nullptr);
  j["distance"] = a.distance;
  j["alt_distance"] = a.alt_distance;
  j["cp_regs"] = regs_json(a.cp_regs);
  j["alt_regs"] = regs_json(a.alt_regs);
  return j;
}

ArmTruth arm_from(const ojson& j, const std::string& w) {
  ArmTruth a;
  const auto dir = json_get<std::string>(json_at(j, "dir", w), w + ".dir");
  if (dir != "taken" && dir != "not_taken") throw ParseError(w + ".dir", "expected taken or not_taken");
  a.dir = dir == "taken";
  const ojson& m = json_at(j, "merge_pc", w);
  if (!m.is_null()) a.merge_pc = json_get<Pc>(m, w + ".merge_pc");
  a.distance = json_get<std::uint32_t>(json_at(j, "distance", w), w + ".distance");
  a.alt_distance = json_get<std::uint32_t>(json_at(j, "alt_distance", w), w + ".alt_distance");
  a.cp_regs = parse_regs(json_at(j, "cp_regs", w), w + ".cp_regs");
  a.alt_regs = parse_regs(json_at(j, "alt_regs", w), w + ".alt_regs");
  return a;
}

} // namespace

void save_truth(const GroundTruth& truth, std::ostream& out) {
  ojson j;
  j["format"] = 1;
  j["max_distance"] = truth.max_distance;
  j["sites"] = ojson::array();
  for (const SiteTruth& s : truth.sites) {
    ojson sj;
    sj["site"] = s.site;
    sj["branch_pc"] = s.branch_pc;
    sj["block"] = s.block;
    sj["postdom_pc"] = s.postdom_pc ? ojson(*s.postdom_pc) : ojson(nullptr);
    sj["arms"] = {arm_json(s.taken), arm_json(s.not_taken)};
    j["sites"].push_back(sj);
  }
  out << j.dump(1) << '\n';
}

GroundTruth load_truth(std::istream& in) {
  const ojson j = parse_json_stream(in);
  if (json_get<int>(json_at(j, "format", ""), "format") != 1) throw ParseError("format", "unsupported truth format");
  GroundTruth g;
  g.max_distance = json_get<unsigned>(json_at(j, "max_distance", ""), "max_distance");
  const ojson& sites = json_at(j, "sites", "");
  if (!sites.is_array()) throw ParseError("sites", "expected an array");
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const std::string w = "sites[" + std::to_string(i) + "]";
    const ojson& sj = sites[i];
    SiteTruth s;
    s.site = json_get<SiteId>(json_at(sj, "site", w), w + ".site");
    s.branch_pc = json_get<Pc>(json_at(sj, "branch_pc", w), w + ".branch_pc");
    s.block = json_get<BlockId>(json_at(sj, "block", w), w + ".block");
    const ojson& pd = json_at(sj, "postdom_pc", w);
    if (!pd.is_null()) s.postdom_pc = json_get<Pc>(pd, w + ".postdom_pc");
    const ojson& arms = json_at(sj, "arms", w);
    if (!arms.is_array() || arms.size() != 2) throw ParseError(w + ".arms", "expected two arms");
    for (std::size_t k = 0; k < 2; ++k) {
      ArmTruth a = arm_from(arms[k], w + ".arms[" + std::to_string(k) + "]");
      (a.dir ? s.taken : s.not_taken) = a;
    }
    g.sites.push_back(s);
  }
  return g;
}

void save_truth_file(const GroundTruth& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, "cannot open for writing");
  save_truth(truth, out);
}

GroundTruth load_truth_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  try {
    return load_truth(in);
  } catch (const ParseError& e) {
    rethrow_in_file(path, e);
  }
}

} // namespace reconverge
