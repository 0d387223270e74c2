#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "reconverge/types.hpp"

namespace reconverge {

enum class InstrClass { Alu, Load, Store, Branch, Nop };

struct FixedLatency {
  std::uint32_t cycles = 1;
  friend bool operator==(const FixedLatency&, const FixedLatency&) = default;
};

struct LoadMissLatency {
  double miss_prob = 0.0;
  std::uint32_t hit_cycles = 3;
  std::uint32_t miss_cycles = 200;
  friend bool operator==(const LoadMissLatency&, const LoadMissLatency&) = default;
};

using LatencyClass = std::variant<FixedLatency, LoadMissLatency>;

struct InstrTemplate {
  Pc pc = 0;
  InstrClass cls = InstrClass::Alu;
  RegSet dests;
  RegSet srcs;
  LatencyClass latency = FixedLatency{1};
  friend bool operator==(const InstrTemplate&, const InstrTemplate&) = default;
};

/// Falls into the block declared immediately after this one.
struct Fallthrough {
  friend bool operator==(const Fallthrough&, const Fallthrough&) = default;
};
struct CondBranch {
  BlockId taken = 0;
  BlockId not_taken = 0;
  SiteId site = 0;
  friend bool operator==(const CondBranch&, const CondBranch&) = default;
};
struct Jump {
  BlockId target = 0;
  friend bool operator==(const Jump&, const Jump&) = default;
};
struct Halt {
  friend bool operator==(const Halt&, const Halt&) = default;
};

using Terminator = std::variant<Fallthrough, CondBranch, Jump, Halt>;

struct BasicBlock {
  BlockId id = 0;
  std::vector<InstrTemplate> instrs;
  Terminator term = Halt{};
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

struct Bernoulli {
  double bias = 0.5; ///< probability of taken
  std::uint64_t seed = 0;
  friend bool operator==(const Bernoulli&, const Bernoulli&) = default;
};
struct Pattern {
  std::vector<bool> bits; ///< repeats; true = taken
  friend bool operator==(const Pattern&, const Pattern&) = default;
};
struct AlwaysTaken {
  friend bool operator==(const AlwaysTaken&, const AlwaysTaken&) = default;
};
struct AlwaysNotTaken {
  friend bool operator==(const AlwaysNotTaken&, const AlwaysNotTaken&) = default;
};

using OutcomeSource = std::variant<Bernoulli, Pattern, AlwaysTaken, AlwaysNotTaken>;

/// The direction a source favors: argmax of the Bernoulli bias, pattern majority.
/// Ties resolve to not-taken.
bool static_bias_direction(const OutcomeSource& src);

struct Location {
  BlockId block = 0;
  std::uint32_t index = 0;
  friend bool operator==(const Location&, const Location&) = default;
};

/// Executable CFG workload. PCs are assigned densely in block declaration
/// order by finalize(); the model is immutable afterwards.
class ProgramModel {
public:
  std::vector<BasicBlock> blocks;
  BlockId entry = 0;
  unsigned arch_reg_count = 16;
  std::map<SiteId, OutcomeSource> sources;

  /// Assigns PCs starting at 0 and builds the PC lookup table.
  void finalize();

  std::size_t instr_count() const { return locations_.size(); }
  bool has_pc(Pc pc) const { return pc < locations_.size(); }
  const Location& location(Pc pc) const { return locations_.at(pc); }
  const InstrTemplate& instr(Pc pc) const;
  const BasicBlock& block(BlockId id) const { return blocks.at(id); }
  Pc first_pc(BlockId id) const { return blocks.at(id).instrs.at(0).pc; }

  /// All conditional branch sites as (branch pc, block id), in PC order.
  std::vector<std::pair<Pc, BlockId>> branch_sites() const;
  std::optional<CondBranch> cond_at(Pc pc) const;

  friend bool operator==(const ProgramModel& a, const ProgramModel& b) {
    return a.blocks == b.blocks && a.entry == b.entry && a.arch_reg_count == b.arch_reg_count &&
           a.sources == b.sources;
  }

private:
  std::vector<Location> locations_;
};

/// Successor block ids of a block in a fixed order (taken before not-taken).
std::vector<BlockId> successors(const ProgramModel& model, const BasicBlock& block);

struct Violation {
  std::string where;
  std::string message;
};
using ValidationReport = std::vector<Violation>;

ValidationReport validate_model(const ProgramModel& model);

struct BranchInfo {
  bool taken = false;
  Pc target_pc = 0;
};

struct DynInstr {
  Pc pc = 0;
  InstrClass cls = InstrClass::Alu;
  RegSet dests;
  RegSet srcs;
  std::uint64_t seq_no = 0;
  std::optional<BranchInfo> branch;
};

/// Position inside the CFG; `ended` once a Halt block is exhausted.
struct PathCursor {
  Location at;
  bool ended = false;
};

/// Supplies the direction of a conditional branch reached during a walk.
using DirectionFn = std::function<bool(Pc branch_pc, SiteId site)>;

/// Emits the instruction under the cursor and advances it. Returns nullopt once
/// the walk has ended. Throws ModelError on an invalid successor.
std::optional<DynInstr> step_path(const ProgramModel& model, PathCursor& cursor, std::uint64_t seq_no,
                                  const DirectionFn& direction);

/// Per-site stream of architectural outcomes.
class SourceCursor {
public:
  SourceCursor() = default;
  SourceCursor(const OutcomeSource& src, std::uint64_t master_seed, SiteId site);
  bool next();

private:
  OutcomeSource source_ = AlwaysNotTaken{};
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

/// Architectural walker. Externally owned; copyable so a continuation can be replayed.
struct WalkerState {
  PathCursor cursor;
  std::uint64_t seq = 0;
  std::map<SiteId, SourceCursor> sources;
};

WalkerState make_walker(const ProgramModel& model, std::uint64_t master_seed);

/// Next architectural instruction, consuming one outcome at each conditional.
std::optional<DynInstr> step_architectural(const ProgramModel& model, WalkerState& state);

enum class FollowKind { PredictorDirected, StaticBias };

struct FollowPolicy {
  FollowKind kind = FollowKind::StaticBias;
  DirectionFn direction; ///< consulted only for PredictorDirected

  static FollowPolicy static_bias() { return {}; }
  static FollowPolicy directed(DirectionFn fn) { return {FollowKind::PredictorDirected, std::move(fn)}; }
};

/// Walks from the `forced_dir` successor of the branch at `branch_pc` for at most
/// `max_len` instructions. seq_no starts at `first_seq`.
std::vector<DynInstr> step_wrong_path(const ProgramModel& model, Pc branch_pc, bool forced_dir,
                                      const FollowPolicy& policy, std::size_t max_len,
                                      std::uint64_t first_seq = 1);

// Serialization (JSON syntax, `format: 1`).
void save_model(const ProgramModel& model, std::ostream& sink);
ProgramModel load_model(std::istream& source);
ProgramModel load_model_file(const std::string& path);
void save_model_file(const ProgramModel& model, const std::string& path);

const char* to_string(InstrClass cls);

} // namespace reconverge
