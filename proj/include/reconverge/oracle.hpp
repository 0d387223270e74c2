#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "reconverge/program_model.hpp"

namespace reconverge {

struct OracleMerge {
  Pc branch_pc = 0;
  bool actual_dir = false;
  std::optional<Pc> merge_pc;
  std::uint32_t distance = 0;     ///< position of the merge on the continuation, 1-based
  std::uint32_t alt_distance = 0; ///< shortest alternate walk reaching the merge
  RegSet cp_regs;                 ///< written on the continuation before the merge
  RegSet alt_regs_min;            ///< written on every shortest alternate walk
  RegSet alt_regs_max;            ///< written on some shortest alternate walk
  bool loop_back = false;         ///< the branch recurred on the continuation before any merge
  /// Every continuation position whose pc the alternate side can reach: (pc, position).
  std::vector<std::pair<Pc, std::uint32_t>> merge_set;

  bool in_merge_set(Pc pc, std::uint32_t position) const;
};

/// PCs reachable from one successor of a branch, by depth, without passing
/// through the branch itself.
struct AltReach {
  std::vector<std::uint32_t> depth; ///< per pc; 0 = unreachable within the bound
  std::vector<RegSet> regs_min;     ///< per pc: destinations written on every shortest walk before it
  std::vector<RegSet> regs_max;     ///< per pc: destinations written on some shortest walk before it
};

AltReach alt_reach(const ProgramModel& model, Pc branch_pc, bool start_dir, unsigned max_distance);

/// Caches alternate-side reachability per (branch pc, direction).
class MergeOracle {
public:
  MergeOracle(const ProgramModel& model, unsigned max_distance);

  /// `continuation` holds the architectural pcs after the branch, oldest first.
  OracleMerge merge(Pc branch_pc, bool actual_dir, std::span<const Pc> continuation);
  unsigned max_distance() const { return max_; }

private:
  const ProgramModel& model_;
  unsigned max_;
  std::map<std::pair<Pc, bool>, AltReach> cache_;
};

OracleMerge oracle_merge(const ProgramModel& model, Pc branch_pc, bool actual_dir, std::span<const Pc> continuation,
                         unsigned max_distance);

/// Variant that follows a single alternate walk chosen by `policy`.
OracleMerge oracle_merge_directed(const ProgramModel& model, Pc branch_pc, bool actual_dir,
                                  std::span<const Pc> continuation, const FollowPolicy& policy, unsigned max_distance);

/// The pcs after the branch when every later branch takes its favored direction.
std::vector<Pc> static_continuation(const ProgramModel& model, Pc branch_pc, bool dir, unsigned max_distance);

/// First pc of the branch block's immediate postdominator, or nullopt when only
/// the exit postdominates it.
std::optional<Pc> static_postdominator(const ProgramModel& model, Pc branch_pc);

/// Architectural pcs and branch outcomes, replayed from the model and seed.
struct ArchTrace {
  std::vector<Pc> pcs;
  std::vector<std::int8_t> taken; ///< -1 for non-branches
};

ArchTrace replay_architectural(const ProgramModel& model, std::uint64_t seed, std::uint64_t count);

} // namespace reconverge
