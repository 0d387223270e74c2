#pragma once

// Synthetic workload generators. Every generator returns the model together
// with ground-truth merge metadata computed from the block graph, which the
// oracle later recomputes at instruction level.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reconverge/program_model.hpp"

namespace reconverge {

enum class Shape { Hammock, NestedDiamond, LoopWithExit, RandomReducible };

const char* to_string(Shape s);
Shape parse_shape(const std::string& s);

struct GenParams {
  Shape shape = Shape::Hammock;
  unsigned block_min = 3; ///< instructions per block, branch included
  unsigned block_max = 3;
  /// Per-site taken probabilities. Hammock: {A}. Nested: {A, E-edge}.
  /// RandomReducible draws biases when empty.
  std::vector<double> branch_bias;
  std::uint64_t seed = 1;
  double reg_pressure = 0.5; ///< probability that an instruction writes a register
  unsigned arch_reg_count = 16;
  unsigned trip_count = 10;  ///< LoopWithExit
  bool repeat = true;        ///< wrap the shape in an always-taken outer loop
  unsigned max_distance = 100;

  void validate() const;
};

struct ArmTruth {
  bool dir = false; ///< actual direction of the branch
  std::optional<Pc> merge_pc;
  std::uint32_t distance = 0;     ///< along the architectural continuation
  std::uint32_t alt_distance = 0; ///< shortest walk from the other successor
  RegSet cp_regs;                 ///< written on the continuation before the merge
  RegSet alt_regs;                ///< written on any shortest alternate walk before the merge

  friend bool operator==(const ArmTruth&, const ArmTruth&) = default;
};

struct SiteTruth {
  SiteId site = 0;
  Pc branch_pc = 0;
  BlockId block = 0;
  std::optional<Pc> postdom_pc; ///< first pc of the immediate postdominator block
  ArmTruth taken;
  ArmTruth not_taken;

  const ArmTruth& arm(bool dir) const { return dir ? taken : not_taken; }
  friend bool operator==(const SiteTruth&, const SiteTruth&) = default;
};

struct GroundTruth {
  unsigned max_distance = 100;
  std::vector<SiteTruth> sites;

  const SiteTruth* find(Pc branch_pc) const;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Workload {
  ProgramModel model;
  GroundTruth truth;
};

Workload gen_hammock(const GenParams& p);
Workload gen_nested(const GenParams& p);
Workload gen_loop(const GenParams& p);
Workload gen_random_reducible(const GenParams& p);
Workload generate(const GenParams& p);

/// Three hammocks in one loop: a Bernoulli(0.5) site, an always-taken site and
/// a 90%-biased site whose condition waits on a load that always misses.
Workload gen_confidence_mix(std::uint64_t seed, std::uint32_t miss_cycles = 200);

/// Merge truth for every conditional site, assuming the continuation follows
/// each branch's statically favored direction. `postdoms` maps branch block to
/// its immediate postdominator block.
GroundTruth compute_truth(const ProgramModel& model, const std::vector<std::pair<BlockId, BlockId>>& postdoms,
                          unsigned max_distance);

void save_truth(const GroundTruth& truth, std::ostream& out);
GroundTruth load_truth(std::istream& in);
void save_truth_file(const GroundTruth& truth, const std::string& path);
GroundTruth load_truth_file(const std::string& path);

} // namespace reconverge
