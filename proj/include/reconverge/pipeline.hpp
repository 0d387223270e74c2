#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "reconverge/branch_pred.hpp"
#include "reconverge/conf_cost.hpp"
#include "reconverge/events.hpp"
#include "reconverge/merge_pred.hpp"
#include "reconverge/program_model.hpp"
#include "reconverge/run_config.hpp"

namespace reconverge {

struct RobEntry {
  DynInstr instr;
  std::uint64_t fetch_id = 0;
  std::uint64_t arch_index = 0; ///< valid on the correct path
  std::uint64_t fetch_cycle = 0;
  std::uint64_t complete_cycle = 0;
  bool wrong_path = false;

  // Conditional branches only.
  bool is_cond = false;
  bool predicted_dir = false;
  bool actual_dir = false; ///< correct path only
  std::uint64_t ghist = 0; ///< history the prediction was made with
  TagePrediction tage;
  CcDecision cc;
  MpQuery mp;
};

/// Instructions younger than the ROB entry at `branch_index`, in fetch order.
std::vector<DynInstr> rob_walk(const std::deque<RobEntry>& rob, std::size_t branch_index);

struct SimStats {
  std::uint64_t cycles = 0;
  std::uint64_t retired = 0;
  std::uint64_t fetched = 0;
  std::uint64_t wrong_path_fetched = 0;
  std::uint64_t branches = 0;        ///< retired conditional branches
  std::uint64_t mispredictions = 0;  ///< among retired conditional branches
  std::uint64_t flushes = 0;
  std::uint64_t squashed = 0;
  std::uint64_t mp_selected = 0;     ///< retired branches the decision table sent to MP
  std::uint64_t mp_flushes = 0;      ///< incorrect merge predictions (accounted, not redirected)
  std::uint64_t mp_penalty_cycles = 0;
  MergeStats merge;

  double mean_wrong_path_length() const {
    return flushes == 0 ? 0.0 : static_cast<double>(squashed) / static_cast<double>(flushes);
  }
};

struct SimResult {
  SimStats stats;
  SimEventLog log;
  std::vector<MergeEntry> merge_table; ///< valid predictor entries at the end of the run
};

/// Runs the model until the retirement budget is reached or the program halts.
/// Deterministic given (model, cfg).
SimResult run(const ProgramModel& model, const RunConfig& cfg);

} // namespace reconverge
