#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "reconverge/conf_cost.hpp"
#include "reconverge/merge_pred.hpp"
#include "reconverge/types.hpp"

namespace reconverge {

enum class EventKind {
  BranchPredicted,
  BranchResolved,
  Flush,
  WpbDetected,
  MpPredicted,
  MpResolved,
  BranchRetired,
  Retired,
};

const char* to_string(EventKind k);

/// Flat event record. Fields not meaningful for a kind stay zero.
///
/// `index` is the architectural (retirement-order) index of the instruction
/// the event concerns, or of the owning branch for MpResolved; wrong-path
/// events carry the fetch id instead and set `wrong_path`.
struct Event {
  EventKind kind = EventKind::Retired;
  std::uint64_t cycle = 0;
  std::uint64_t index = 0;
  Pc pc = 0;
  bool wrong_path = false;
  bool taken = false;         ///< predicted direction (BranchPredicted) or actual (BranchRetired)
  bool mispredicted = false;
  bool use_mp = false;
  ConfLevel conf = ConfLevel::Low;
  LatLevel lat = LatLevel::Low;
  MpStatus mp = MpStatus::None;
  Pc merge_pc = 0;
  std::uint32_t distance = 0;   ///< predicted distance (MpPredicted/MpResolved/WpbDetected)
  std::uint32_t age = 0;        ///< MpResolved: age at resolution
  std::uint32_t new_distance = 0; ///< MpResolved: entry distance after the update
  Verdict verdict = Verdict::Correct;
  std::uint64_t latency = 0;    ///< BranchResolved
  std::uint64_t squashed = 0;   ///< Flush: wrong-path instructions removed

  friend bool operator==(const Event&, const Event&) = default;
};

using SimEventLog = std::vector<Event>;

/// One JSON object per line, stable key order.
void write_event_log(const SimEventLog& log, std::ostream& out);
SimEventLog read_event_log(std::istream& in);

const char* to_string(MpStatus s);

} // namespace reconverge
