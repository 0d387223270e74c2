#pragma once

#include <cstdint>
#include <vector>

#include "reconverge/types.hpp"

namespace reconverge {

enum class ConfLevel { Low, Med, High };
enum class LatLevel { Low, High };

const char* to_string(ConfLevel c);
const char* to_string(LatLevel l);

/// Low wins over High: a weak provider is Low even when JRS is saturated.
constexpr ConfLevel classify_confidence(bool is_weak, bool jrs_high) {
  if (is_weak) return ConfLevel::Low;
  return jrs_high ? ConfLevel::High : ConfLevel::Med;
}

/// Merge-point vs branch prediction decision table.
///
///            Low   Med   High
///   LatLow   MP    BP    BP
///   LatHigh  MP    MP    BP
constexpr bool decide(ConfLevel conf, LatLevel lat) {
  return conf == ConfLevel::Low || (conf == ConfLevel::Med && lat == LatLevel::High);
}

struct CcDecision {
  ConfLevel conf = ConfLevel::Low;
  LatLevel lat = LatLevel::Low;
  bool use_mp = true;
};

struct LatencyConfig {
  unsigned log_entries = 10;
  double threshold_cycles = 50.0;
  std::uint32_t new_weight_num = 9; ///< weight of the new sample is num / den
  std::uint32_t weight_den = 10;
};

/// Per-branch running average of resolve latency, direct mapped and untagged.
/// Averages are fixed point with 8 fractional bits.
class LatencyTable {
public:
  static constexpr unsigned kFracBits = 8;
  using Fixed = std::uint64_t;

  explicit LatencyTable(LatencyConfig cfg = {});

  void record_latency(Pc pc, std::uint64_t resolve_cycles);
  LatLevel classify_latency(Pc pc) const;

  bool valid(Pc pc) const { return slots_[index(pc)].valid; }
  Fixed average_fixed(Pc pc) const { return slots_[index(pc)].avg; }
  double average(Pc pc) const { return static_cast<double>(average_fixed(pc)) / (1U << kFracBits); }
  const LatencyConfig& config() const { return cfg_; }

private:
  struct Slot {
    Fixed avg = 0;
    bool valid = false;
  };
  std::size_t index(Pc pc) const { return static_cast<std::size_t>(pc & (slots_.size() - 1)); }

  LatencyConfig cfg_;
  Fixed threshold_fixed_;
  std::vector<Slot> slots_;
};

} // namespace reconverge
