#include "reconverge/conf_cost.hpp"

#include <cmath>
#include <stdexcept>

namespace reconverge {

const char* to_string(ConfLevel c) {
  switch (c) {
  case ConfLevel::Low: return "low";
  case ConfLevel::Med: return "med";
  case ConfLevel::High: return "high";
  }
  return "?";
}

const char* to_string(LatLevel l) { return l == LatLevel::Low ? "low" : "high"; }

LatencyTable::LatencyTable(LatencyConfig cfg) : cfg_(cfg) {
  if (cfg_.log_entries == 0 || cfg_.log_entries > 24) throw std::invalid_argument("latency table size out of range");
  if (cfg_.weight_den == 0 || cfg_.new_weight_num > cfg_.weight_den) throw std::invalid_argument("latency EMA weights invalid");
  if (!(cfg_.threshold_cycles >= 0.0)) throw std::invalid_argument("latency threshold must be non-negative");
  threshold_fixed_ = static_cast<Fixed>(std::llround(cfg_.threshold_cycles * (1U << kFracBits)));
  slots_.assign(std::size_t{1} << cfg_.log_entries, Slot{});
}

void LatencyTable::record_latency(Pc pc, std::uint64_t resolve_cycles) {
  Slot& s = slots_[index(pc)];
  const Fixed sample = resolve_cycles << kFracBits;
  if (!s.valid) {
    s.avg = sample;
    s.valid = true;
    return;
  }
  const Fixed num = cfg_.new_weight_num * sample + (cfg_.weight_den - cfg_.new_weight_num) * s.avg;
  s.avg = (num + cfg_.weight_den / 2) / cfg_.weight_den;
}

LatLevel LatencyTable::classify_latency(Pc pc) const {
  const Slot& s = slots_[index(pc)];
  return s.valid && s.avg > threshold_fixed_ ? LatLevel::High : LatLevel::Low;
}

} // namespace reconverge
