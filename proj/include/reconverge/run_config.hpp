#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "json.hpp"
#include "reconverge/branch_pred.hpp"
#include "reconverge/conf_cost.hpp"
#include "reconverge/merge_pred.hpp"

namespace reconverge {

struct PipelineConfig {
  unsigned fetch_width = 4;
  unsigned rob_size = 512;
  unsigned flush_refill_penalty = 15;
  std::uint32_t load_miss_latency = 200; ///< used when an instruction's miss_cycles is 0
  std::uint64_t budget = 100000;         ///< retired instructions
};

enum class Policy { BpOnly, Mpp, MppMax };

const char* to_string(Policy p);
Policy parse_policy(const std::string& s);

/// Everything a single simulation run depends on.
struct RunConfig {
  PipelineConfig pipeline;
  TageConfig tage;
  JrsConfig jrs;
  LatencyConfig latency;
  MergeConfig merge;
  Policy policy = Policy::Mpp;
  std::uint64_t seed = 1;
  std::uint64_t warmup = 0; ///< retired instructions excluded from metrics
  bool log_retired = false;

  /// Merge config with the policy flag applied.
  MergeConfig effective_merge() const;
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::ordered_json& j);
RunConfig load_run_config(std::istream& in);
RunConfig load_run_config_file(const std::string& path);

} // namespace reconverge
