#include "reconverge/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "reconverge/json_util.hpp"

namespace reconverge {

using ojson = nlohmann::ordered_json;

const char* to_string(Policy p) {
  switch (p) {
  case Policy::BpOnly: return "bp_only";
  case Policy::Mpp: return "mpp";
  case Policy::MppMax: return "mpp_max";
  }
  return "?";
}

Policy parse_policy(const std::string& s) {
  if (s == "bp_only") return Policy::BpOnly;
  if (s == "mpp") return Policy::Mpp;
  if (s == "mpp_max") return Policy::MppMax;
  throw ParseError("policy", "unknown policy '" + s + "' (expected bp_only, mpp or mpp_max)");
}

MergeConfig RunConfig::effective_merge() const {
  MergeConfig m = merge;
  m.policy = policy == Policy::MppMax ? UpdatePolicy::UpdateMax : UpdatePolicy::Plain;
  return m;
}

void RunConfig::validate() const {
  if (pipeline.fetch_width == 0 || pipeline.rob_size == 0 || pipeline.load_miss_latency == 0)
    throw ParseError("pipeline", "fetch_width, rob_size and load_miss_latency must be positive");
  effective_merge().validate();
  TageLite probe_tage(tage);
  JrsTable probe_jrs(jrs);
  LatencyTable probe_lat(latency);
}

namespace {

using Setter = std::function<void(const ojson&, const std::string&)>;

void apply_fields(const ojson& j, const std::string& where, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw ParseError(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    const std::string w = where.empty() ? key : where + "." + key;
    if (it == fields.end()) throw ParseError(w, "unknown key");
    it->second(value, w);
  }
}

template <typename T>
Setter field(T& target) {
  return [&target](const ojson& v, const std::string& w) { target = json_get<T>(v, w); };
}

} // namespace

ojson to_json(const RunConfig& c) {
  ojson j;
  j["pipeline"] = {{"fetch_width", c.pipeline.fetch_width},
                   {"rob_size", c.pipeline.rob_size},
                   {"flush_refill_penalty", c.pipeline.flush_refill_penalty},
                   {"load_miss_latency", c.pipeline.load_miss_latency},
                   {"budget", c.pipeline.budget}};
  j["tage"] = {{"base_log_entries", c.tage.base_log_entries},
               {"tagged_log_entries", c.tage.tagged_log_entries},
               {"history_lengths", c.tage.history_lengths},
               {"tag_bits", c.tage.tag_bits}};
  j["jrs"] = {{"log_entries", c.jrs.log_entries}, {"history_bits", c.jrs.history_bits}, {"threshold", c.jrs.threshold}};
  j["conf_cost"] = {{"log_entries", c.latency.log_entries},
                    {"threshold_cycles", c.latency.threshold_cycles},
                    {"new_weight_num", c.latency.new_weight_num},
                    {"weight_den", c.latency.weight_den}};
  j["merge"] = {{"table_entries", c.merge.table_entries},
                {"table_ways", c.merge.table_ways},
                {"max_distance", c.merge.max_distance},
                {"ul_capacity", c.merge.ul_capacity},
                {"wpb_entries", c.merge.wpb_entries},
                {"wpb_ways", c.merge.wpb_ways},
                {"wpb_contexts", c.merge.wpb_contexts},
                {"wpb_fully_associative", c.merge.wpb_fully_associative},
                {"cam_compare", c.merge.cam_compare},
                {"initial_ctr", c.merge.initial_ctr},
                {"arch_reg_count", c.merge.arch_reg_count}};
  j["policy"] = to_string(c.policy);
  j["seed"] = c.seed;
  j["warmup"] = c.warmup;
  j["log_retired"] = c.log_retired;
  return j;
}

RunConfig run_config_from_json(const ojson& j) {
  RunConfig c;
  std::uint32_t initial_ctr = c.merge.initial_ctr;
  apply_fields(j, "",
               {
                   {"pipeline",
                    [&](const ojson& v, const std::string& w) {
                      apply_fields(v, w,
                                   {{"fetch_width", field(c.pipeline.fetch_width)},
                                    {"rob_size", field(c.pipeline.rob_size)},
                                    {"flush_refill_penalty", field(c.pipeline.flush_refill_penalty)},
                                    {"load_miss_latency", field(c.pipeline.load_miss_latency)},
                                    {"budget", field(c.pipeline.budget)}});
                    }},
                   {"tage",
                    [&](const ojson& v, const std::string& w) {
                      apply_fields(v, w,
                                   {{"base_log_entries", field(c.tage.base_log_entries)},
                                    {"tagged_log_entries", field(c.tage.tagged_log_entries)},
                                    {"tag_bits", field(c.tage.tag_bits)},
                                    {"history_lengths", [&](const ojson& h, const std::string& hw) {
                                       if (!h.is_array()) throw ParseError(hw, "expected an array");
                                       c.tage.history_lengths.clear();
                                       for (std::size_t i = 0; i < h.size(); ++i)
                                         c.tage.history_lengths.push_back(json_get<unsigned>(h[i], hw + "[" + std::to_string(i) + "]"));
                                     }}});
                    }},
                   {"jrs",
                    [&](const ojson& v, const std::string& w) {
                      apply_fields(v, w,
                                   {{"log_entries", field(c.jrs.log_entries)},
                                    {"history_bits", field(c.jrs.history_bits)},
                                    {"threshold", field(c.jrs.threshold)}});
                    }},
                   {"conf_cost",
                    [&](const ojson& v, const std::string& w) {
                      apply_fields(v, w,
                                   {{"log_entries", field(c.latency.log_entries)},
                                    {"threshold_cycles", field(c.latency.threshold_cycles)},
                                    {"new_weight_num", field(c.latency.new_weight_num)},
                                    {"weight_den", field(c.latency.weight_den)}});
                    }},
                   {"merge",
                    [&](const ojson& v, const std::string& w) {
                      apply_fields(v, w,
                                   {{"table_entries", field(c.merge.table_entries)},
                                    {"table_ways", field(c.merge.table_ways)},
                                    {"max_distance", field(c.merge.max_distance)},
                                    {"ul_capacity", field(c.merge.ul_capacity)},
                                    {"wpb_entries", field(c.merge.wpb_entries)},
                                    {"wpb_ways", field(c.merge.wpb_ways)},
                                    {"wpb_contexts", field(c.merge.wpb_contexts)},
                                    {"wpb_fully_associative", field(c.merge.wpb_fully_associative)},
                                    {"cam_compare", field(c.merge.cam_compare)},
                                    {"initial_ctr", field(initial_ctr)},
                                    {"arch_reg_count", field(c.merge.arch_reg_count)}});
                    }},
                   {"policy", [&](const ojson& v, const std::string& w) { c.policy = parse_policy(json_get<std::string>(v, w)); }},
                   {"seed", field(c.seed)},
                   {"warmup", field(c.warmup)},
                   {"log_retired", field(c.log_retired)},
               });
  if (initial_ctr > kMergeCtrMax) throw ParseError("merge.initial_ctr", "must be in [0, 7]");
  c.merge.initial_ctr = static_cast<std::uint8_t>(initial_ctr);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError("", e.what());
  }
  return c;
}

RunConfig load_run_config(std::istream& in) { return run_config_from_json(parse_json_stream(in)); }

RunConfig load_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  try {
    return load_run_config(in);
  } catch (const ParseError& e) {
    rethrow_in_file(path, e);
  }
}

} // namespace reconverge
