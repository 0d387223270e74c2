#include "reconverge/events.hpp"

#include <array>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "reconverge/json_util.hpp"

namespace reconverge {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array kEventNames{"branch_predicted", "branch_resolved", "flush",          "wpb_detected",
                                 "mp_predicted",     "mp_resolved",     "branch_retired", "retired"};

template <typename Enum, std::size_t N>
Enum enum_from(const std::string& s, const std::array<const char*, N>& names, const std::string& where) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<Enum>(i);
  throw ParseError(where, "unknown value '" + s + "'");
}

constexpr std::array kConfNames{"low", "med", "high"};
constexpr std::array kLatNames{"low", "high"};
constexpr std::array kMpNames{"none", "miss", "dropped", "predicted"};
constexpr std::array kVerdictNames{"correct", "wrong_distance", "loop_back", "unexpected_write"};

} // namespace

const char* to_string(EventKind k) { return kEventNames[static_cast<std::size_t>(k)]; }
const char* to_string(MpStatus s) { return kMpNames[static_cast<std::size_t>(s)]; }

void write_event_log(const SimEventLog& log, std::ostream& out) {
  for (const Event& e : log) {
    ojson j;
    j["k"] = to_string(e.kind);
    j["cycle"] = e.cycle;
    j["index"] = e.index;
    j["pc"] = e.pc;
    if (e.wrong_path) j["wp"] = true;
    switch (e.kind) {
    case EventKind::BranchPredicted:
      j["taken"] = e.taken;
      j["conf"] = to_string(e.conf);
      j["lat"] = to_string(e.lat);
      j["use_mp"] = e.use_mp;
      j["mp"] = to_string(e.mp);
      break;
    case EventKind::BranchResolved:
      j["mispredicted"] = e.mispredicted;
      j["latency"] = e.latency;
      break;
    case EventKind::Flush:
      j["squashed"] = e.squashed;
      break;
    case EventKind::WpbDetected:
      j["merge_pc"] = e.merge_pc;
      j["distance"] = e.distance;
      break;
    case EventKind::MpPredicted:
      j["merge_pc"] = e.merge_pc;
      j["distance"] = e.distance;
      break;
    case EventKind::MpResolved:
      j["merge_pc"] = e.merge_pc;
      j["distance"] = e.distance;
      j["age"] = e.age;
      j["new_distance"] = e.new_distance;
      j["verdict"] = to_string(e.verdict);
      break;
    case EventKind::BranchRetired:
      j["taken"] = e.taken;
      j["mispredicted"] = e.mispredicted;
      j["use_mp"] = e.use_mp;
      j["conf"] = to_string(e.conf);
      j["lat"] = to_string(e.lat);
      j["mp"] = to_string(e.mp);
      if (e.mp == MpStatus::Predicted) {
        j["merge_pc"] = e.merge_pc;
        j["distance"] = e.distance;
      }
      break;
    case EventKind::Retired:
      break;
    }
    out << j.dump() << '\n';
  }
}

SimEventLog read_event_log(std::istream& in) {
  SimEventLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where, e.what());
    }
    Event e;
    e.kind = enum_from<EventKind>(json_get<std::string>(json_at(j, "k", where), where + ".k"), kEventNames, where + ".k");
    e.cycle = json_get<std::uint64_t>(json_at(j, "cycle", where), where + ".cycle");
    e.index = json_get<std::uint64_t>(json_at(j, "index", where), where + ".index");
    e.pc = json_get<std::uint64_t>(json_at(j, "pc", where), where + ".pc");
    e.wrong_path = j.value("wp", false);
    e.taken = j.value("taken", false);
    e.mispredicted = j.value("mispredicted", false);
    e.use_mp = j.value("use_mp", false);
    if (j.contains("conf")) e.conf = enum_from<ConfLevel>(j["conf"].get<std::string>(), kConfNames, where + ".conf");
    if (j.contains("lat")) e.lat = enum_from<LatLevel>(j["lat"].get<std::string>(), kLatNames, where + ".lat");
    if (j.contains("mp")) e.mp = enum_from<MpStatus>(j["mp"].get<std::string>(), kMpNames, where + ".mp");
    if (j.contains("verdict")) e.verdict = enum_from<Verdict>(j["verdict"].get<std::string>(), kVerdictNames, where + ".verdict");
    e.merge_pc = j.value("merge_pc", Pc{0});
    e.distance = j.value("distance", 0U);
    e.age = j.value("age", 0U);
    e.new_distance = j.value("new_distance", 0U);
    e.latency = j.value("latency", std::uint64_t{0});
    e.squashed = j.value("squashed", std::uint64_t{0});
    log.push_back(e);
  }
  return log;
}

} // namespace reconverge
