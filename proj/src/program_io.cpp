#include <fstream>
#include <sstream>

#include "json.hpp"
#include "reconverge/json_util.hpp"
#include "reconverge/program_model.hpp"

namespace reconverge {

using ojson = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

InstrClass parse_class(const std::string& s, const std::string& where) {
  if (s == "alu") return InstrClass::Alu;
  if (s == "load") return InstrClass::Load;
  if (s == "store") return InstrClass::Store;
  if (s == "branch") return InstrClass::Branch;
  if (s == "nop") return InstrClass::Nop;
  throw ParseError(where, "unknown instruction class '" + s + "'");
}

ojson latency_to_json(const LatencyClass& lat) {
  return std::visit(overloaded{
                        [](const FixedLatency& f) { return ojson{{"fixed", f.cycles}}; },
                        [](const LoadMissLatency& l) {
                          return ojson{{"load_miss", {{"p", l.miss_prob}, {"hit", l.hit_cycles}, {"miss", l.miss_cycles}}}};
                        },
                    },
                    lat);
}

LatencyClass latency_from_json(const ojson& j, const std::string& where) {
  if (!j.is_object() || j.size() != 1) throw ParseError(where, "latency must be an object with exactly one tag");
  const auto it = j.begin();
  const std::string tag = it.key();
  const ojson& body = it.value();
  if (tag == "fixed") return FixedLatency{json_get<std::uint32_t>(body, where + ".fixed")};
  if (tag == "load_miss") {
    LoadMissLatency l;
    l.miss_prob = json_get<double>(json_at(body, "p", where + ".load_miss"), where + ".load_miss.p");
    l.hit_cycles = json_get<std::uint32_t>(json_at(body, "hit", where + ".load_miss"), where + ".load_miss.hit");
    l.miss_cycles = json_get<std::uint32_t>(json_at(body, "miss", where + ".load_miss"), where + ".load_miss.miss");
    return l;
  }
  throw ParseError(where, "unknown latency_class tag '" + tag + "'");
}

ojson regs_to_json(RegSet r) {
  ojson a = ojson::array();
  for (unsigned x : r.to_vector()) a.push_back(x);
  return a;
}

ojson term_to_json(const Terminator& t) {
  return std::visit(overloaded{
                        [](const Fallthrough&) { return ojson{{"kind", "fallthrough"}}; },
                        [](const CondBranch& c) {
                          return ojson{{"kind", "cond"}, {"taken", c.taken}, {"not_taken", c.not_taken}, {"source", c.site}};
                        },
                        [](const Jump& j) { return ojson{{"kind", "jump"}, {"target", j.target}}; },
                        [](const Halt&) { return ojson{{"kind", "halt"}}; },
                    },
                    t);
}

Terminator term_from_json(const ojson& j, const std::string& where) {
  const auto kind = json_get<std::string>(json_at(j, "kind", where), where + ".kind");
  if (kind == "fallthrough") return Fallthrough{};
  if (kind == "halt") return Halt{};
  if (kind == "jump") return Jump{json_get<BlockId>(json_at(j, "target", where), where + ".target")};
  if (kind == "cond")
    return CondBranch{json_get<BlockId>(json_at(j, "taken", where), where + ".taken"),
                      json_get<BlockId>(json_at(j, "not_taken", where), where + ".not_taken"),
                      json_get<SiteId>(json_at(j, "source", where), where + ".source")};
  throw ParseError(where + ".kind", "unknown terminator kind '" + kind + "'");
}

ojson source_to_json(SiteId id, const OutcomeSource& s) {
  ojson j{{"id", id}};
  std::visit(overloaded{
                 [&](const Bernoulli& b) {
                   j["kind"] = "bernoulli";
                   j["bias"] = b.bias;
                   j["seed"] = b.seed;
                 },
                 [&](const Pattern& p) {
                   j["kind"] = "pattern";
                   std::string bits;
                   for (bool b : p.bits) bits.push_back(b ? '1' : '0');
                   j["bits"] = bits;
                 },
                 [&](const AlwaysTaken&) { j["kind"] = "always_taken"; },
                 [&](const AlwaysNotTaken&) { j["kind"] = "always_not_taken"; },
             },
             s);
  return j;
}

OutcomeSource source_from_json(const ojson& j, const std::string& where) {
  const auto kind = json_get<std::string>(json_at(j, "kind", where), where + ".kind");
  if (kind == "bernoulli") {
    Bernoulli b;
    b.bias = json_get<double>(json_at(j, "bias", where), where + ".bias");
    b.seed = j.contains("seed") ? json_get<std::uint64_t>(j["seed"], where + ".seed") : 0;
    return b;
  }
  if (kind == "pattern") {
    Pattern p;
    const auto bits = json_get<std::string>(json_at(j, "bits", where), where + ".bits");
    for (char c : bits) {
      if (c != '0' && c != '1') throw ParseError(where + ".bits", "pattern must contain only 0 and 1");
      p.bits.push_back(c == '1');
    }
    return p;
  }
  if (kind == "always_taken") return AlwaysTaken{};
  if (kind == "always_not_taken") return AlwaysNotTaken{};
  throw ParseError(where + ".kind", "unknown source kind '" + kind + "'");
}

} // namespace

void save_model(const ProgramModel& model, std::ostream& sink) {
  ojson j;
  j["format"] = 1;
  j["arch_reg_count"] = model.arch_reg_count;
  j["entry"] = model.entry;
  ojson blocks = ojson::array();
  for (const auto& b : model.blocks) {
    ojson instrs = ojson::array();
    for (const auto& ins : b.instrs)
      instrs.push_back(ojson::array({to_string(ins.cls), regs_to_json(ins.dests), regs_to_json(ins.srcs), latency_to_json(ins.latency)}));
    blocks.push_back(ojson{{"id", b.id}, {"instrs", std::move(instrs)}, {"term", term_to_json(b.term)}});
  }
  j["blocks"] = std::move(blocks);
  ojson sources = ojson::array();
  for (const auto& [id, s] : model.sources) sources.push_back(source_to_json(id, s));
  j["sources"] = std::move(sources);
  sink << j.dump(1) << '\n';
}

ProgramModel load_model(std::istream& source) {
  const ojson j = parse_json_stream(source);
  if (!j.is_object()) throw ParseError("", "model file must be a JSON object");
  const auto fmt = json_get<int>(json_at(j, "format", ""), "format");
  if (fmt != 1) throw ParseError("format", "unsupported format version " + std::to_string(fmt));

  ProgramModel m;
  m.arch_reg_count = j.contains("arch_reg_count") ? json_get<unsigned>(j["arch_reg_count"], "arch_reg_count") : 16;
  m.entry = json_get<BlockId>(json_at(j, "entry", ""), "entry");

  const auto& blocks = json_at(j, "blocks", "");
  if (!blocks.is_array()) throw ParseError("blocks", "expected an array");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string where = "blocks[" + std::to_string(b) + "]";
    const auto& jb = blocks[b];
    BasicBlock blk;
    blk.id = jb.contains("id") ? json_get<BlockId>(jb["id"], where + ".id") : static_cast<BlockId>(b);
    const auto& instrs = json_at(jb, "instrs", where);
    if (!instrs.is_array()) throw ParseError(where + ".instrs", "expected an array");
    for (std::size_t i = 0; i < instrs.size(); ++i) {
      const std::string iw = where + ".instrs[" + std::to_string(i) + "]";
      const auto& ji = instrs[i];
      if (!ji.is_array() || ji.size() != 4) throw ParseError(iw, "instruction must be [class, dests, srcs, latency]");
      InstrTemplate ins;
      ins.cls = parse_class(json_get<std::string>(ji[0], iw + "[0]"), iw + "[0]");
      ins.dests = parse_regs(ji[1], iw + "[1]");
      ins.srcs = parse_regs(ji[2], iw + "[2]");
      ins.latency = latency_from_json(ji[3], iw + "[3]");
      blk.instrs.push_back(ins);
    }
    blk.term = term_from_json(json_at(jb, "term", where), where + ".term");
    m.blocks.push_back(std::move(blk));
  }

  if (j.contains("sources")) {
    const auto& sources = j["sources"];
    if (!sources.is_array()) throw ParseError("sources", "expected an array");
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const std::string where = "sources[" + std::to_string(s) + "]";
      const auto id = json_get<SiteId>(json_at(sources[s], "id", where), where + ".id");
      if (m.sources.contains(id)) throw ParseError(where + ".id", "duplicate source id " + std::to_string(id));
      m.sources.emplace(id, source_from_json(sources[s], where));
    }
  }
  m.finalize();
  return m;
}

ProgramModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  try {
    return load_model(in);
  } catch (const ParseError& e) {
    rethrow_in_file(path, e);
  }
}

void save_model_file(const ProgramModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_model(model, out);
}

} // namespace reconverge
