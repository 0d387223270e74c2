#pragma once

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "reconverge/program_model.hpp"

namespace testing {

using namespace reconverge;

inline std::string fixture(const std::string& name) { return std::string(RECONVERGE_FIXTURES) + "/" + name; }

inline InstrTemplate alu(std::initializer_list<unsigned> dests, std::initializer_list<unsigned> srcs = {}) {
  InstrTemplate t;
  t.cls = InstrClass::Alu;
  t.dests = RegSet::of(dests);
  t.srcs = RegSet::of(srcs);
  return t;
}

inline InstrTemplate branch(std::initializer_list<unsigned> srcs = {}) {
  InstrTemplate t;
  t.cls = InstrClass::Branch;
  t.srcs = RegSet::of(srcs);
  return t;
}

inline BasicBlock blk(BlockId id, std::vector<InstrTemplate> instrs, Terminator term) {
  BasicBlock b;
  b.id = id;
  b.instrs = std::move(instrs);
  b.term = term;
  return b;
}

/// `n` single-write ALU instructions followed by a halt.
inline ProgramModel straight_line(unsigned n) {
  ProgramModel m;
  std::vector<InstrTemplate> ins;
  for (unsigned i = 0; i < n; ++i) ins.push_back(alu({i % 16}, {(i + 1) % 16}));
  m.blocks.push_back(blk(0, ins, Halt{}));
  m.finalize();
  return m;
}

/// Single-block loop whose branch follows `src`, then a halt block.
inline ProgramModel self_loop(OutcomeSource src, unsigned body = 2) {
  ProgramModel m;
  std::vector<InstrTemplate> ins;
  for (unsigned i = 0; i < body; ++i) ins.push_back(alu({i + 1}, {i}));
  ins.push_back(branch({1}));
  m.blocks.push_back(blk(0, ins, CondBranch{0, 1, 0}));
  m.blocks.push_back(blk(1, {alu({0})}, Halt{}));
  m.sources.emplace(0, std::move(src));
  m.finalize();
  return m;
}

inline DynInstr dyn(Pc pc, std::initializer_list<unsigned> dests = {}) {
  DynInstr d;
  d.pc = pc;
  d.dests = RegSet::of(dests);
  return d;
}

} // namespace testing
