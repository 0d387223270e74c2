#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "reconverge/types.hpp"

namespace reconverge {

/// Shifts one direction bit into a global history register.
constexpr std::uint64_t push_history(std::uint64_t ghist, bool taken) { return (ghist << 1) | (taken ? 1U : 0U); }

/// XOR-folds the low `length` bits of `ghist` down to `width` bits.
constexpr std::uint64_t fold_history(std::uint64_t ghist, unsigned length, unsigned width) {
  if (length == 0 || width == 0) return 0;
  const std::uint64_t h = length >= 64 ? ghist : ghist & ((std::uint64_t{1} << length) - 1);
  const std::uint64_t mask = (std::uint64_t{1} << width) - 1;
  std::uint64_t out = 0;
  for (unsigned shift = 0; shift < length; shift += width) out ^= (h >> shift) & mask;
  return out;
}

inline constexpr std::size_t kMaxTaggedTables = 8;

struct TageConfig {
  unsigned base_log_entries = 12;
  unsigned tagged_log_entries = 10;
  std::vector<unsigned> history_lengths{4, 8, 16, 32};
  unsigned tag_bits = 8;
};

struct TaggedEntry {
  std::uint16_t tag = 0;
  std::int8_t ctr = -1;  ///< 3-bit signed, [-4, 3]
  std::uint8_t useful = 0; ///< 2 bits
};

/// Everything the update needs from the matching predict call.
struct TagePrediction {
  bool dir = false;
  int provider_ctr = -1;
  bool is_weak = true;
  int provider = -1; ///< tagged table index, -1 = base
  bool alt_dir = false;
  std::uint32_t base_index = 0;
  std::array<std::uint32_t, 8> indices{};
  std::array<std::uint16_t, 8> tags{};
};

/// Small TAGE: bimodal base plus tagged tables with geometric histories.
/// Base counters are kept as signed 2-bit values in [-2, 1] so the weak
/// states are {-1, 0} for every provider.
class TageLite {
public:
  explicit TageLite(TageConfig cfg = {});

  TagePrediction predict(Pc pc, std::uint64_t ghist) const;
  void update(Pc pc, std::uint64_t ghist, bool outcome, const TagePrediction& pred);

  const TageConfig& config() const { return cfg_; }
  int base_ctr(std::uint32_t index) const { return base_[index]; }
  const TaggedEntry& entry(std::size_t table, std::uint32_t index) const { return tables_[table][index]; }
  TaggedEntry& entry_mut(std::size_t table, std::uint32_t index) { return tables_[table][index]; }
  std::size_t table_count() const { return tables_.size(); }

  static constexpr int kCtrMin = -4;
  static constexpr int kCtrMax = 3;
  static constexpr int kBaseMin = -2;
  static constexpr int kBaseMax = 1;
  static constexpr int kUsefulMax = 3;

private:
  std::uint32_t base_index(Pc pc) const;
  std::uint32_t tagged_index(Pc pc, std::uint64_t ghist, std::size_t table) const;
  std::uint16_t tagged_tag(Pc pc, std::uint64_t ghist, std::size_t table) const;

  TageConfig cfg_;
  std::vector<std::int8_t> base_;
  std::vector<std::vector<TaggedEntry>> tables_;
};

enum class JrsLevel { HighConf, NotHigh };

struct JrsConfig {
  unsigned log_entries = 12;
  unsigned history_bits = 12;
  unsigned threshold = 15;
};

/// JRS resetting-counter confidence table.
class JrsTable {
public:
  explicit JrsTable(JrsConfig cfg = {});

  JrsLevel confidence(Pc pc, std::uint64_t ghist) const;
  void update(Pc pc, std::uint64_t ghist, bool was_correct);

  unsigned counter(Pc pc, std::uint64_t ghist) const { return counters_[index(pc, ghist)]; }
  std::uint32_t index(Pc pc, std::uint64_t ghist) const;
  const JrsConfig& config() const { return cfg_; }

  static constexpr unsigned kMax = 15;

private:
  JrsConfig cfg_;
  std::vector<std::uint8_t> counters_;
};

} // namespace reconverge
