#include "reconverge/branch_pred.hpp"

#include <stdexcept>

namespace reconverge {

TageLite::TageLite(TageConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_log_entries == 0 || cfg_.base_log_entries > 24 || cfg_.tagged_log_entries == 0 ||
      cfg_.tagged_log_entries > 24 || cfg_.tag_bits == 0 || cfg_.tag_bits > 16)
    throw std::invalid_argument("tage geometry out of range");
  if (cfg_.history_lengths.size() > kMaxTaggedTables) throw std::invalid_argument("too many tagged tables");
  for (std::size_t i = 0; i < cfg_.history_lengths.size(); ++i) {
    if (cfg_.history_lengths[i] == 0 || cfg_.history_lengths[i] > 64) throw std::invalid_argument("tage history length out of range");
    if (i > 0 && cfg_.history_lengths[i] <= cfg_.history_lengths[i - 1])
      throw std::invalid_argument("tage history lengths must increase");
  }
  base_.assign(std::size_t{1} << cfg_.base_log_entries, -1);
  tables_.assign(cfg_.history_lengths.size(), std::vector<TaggedEntry>(std::size_t{1} << cfg_.tagged_log_entries));
}

std::uint32_t TageLite::base_index(Pc pc) const {
  return static_cast<std::uint32_t>(pc & ((std::uint64_t{1} << cfg_.base_log_entries) - 1));
}

std::uint32_t TageLite::tagged_index(Pc pc, std::uint64_t ghist, std::size_t table) const {
  const unsigned w = cfg_.tagged_log_entries;
  const std::uint64_t h = fold_history(ghist, cfg_.history_lengths[table], w);
  const std::uint64_t x = pc ^ (pc >> w) ^ h ^ (static_cast<std::uint64_t>(table) << (w > 2 ? w - 2 : 0));
  return static_cast<std::uint32_t>(x & ((std::uint64_t{1} << w) - 1));
}

std::uint16_t TageLite::tagged_tag(Pc pc, std::uint64_t ghist, std::size_t table) const {
  const unsigned w = cfg_.tag_bits;
  const unsigned len = cfg_.history_lengths[table];
  const std::uint64_t x = pc ^ (pc >> 3) ^ fold_history(ghist, len, w) ^ (fold_history(ghist, len, w - 1) << 1);
  return static_cast<std::uint16_t>(x & ((std::uint64_t{1} << w) - 1));
}

TagePrediction TageLite::predict(Pc pc, std::uint64_t ghist) const {
  TagePrediction p;
  p.base_index = base_index(pc);
  const std::size_t n = tables_.size();
  int provider = -1;
  int alt = -1;
  for (std::size_t t = 0; t < n; ++t) {
    p.indices[t] = tagged_index(pc, ghist, t);
    p.tags[t] = tagged_tag(pc, ghist, t);
  }
  for (int t = static_cast<int>(n) - 1; t >= 0; --t) {
    if (tables_[t][p.indices[t]].tag == p.tags[t]) {
      if (provider < 0) {
        provider = t;
      } else {
        alt = t;
        break;
      }
    }
  }
  const int base_ctr = base_[p.base_index];
  p.provider = provider;
  p.provider_ctr = provider >= 0 ? tables_[provider][p.indices[provider]].ctr : base_ctr;
  p.dir = p.provider_ctr >= 0;
  p.is_weak = p.provider_ctr == -1 || p.provider_ctr == 0;
  p.alt_dir = (alt >= 0 ? tables_[alt][p.indices[alt]].ctr : base_ctr) >= 0;
  return p;
}

void TageLite::update(Pc pc, std::uint64_t ghist, bool outcome, const TagePrediction& pred) {
  (void)pc;
  (void)ghist;
  const std::size_t n = tables_.size();

  if (pred.dir != outcome && pred.provider + 1 < static_cast<int>(n)) {
    int chosen = -1;
    for (std::size_t t = static_cast<std::size_t>(pred.provider + 1); t < n; ++t) {
      if (tables_[t][pred.indices[t]].useful == 0) {
        chosen = static_cast<int>(t);
        break;
      }
    }
    if (chosen >= 0) {
      TaggedEntry& e = tables_[chosen][pred.indices[chosen]];
      e.tag = pred.tags[chosen];
      e.ctr = outcome ? 0 : -1;
      e.useful = 0;
    } else {
      for (std::size_t t = static_cast<std::size_t>(pred.provider + 1); t < n; ++t) {
        TaggedEntry& e = tables_[t][pred.indices[t]];
        e.useful = sat_dec<std::uint8_t>(e.useful, 0);
      }
    }
  }

  if (pred.provider >= 0) {
    TaggedEntry& e = tables_[pred.provider][pred.indices[pred.provider]];
    // The entry may have been reallocated between predict and update.
    if (e.tag == pred.tags[pred.provider]) {
      e.ctr = outcome ? sat_inc<std::int8_t>(e.ctr, kCtrMax) : sat_dec<std::int8_t>(e.ctr, kCtrMin);
      if (pred.dir != pred.alt_dir)
        e.useful = pred.dir == outcome ? sat_inc<std::uint8_t>(e.useful, kUsefulMax) : sat_dec<std::uint8_t>(e.useful, 0);
    }
  } else {
    std::int8_t& c = base_[pred.base_index];
    c = outcome ? sat_inc<std::int8_t>(c, kBaseMax) : sat_dec<std::int8_t>(c, kBaseMin);
  }
}

JrsTable::JrsTable(JrsConfig cfg) : cfg_(cfg) {
  if (cfg_.log_entries == 0 || cfg_.log_entries > 24) throw std::invalid_argument("jrs table size out of range");
  if (cfg_.threshold > kMax) throw std::invalid_argument("jrs threshold above counter maximum");
  counters_.assign(std::size_t{1} << cfg_.log_entries, 0);
}

std::uint32_t JrsTable::index(Pc pc, std::uint64_t ghist) const {
  const std::uint64_t h = fold_history(ghist, cfg_.history_bits, cfg_.log_entries);
  return static_cast<std::uint32_t>((pc ^ h) & ((std::uint64_t{1} << cfg_.log_entries) - 1));
}

JrsLevel JrsTable::confidence(Pc pc, std::uint64_t ghist) const {
  return counters_[index(pc, ghist)] >= cfg_.threshold ? JrsLevel::HighConf : JrsLevel::NotHigh;
}

void JrsTable::update(Pc pc, std::uint64_t ghist, bool was_correct) {
  std::uint8_t& c = counters_[index(pc, ghist)];
  c = was_correct ? sat_inc<std::uint8_t>(c, kMax) : 0;
}

} // namespace reconverge
