#pragma once

// Dynamic merge point prediction: the Wrong Path Buffer detects merge points
// by matching retired correct-path PCs against PCs captured from the squashed
// wrong path, the predictor table stores them, and the update list verifies
// each prediction against the retirement stream.

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "reconverge/program_model.hpp"
#include "reconverge/types.hpp"

namespace reconverge {

enum class UpdatePolicy { Plain, UpdateMax };

const char* to_string(UpdatePolicy p);

struct MergeConfig {
  unsigned table_entries = 128;
  unsigned table_ways = 4;
  unsigned max_distance = 100;
  unsigned ul_capacity = 8;
  unsigned wpb_entries = 128;
  unsigned wpb_ways = 4;
  unsigned wpb_contexts = 1;
  bool wpb_fully_associative = false;
  bool cam_compare = false; ///< shadow fully-associative store to count false negatives
  UpdatePolicy policy = UpdatePolicy::Plain;
  std::uint8_t initial_ctr = 4;
  unsigned arch_reg_count = 16;

  void validate() const;
};

inline constexpr std::uint8_t kMergeCtrMax = 7;

struct MergeEntry {
  Pc branch_pc = 0;
  Pc merge_pc = 0;
  std::uint32_t merge_distance = 1;
  RegSet indep_regs;
  std::uint8_t ctr = 4;
  std::uint64_t lru_stamp = 0;
  bool valid = false;
};

struct MergePrediction {
  Pc merge_pc = 0;
  std::uint32_t merge_distance = 0;
  RegSet indep_regs;
};

struct SlotRef {
  std::uint32_t set = 0;
  std::uint32_t way = 0;
  friend bool operator==(const SlotRef&, const SlotRef&) = default;
};

struct TableMatch {
  MergeEntry entry;
  SlotRef slot;
};

struct TableLookup {
  MergePrediction prediction;
  std::size_t selected = 0;        ///< index into matches
  std::vector<TableMatch> matches; ///< every entry whose branch_pc matched, in way order
};

struct InstallResult {
  SlotRef slot;
  bool refreshed = false; ///< (branch_pc, merge_pc) was already present
  bool evicted = false;
  MergeEntry victim;
};

/// Set-associative merge point predictor table.
class PredictorTable {
public:
  explicit PredictorTable(const MergeConfig& cfg);

  std::optional<TableLookup> predict(Pc pc) const;
  InstallResult install(const MergeEntry& fresh);

  std::uint32_t set_index(Pc branch_pc) const;
  const MergeEntry& at(SlotRef s) const { return slots_[s.set * ways_ + s.way]; }
  MergeEntry& at(SlotRef s) { return slots_[s.set * ways_ + s.way]; }
  std::optional<SlotRef> find(Pc branch_pc, Pc merge_pc) const;
  unsigned sets() const { return sets_; }
  unsigned ways() const { return ways_; }
  std::size_t valid_count() const;
  std::span<const MergeEntry> all() const { return slots_; }

private:
  unsigned sets_;
  unsigned ways_;
  std::uint64_t clock_ = 0;
  std::vector<MergeEntry> slots_;
};

/// One wrong-path PC captured in the WPB.
struct WpbSlot {
  Pc pc = 0;
  std::uint32_t wp_distance = 0;
  RegSet wp_regs;       ///< destinations of instructions at distances 1..wp_distance
  RegSet wp_prior_regs; ///< destinations at distances 1..wp_distance-1 (this instruction excluded)
  std::uint64_t lru = 0;
  bool valid = false;
};

/// Set-associative LRU store keyed by PC.
class WpbStore {
public:
  WpbStore(unsigned entries, unsigned ways);

  /// Returns true if a new entry was written. An existing entry for the PC is kept.
  bool insert(Pc pc, std::uint32_t distance, RegSet regs, RegSet prior_regs);
  const WpbSlot* lookup(Pc pc) const;
  std::size_t valid_count() const;
  std::size_t evictions() const { return evictions_; }

private:
  unsigned sets_;
  unsigned ways_;
  std::uint64_t clock_ = 0;
  std::size_t evictions_ = 0;
  std::vector<WpbSlot> slots_;
};

struct WpbContext {
  Pc tag = 0;
  bool valid = false;
  WpbStore store;
  std::uint32_t cp_distance = 0;
  RegSet cp_regs;
  std::uint32_t fill_attempts = 0;
  std::uint64_t owner = 0;     ///< fetch id of the mispredicted branch
  bool armed = false;          ///< probing starts once the owner branch retires
  bool shadow_enabled = false; ///< CAM-compare mode
  std::unordered_set<Pc> shadow;
  bool false_negative = false;

  explicit WpbContext(const MergeConfig& cfg);
};

/// Builds a WPB context from the squashed instructions younger than the branch.
WpbContext wpb_fill(Pc branch_pc, std::span<const DynInstr> rob_tail, const MergeConfig& cfg);

enum class ProbeKind { Continue, Hit, Exhausted };

struct ProbeResult {
  ProbeKind kind = ProbeKind::Continue;
  MergeEntry found; ///< valid when kind == Hit
};

ProbeResult wpb_probe(WpbContext& ctx, const DynInstr& retired, const MergeConfig& cfg);

enum class Verdict { Correct, WrongDistance, LoopBack, UnexpectedWrite };

const char* to_string(Verdict v);
constexpr bool is_correct(Verdict v) { return v == Verdict::Correct; }

struct UpdateListEntry {
  Pc branch_pc = 0;
  bool active = false;
  std::uint32_t age = 0;
  MergeEntry entry;
  RegSet observed_regs;
  SlotRef slot;
  std::uint64_t owner = 0;           ///< fetch id of the predicted branch instance
  bool selected = false;             ///< the entry whose prediction was used
  std::uint32_t predicted_distance = 0; ///< merge_distance at prediction time
};

struct Resolution {
  UpdateListEntry entry; ///< with counter and distance already updated
  Verdict verdict = Verdict::Correct;
  std::uint32_t age = 0;
};

/// Fully associative list of in-flight merge predictions.
class UpdateList {
public:
  UpdateList(unsigned capacity, unsigned max_distance, UpdatePolicy policy);

  /// Inserts the selected match first, then the others while room remains.
  /// Returns the number inserted; the selected entry is dropped only if the list is full.
  std::size_t insert(const TableLookup& lookup, Pc branch_pc, std::uint64_t owner);
  bool insert(const UpdateListEntry& e);

  void activate(std::uint64_t owner);
  /// Drops every entry whose owner is younger than `owner` (squashed instances).
  void discard_younger(std::uint64_t owner);

  std::vector<Resolution> on_retire(const DynInstr& retired);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t free_slots() const { return capacity_ - entries_.size(); }
  const std::vector<UpdateListEntry>& entries() const { return entries_; }

private:
  std::size_t capacity_;
  unsigned max_distance_;
  UpdatePolicy policy_;
  std::vector<UpdateListEntry> entries_;
};

/// Writes a resolved entry back into the table: counter change and, under
/// UPDATE_MAX, distance growth are applied to the live slot; if the slot was
/// reallocated meanwhile the entry is reinstalled through the normal policy.
void writeback(PredictorTable& table, const Resolution& res, UpdatePolicy policy);

struct MergeStats {
  std::uint64_t wpb_fills = 0;
  std::uint64_t wpb_exhausted = 0;
  std::uint64_t detections = 0;
  std::uint64_t installs = 0;
  std::uint64_t refreshes = 0;
  std::uint64_t evictions = 0;
  std::uint64_t lookups = 0;
  std::uint64_t table_misses = 0;
  std::uint64_t ul_inserts = 0;
  std::uint64_t ul_drops = 0;
  std::uint64_t false_negatives = 0;
  std::uint64_t resolutions = 0;
};

enum class MpStatus { None, Miss, Dropped, Predicted };

struct MpQuery {
  MpStatus status = MpStatus::None;
  MergePrediction prediction;
};

struct RetireOutcome {
  std::vector<MergeEntry> detections;
  std::vector<Resolution> resolutions;
};

/// The three structures wired together, as driven by the pipeline.
class MergePredictor {
public:
  explicit MergePredictor(MergeConfig cfg);

  MpQuery query(Pc branch_pc, std::uint64_t owner);
  void on_mispredict(Pc branch_pc, std::uint64_t owner, std::span<const DynInstr> rob_tail);
  void on_squash(std::uint64_t owner) { ul_.discard_younger(owner); }
  RetireOutcome on_retire(const DynInstr& retired, std::uint64_t fetch_id);

  const MergeConfig& config() const { return cfg_; }
  const MergeStats& stats() const { return stats_; }
  const PredictorTable& table() const { return table_; }
  const UpdateList& update_list() const { return ul_; }
  const std::vector<WpbContext>& contexts() const { return contexts_; }

private:
  MergeConfig cfg_;
  PredictorTable table_;
  UpdateList ul_;
  std::vector<WpbContext> contexts_;
  std::size_t next_context_ = 0;
  MergeStats stats_;
};

} // namespace reconverge
