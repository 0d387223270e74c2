#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconverge {

using Pc = std::uint64_t;
using BlockId = std::uint32_t;
using SiteId = std::uint32_t;

inline constexpr unsigned kMaxArchRegs = 64;

/// Set of architectural register ids, at most 64 registers.
class RegSet {
public:
  constexpr RegSet() = default;
  constexpr explicit RegSet(std::uint64_t bits) : bits_(bits) {}

  static constexpr RegSet all(unsigned reg_count) {
    return RegSet(reg_count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << reg_count) - 1));
  }
  static RegSet of(std::initializer_list<unsigned> regs) {
    RegSet s;
    for (unsigned r : regs) s.insert(r);
    return s;
  }

  constexpr void insert(unsigned reg) { bits_ |= std::uint64_t{1} << reg; }
  constexpr bool contains(unsigned reg) const { return (bits_ >> reg) & 1U; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr unsigned size() const { return static_cast<unsigned>(std::popcount(bits_)); }
  constexpr std::uint64_t bits() const { return bits_; }

  constexpr bool subset_of(RegSet other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr bool intersects(RegSet other) const { return (bits_ & other.bits_) != 0; }
  /// Complement restricted to registers [0, reg_count).
  constexpr RegSet complement(unsigned reg_count) const { return RegSet(~bits_ & all(reg_count).bits_); }
  /// Highest register id + 1, 0 when empty.
  constexpr unsigned span() const { return bits_ == 0 ? 0U : 64U - static_cast<unsigned>(std::countl_zero(bits_)); }

  std::vector<unsigned> to_vector() const {
    std::vector<unsigned> out;
    for (unsigned r = 0; r < 64; ++r)
      if (contains(r)) out.push_back(r);
    return out;
  }

  constexpr RegSet& operator|=(RegSet o) { bits_ |= o.bits_; return *this; }
  constexpr RegSet& operator&=(RegSet o) { bits_ &= o.bits_; return *this; }
  friend constexpr RegSet operator|(RegSet a, RegSet b) { return RegSet(a.bits_ | b.bits_); }
  friend constexpr RegSet operator&(RegSet a, RegSet b) { return RegSet(a.bits_ & b.bits_); }
  friend constexpr bool operator==(RegSet, RegSet) = default;

private:
  std::uint64_t bits_ = 0;
};

/// Raised when stepping or loading reaches a structurally invalid model.
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parse failure in a model, config or sidecar file. `where` names the field path.
class ParseError : public std::runtime_error {
public:
  ParseError(std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

private:
  std::string where_;
};

/// Saturating counter helpers shared by the predictor structures.
template <typename T>
constexpr T sat_inc(T v, T hi) { return v < hi ? static_cast<T>(v + 1) : hi; }
template <typename T>
constexpr T sat_dec(T v, T lo) { return v > lo ? static_cast<T>(v - 1) : lo; }

/// 64-bit finalizer (xorshift-multiply) used for table set indexing.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

} // namespace reconverge
