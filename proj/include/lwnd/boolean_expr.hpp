#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lwnd {

/// Product term over variables 0..n-1: a variable appears iff its `care` bit
/// is set, positively iff its `value` bit is set.
struct Implicant {
  std::uint32_t value = 0;
  std::uint32_t care = 0;

  bool covers(std::uint32_t assignment) const { return (assignment & care) == value; }
  int literals() const;
  friend bool operator==(const Implicant&, const Implicant&) = default;
};

/// Two-level sum of products. No terms is constant 0; an empty term is constant 1.
struct BooleanExpr {
  std::vector<std::string> names;
  std::vector<Implicant> terms;

  int variables() const { return static_cast<int>(names.size()); }
  bool evaluate(std::uint32_t assignment) const;
  int literal_count() const;
  /// Positive literals first within each term; UTF-8 connectives.
  std::string to_string() const;
};

inline constexpr int kMaxMinimizeVariables = 16;

/// Minimal sum of products of a truth table indexed by assignment (bit i =
/// variable i): prime implicants by Quine-McCluskey, then a minimum cover.
BooleanExpr minimize(const std::vector<bool>& truth_table, std::vector<std::string> names);

/// Prime implicants of the on-set, in canonical order.
std::vector<Implicant> prime_implicants(const std::vector<bool>& truth_table, int variables);

}  // namespace lwnd
