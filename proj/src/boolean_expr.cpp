#include "lwnd/boolean_expr.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <set>
#include <utility>

#include "lwnd/errors.hpp"

namespace lwnd {

int Implicant::literals() const { return std::popcount(care); }

bool BooleanExpr::evaluate(std::uint32_t assignment) const {
  return std::any_of(terms.begin(), terms.end(), [assignment](const Implicant& t) { return t.covers(assignment); });
}

int BooleanExpr::literal_count() const {
  int n = 0;
  for (const auto& t : terms) n += t.literals();
  return n;
}

std::string BooleanExpr::to_string() const {
  if (terms.empty()) return "0";
  for (const auto& t : terms)
    if (t.care == 0) return "1";
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Implicant& t = terms[i];
    std::vector<std::string> lits;
    for (int v = 0; v < variables(); ++v)
      if ((t.care >> v & 1u) && (t.value >> v & 1u)) lits.push_back(names[static_cast<std::size_t>(v)]);
    for (int v = 0; v < variables(); ++v)
      if ((t.care >> v & 1u) && !(t.value >> v & 1u)) lits.push_back("¬" + names[static_cast<std::size_t>(v)]);
    std::string term;
    for (std::size_t k = 0; k < lits.size(); ++k) term += (k ? " ∧ " : "") + lits[k];
    if (terms.size() > 1 && lits.size() > 1) term = "(" + term + ")";
    out += (i ? " ∨ " : "") + term;
  }
  return out;
}

namespace {

std::string order_key(const Implicant& t, int n) {
  std::string key;
  for (int v = 0; v < n; ++v) key += !(t.care >> v & 1u) ? '2' : ((t.value >> v & 1u) ? '0' : '1');
  return key;
}

void canonical_sort(std::vector<Implicant>& terms, int n) {
  std::sort(terms.begin(), terms.end(), [n](const Implicant& a, const Implicant& b) {
    if (a.literals() != b.literals()) return a.literals() < b.literals();
    return order_key(a, n) < order_key(b, n);
  });
}

struct Cost {
  std::size_t terms = std::numeric_limits<std::size_t>::max();
  int literals = 0;
  bool operator<(const Cost& o) const { return terms != o.terms ? terms < o.terms : literals < o.literals; }
};

class CoverSearch {
 public:
  CoverSearch(const std::vector<Implicant>& primes, const std::vector<std::uint32_t>& minterms)
      : primes_(primes), minterms_(minterms) {}

  std::vector<std::size_t> solve() {
    std::vector<std::size_t> chosen;
    std::vector<int> covered(minterms_.size(), 0);
    recurse(chosen, covered, 0);
    return best_;
  }

 private:
  void recurse(std::vector<std::size_t>& chosen, std::vector<int>& covered, int literals) {
    if (++nodes_ > kNodeLimit && !best_.empty()) return;
    Cost current{chosen.size(), literals};
    if (!best_.empty() && !(current < best_cost_)) return;
    std::size_t first = minterms_.size();
    for (std::size_t m = 0; m < minterms_.size(); ++m)
      if (!covered[m]) {
        first = m;
        break;
      }
    if (first == minterms_.size()) {
      best_ = chosen;
      best_cost_ = current;
      return;
    }
    if (!best_.empty() && chosen.size() + 1 > best_cost_.terms) return;
    std::vector<std::size_t> options;
    for (std::size_t p = 0; p < primes_.size(); ++p)
      if (primes_[p].covers(minterms_[first])) options.push_back(p);
    std::sort(options.begin(), options.end(), [this](std::size_t a, std::size_t b) {
      return primes_[a].literals() < primes_[b].literals();
    });
    for (std::size_t p : options) {
      chosen.push_back(p);
      for (std::size_t m = 0; m < minterms_.size(); ++m)
        if (primes_[p].covers(minterms_[m])) ++covered[m];
      recurse(chosen, covered, literals + primes_[p].literals());
      for (std::size_t m = 0; m < minterms_.size(); ++m)
        if (primes_[p].covers(minterms_[m])) --covered[m];
      chosen.pop_back();
    }
  }

  static constexpr long kNodeLimit = 2'000'000;
  const std::vector<Implicant>& primes_;
  const std::vector<std::uint32_t>& minterms_;
  std::vector<std::size_t> best_;
  Cost best_cost_;
  long nodes_ = 0;
};

}  // namespace

std::vector<Implicant> prime_implicants(const std::vector<bool>& truth_table, int variables) {
  if (variables < 0 || variables > kMaxMinimizeVariables)
    throw ValidationError("prime_implicants: at most " + std::to_string(kMaxMinimizeVariables) + " variables");
  if (truth_table.size() != (std::size_t{1} << variables))
    throw ValidationError("prime_implicants: truth table size does not match variable count");
  const std::uint32_t full = variables == 32 ? ~0u : ((1u << variables) - 1u);
  std::set<std::pair<std::uint32_t, std::uint32_t>> level;  // (care, value)
  for (std::uint32_t a = 0; a < truth_table.size(); ++a)
    if (truth_table[a]) level.insert({full, a});
  std::vector<Implicant> primes;
  while (!level.empty()) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> next;
    std::set<std::pair<std::uint32_t, std::uint32_t>> merged;
    for (const auto& [care, value] : level)
      for (int v = 0; v < variables; ++v) {
        const std::uint32_t bit = 1u << v;
        if (!(care & bit) || (value & bit)) continue;
        const auto partner = std::make_pair(care, value | bit);
        if (!level.count(partner)) continue;
        next.insert({care & ~bit, value});
        merged.insert({care, value});
        merged.insert(partner);
      }
    for (const auto& t : level)
      if (!merged.count(t)) primes.push_back({t.second, t.first});
    level = std::move(next);
  }
  canonical_sort(primes, variables);
  return primes;
}

BooleanExpr minimize(const std::vector<bool>& truth_table, std::vector<std::string> names) {
  const int n = static_cast<int>(names.size());
  BooleanExpr expr;
  expr.names = std::move(names);
  const std::vector<Implicant> primes = prime_implicants(truth_table, n);
  std::vector<std::uint32_t> minterms;
  for (std::uint32_t a = 0; a < truth_table.size(); ++a)
    if (truth_table[a]) minterms.push_back(a);
  if (minterms.empty()) return expr;

  // Essential primes first, then an exact search over what remains.
  std::vector<bool> taken(primes.size(), false);
  for (std::uint32_t m : minterms) {
    std::size_t count = 0, last = 0;
    for (std::size_t p = 0; p < primes.size(); ++p)
      if (primes[p].covers(m)) {
        ++count;
        last = p;
      }
    if (count == 1) taken[last] = true;
  }
  std::vector<std::uint32_t> remaining;
  for (std::uint32_t m : minterms) {
    bool covered = false;
    for (std::size_t p = 0; p < primes.size() && !covered; ++p) covered = taken[p] && primes[p].covers(m);
    if (!covered) remaining.push_back(m);
  }
  std::vector<Implicant> candidates;
  for (std::size_t p = 0; p < primes.size(); ++p) {
    if (taken[p]) {
      expr.terms.push_back(primes[p]);
      continue;
    }
    candidates.push_back(primes[p]);
  }
  if (!remaining.empty()) {
    CoverSearch search(candidates, remaining);
    for (std::size_t p : search.solve()) expr.terms.push_back(candidates[p]);
  }
  canonical_sort(expr.terms, n);
  return expr;
}

}  // namespace lwnd
