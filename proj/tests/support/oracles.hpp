#pragma once

// Independent reference implementations for property tests. Nothing here calls
// into the library code it checks.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/counterfactual.hpp"
#include "cfie/inference.hpp"
#include "cfie/metrics.hpp"

namespace oracle {

/// Random rooted tree: token order shuffled, each non-root attaches to an
/// earlier token in the shuffled order.
inline std::vector<int> random_heads(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> heads(n, cfie::kRoot);
  for (std::size_t k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    heads[static_cast<std::size_t>(order[k])] = order[pick(rng)];
  }
  return heads;
}

/// All-pairs tree distance by Floyd-Warshall over the undirected head graph.
inline std::vector<std::vector<int>> all_pairs(const std::vector<int>& heads) {
  const std::size_t n = heads.size();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    if (heads[i] >= 0) {
      d[i][static_cast<std::size_t>(heads[i])] = 1;
      d[static_cast<std::size_t>(heads[i])][i] = 1;
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

/// Tokens a strategy set replaces, from the written definitions: the
/// candidate itself, tokens at distance exactly 1 or 1..2 from it, or all.
inline std::vector<int> mask_set(const std::vector<int>& heads, const std::vector<int>& own, std::uint32_t flags) {
  using S = cfie::MaskStrategy;
  auto has = [&](S s) { return (flags & static_cast<std::uint32_t>(s)) != 0; };
  const auto d = all_pairs(heads);
  std::set<int> out;
  for (std::size_t t = 0; t < heads.size(); ++t) {
    int dist = std::numeric_limits<int>::max();
    for (int o : own) dist = std::min(dist, d[t][static_cast<std::size_t>(o)]);
    if (has(S::NullInput)) out.insert(static_cast<int>(t));
    if ((has(S::EntityOnly) || has(S::TokenPlusOneHop)) && dist == 0) out.insert(static_cast<int>(t));
    if ((has(S::OneHop) || has(S::TokenPlusOneHop)) && dist == 1) out.insert(static_cast<int>(t));
    if (has(S::TwoHop) && (dist == 1 || dist == 2)) out.insert(static_cast<int>(t));
  }
  return {out.begin(), out.end()};
}

struct Metrics {
  double mr = 0.0;
  double mf1 = 0.0;
  double micro = 0.0;
  bool defined = false;
};

/// Brute force from an explicit list of (gold, predicted) pairs, `none` for a
/// missing side.
inline Metrics metrics(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                       const std::vector<std::size_t>& subset) {
  Metrics m;
  double recall_sum = 0.0, f1_sum = 0.0;
  std::size_t used = 0;
  std::uint64_t tp_all = 0, gold_all = 0, pred_all = 0;
  for (std::size_t k : subset) {
    std::uint64_t tp = 0, gold = 0, pred = 0;
    for (const auto& [g, p] : pairs) {
      if (g == k) ++gold;
      if (p == k) ++pred;
      if (g == k && p == k) ++tp;
    }
    tp_all += tp;
    gold_all += gold;
    pred_all += pred;
    if (gold == 0) continue;
    ++used;
    const double r = static_cast<double>(tp) / static_cast<double>(gold);
    const double p = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    recall_sum += r;
    f1_sum += (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  }
  if (used == 0) return m;
  m.defined = true;
  m.mr = recall_sum / static_cast<double>(used);
  m.mf1 = f1_sum / static_cast<double>(used);
  if (tp_all > 0) {
    const double p = static_cast<double>(tp_all) / static_cast<double>(pred_all);
    const double r = static_cast<double>(tp_all) / static_cast<double>(gold_all);
    m.micro = 2.0 * p * r / (p + r);
  }
  return m;
}

/// Spans ascending, non-overlapping, non-empty, inside [0, n), typed.
inline bool well_formed(const std::vector<cfie::TaggedSpan>& spans, std::size_t n) {
  int last_end = 0;
  for (const auto& s : spans) {
    if (s.span.begin < last_end || s.span.end <= s.span.begin || s.span.end > static_cast<int>(n)) return false;
    if (s.type.empty()) return false;
    last_end = s.span.end;
  }
  return true;
}

/// Every decoded span must be backed by a legal tag run in the input.
inline bool spans_match_tags(const std::vector<cfie::TaggedSpan>& spans, const std::vector<std::string>& tags) {
  for (const auto& s : spans) {
    const int len = s.span.size();
    auto is = [&](int i, const std::string& prefix) { return tags[static_cast<std::size_t>(i)] == prefix + s.type; };
    if (len == 1) {
      if (!is(s.span.begin, "S-")) return false;
      continue;
    }
    if (!is(s.span.begin, "B-") || !is(s.span.end - 1, "E-")) return false;
    for (int i = s.span.begin + 1; i < s.span.end - 1; ++i)
      if (!is(i, "I-")) return false;
  }
  return true;
}

}  // namespace oracle
