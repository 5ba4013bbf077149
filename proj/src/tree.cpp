#include "cfie/tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "cfie/errors.hpp"

namespace cfie {

DepTree::DepTree(std::vector<int> heads, std::vector<int> deprels)
    : heads_(std::move(heads)), deprels_(std::move(deprels)) {
  if (!is_valid_tree(heads_)) throw StructureError("heads do not form a single-rooted tree");
  if (deprels_.empty()) deprels_.assign(heads_.size(), Vocab::kUnk);
  if (deprels_.size() != heads_.size()) throw DimensionError("deprel count differs from head count");
  adjacency_.resize(heads_.size());
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const int h = heads_[i];
    if (h == kRoot) {
      root_ = static_cast<int>(i);
      continue;
    }
    adjacency_[i].push_back(h);
    adjacency_[static_cast<std::size_t>(h)].push_back(static_cast<int>(i));
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

DepTree DepTree::of(const Sentence& sentence) {
  std::vector<int> deprels;
  deprels.reserve(sentence.size());
  for (const auto& t : sentence.tokens) deprels.push_back(t.deprel);
  return DepTree(sentence.heads(), std::move(deprels));
}

DepTree DepTree::flat(std::size_t n) {
  std::vector<int> heads(n, 0);
  if (n > 0) heads[0] = kRoot;
  return DepTree(std::move(heads));
}

std::vector<int> DepTree::distances(std::span<const int> sources) const {
  std::vector<int> dist(size(), -1);
  std::deque<int> queue;
  for (int s : sources) {
    if (s < 0 || static_cast<std::size_t>(s) >= size())
      throw IndexError("token " + std::to_string(s) + " outside tree of size " + std::to_string(size()));
    if (dist[static_cast<std::size_t>(s)] != 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : neighbors(u)) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

std::vector<int> khop_neighbors(const DepTree& tree, std::span<const int> sources, int k) {
  if (k < 1) throw UsageError("k-hop radius must be at least 1");
  const auto dist = tree.distances(sources);
  std::vector<int> out;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (dist[i] >= 1 && dist[i] <= k) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> span_tokens(Span span) {
  std::vector<int> out;
  for (int i = span.begin; i < span.end; ++i) out.push_back(i);
  return out;
}

std::vector<int> khop_neighbors(const DepTree& tree, Span span, int k) {
  if (span.begin < 0 || span.end > static_cast<int>(tree.size()) || span.begin >= span.end)
    throw IndexError("span " + std::to_string(span.begin) + ":" + std::to_string(span.end) + " invalid for tree of size " +
                     std::to_string(tree.size()));
  const auto tokens = span_tokens(span);
  return khop_neighbors(tree, tokens, k);
}

num::Array normalized_adjacency(const DepTree& tree) {
  const std::size_t n = tree.size();
  num::Array a(n, n);
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(tree.neighbors(static_cast<int>(i)).size() + 1));
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = inv_sqrt[i] * inv_sqrt[i];
    for (int j : tree.neighbors(static_cast<int>(i)))
      a(i, static_cast<std::size_t>(j)) = inv_sqrt[i] * inv_sqrt[static_cast<std::size_t>(j)];
  }
  return a;
}

}  // namespace cfie
