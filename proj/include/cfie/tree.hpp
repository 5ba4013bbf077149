#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/numerics.hpp"

namespace cfie {

/// Validated dependency tree with symmetric neighbour lists.
class DepTree {
 public:
  /// Throws StructureError unless `heads` is a single-rooted tree.
  explicit DepTree(std::vector<int> heads, std::vector<int> deprels = {});
  static DepTree of(const Sentence& sentence);
  /// Every token attached to the first, which is the root.
  static DepTree flat(std::size_t n);

  std::size_t size() const { return heads_.size(); }
  int root() const { return root_; }
  const std::vector<int>& heads() const { return heads_; }
  const std::vector<int>& deprels() const { return deprels_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }

  /// Undirected distance from the nearest source to every token; -1 if unreachable.
  std::vector<int> distances(std::span<const int> sources) const;

 private:
  std::vector<int> heads_;
  std::vector<int> deprels_;
  std::vector<std::vector<int>> adjacency_;
  int root_ = 0;
};

/// Tokens at undirected distance 1..k from any token in `sources`, ascending.
/// Sources themselves are never included.
std::vector<int> khop_neighbors(const DepTree& tree, std::span<const int> sources, int k);
std::vector<int> khop_neighbors(const DepTree& tree, Span span, int k);

std::vector<int> span_tokens(Span span);

/// D^-1/2 (A + I) D^-1/2 over undirected tree edges.
num::Array normalized_adjacency(const DepTree& tree);

}  // namespace cfie
