#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/scm.hpp"
#include "cfie/tree.hpp"

namespace cfie {

/// Mask strategies combine as bit flags.
enum class MaskStrategy : std::uint32_t {
  None = 0,
  EntityOnly = 1u << 0,
  OneHop = 1u << 1,
  TwoHop = 1u << 2,
  TokenPlusOneHop = 1u << 3,
  NullInput = 1u << 4,
  FeatureNER = 1u << 5,
  FeaturePOS = 1u << 6,
};

struct MaskSpec {
  std::uint32_t flags = 0;

  MaskSpec() = default;
  MaskSpec(MaskStrategy s) : flags(static_cast<std::uint32_t>(s)) {}  // NOLINT(google-explicit-constructor)

  bool has(MaskStrategy s) const { return (flags & static_cast<std::uint32_t>(s)) != 0; }
  bool empty() const { return flags == 0; }
  MaskSpec operator|(MaskSpec other) const {
    MaskSpec m;
    m.flags = flags | other.flags;
    return m;
  }
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;

  /// Comma list of entity, one-hop, two-hop, token+1hop, null, feature-ner,
  /// feature-pos or none. Throws UsageError.
  static MaskSpec parse(std::string_view text);
  std::string to_string() const;
};

/// OneHop (context only) for NER/ED, EntityOnly on both entities for RE.
MaskSpec default_mask(Task task);

/// Throws UsageError when the spec touches NER features on the NER task.
void check_legal(const MaskSpec& spec, Task task);

/// Token positions whose word and POS ids a spec replaces.
std::vector<int> mask_set(const DepTree& tree, const Candidate& candidate, const MaskSpec& spec);

struct MaskedSentence {
  Sentence sentence;
  std::vector<int> masked;                // token positions, ascending
  std::vector<NodeKind> masked_features;  // feature nodes replaced at the candidate
};

/// Masked tokens get word = pos = MASK; feature strategies set the candidate
/// tokens' NER or POS id to MASK. Gold labels and the tree are untouched.
MaskedSentence apply_mask(const Sentence& sentence, const Candidate& candidate, const MaskSpec& spec, Task task);

struct InterventionOptions {
  /// Nodes whose input is replaced: X takes H_x*, feature nodes their MASK row.
  std::vector<NodeKind> intervene = {NodeKind::X};
  /// Diagnostic: let the S edge read the masked sentence too.
  bool context_sees_counterfactual = false;
};

/// Everything inference needs about one candidate.
struct Components {
  num::Array y_x;        // fused factual logits
  num::Array y_star;     // fused counterfactual logits
  num::Array x_edge_cf;  // W_XY H_x*
  num::Array h_x;
  num::Array h_star;
  LogitBundle factual;
};

/// Factual and counterfactual logits for every candidate; encoder passes are
/// shared between candidates whose masked inputs coincide.
std::vector<Components> counterfactual_components(const Model& model, const Sentence& sentence,
                                                  std::span<const Candidate> candidates, const MaskSpec& spec,
                                                  const InterventionOptions& options = {});

struct CounterfactualResult {
  num::Array y_star;
  num::Array h_star;
  num::Array x_edge_cf;
};

CounterfactualResult counterfactual_logits(const Model& model, const Sentence& sentence, const Candidate& candidate,
                                           const MaskSpec& spec, const InterventionOptions& options = {});

/// counterfactual_logits with the listed nodes' inputs replaced. Nodes outside
/// the model spec throw UsageError.
CounterfactualResult intervene_features(const Model& model, const Sentence& sentence, const Candidate& candidate,
                                        const std::vector<NodeKind>& nodes, const MaskSpec& spec);

}  // namespace cfie
