#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfie/counterfactual.hpp"
#include "cfie/numerics.hpp"
#include "cfie/scm.hpp"

namespace cfie {

enum class EffectMode { Conventional, TDE, MainEffect };
EffectMode parse_effect_mode(std::string_view name);
std::string_view to_string(EffectMode mode);

struct EffectConfig {
  EffectMode mode = EffectMode::MainEffect;
  double alpha = 1.0;
  double beta = 0.0;
  MaskSpec mask;
  InterventionOptions options;

  /// TDE reads as alpha 1, beta 0; conventional as alpha 0, beta 0.
  double effective_alpha() const;
  double effective_beta() const;
  bool needs_counterfactual() const { return mode != EffectMode::Conventional; }
};

/// Main effect with alpha 1 for NER/ED and 0 for RE, beta 0, the task's default mask.
EffectConfig default_effect(Task task);

/// y_x - y_star.
num::Array tde(const num::Array& y_x, const num::Array& y_star);
/// y_x - alpha * y_star + beta * x_edge_cf.
num::Array main_effect(const num::Array& y_x, const num::Array& y_star, const num::Array& x_edge_cf, double alpha,
                       double beta);
/// Debiased logits selected by the config's mode.
num::Array debias(const Components& c, const EffectConfig& cfg);

/// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

struct Prediction {
  std::size_t candidate = 0;
  Candidate target;
  num::Array logits;
  int predicted = 0;
  int gold = -1;
  /// Y_x, Y_x* and W_XY H_x*; the last two are empty in conventional mode.
  num::Array y_x;
  num::Array y_star;
  num::Array x_edge_cf;
};

struct TaggedSpan {
  Span span;
  std::string type;
  friend bool operator==(const TaggedSpan&, const TaggedSpan&) = default;
};

/// Greedy left-to-right: S emits a singleton, B opens, I continues a matching
/// open span, E closes it. Anything else discards the open span.
std::vector<TaggedSpan> decode_bioes(std::span<const std::string> tags);
std::vector<TaggedSpan> decode_bioes(std::span<const int> tag_ids, const Vocab& labels);

struct SentencePrediction {
  std::vector<Prediction> predictions;
  /// Decoded spans for NER/ED.
  std::vector<TaggedSpan> spans;
};

/// Components for every candidate of one sentence; counterfactual parts are
/// skipped when `with_counterfactual` is false.
std::vector<Components> sentence_components(const Model& model, const Sentence& sentence, const MaskSpec& mask,
                                            const InterventionOptions& options, bool with_counterfactual);

SentencePrediction predict_from(const Model& model, const Sentence& sentence, const std::vector<Components>& comps,
                                const EffectConfig& cfg);
SentencePrediction predict(const Model& model, const Sentence& sentence, const EffectConfig& cfg);

/// One JSON object per candidate.
std::string prediction_jsonl(const Model& model, const Sentence& sentence, const SentencePrediction& pred);

}  // namespace cfie
