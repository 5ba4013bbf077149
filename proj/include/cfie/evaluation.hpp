#pragma once

#include <span>
#include <string>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/inference.hpp"
#include "cfie/metrics.hpp"
#include "cfie/scm.hpp"

namespace cfie {

/// Per-sentence components, reusable across effect configurations.
struct CorpusComponents {
  std::vector<std::vector<Components>> sentences;
  bool counterfactual = false;
};

CorpusComponents precompute(const Model& model, const Corpus& corpus, const MaskSpec& mask,
                            const InterventionOptions& options, bool with_counterfactual);

/// Evaluation classes of a corpus: span types or relation labels.
std::vector<std::string> evaluation_classes(const Corpus& corpus);

/// Span-level (exact boundary and type) for NER/ED, relation-level for RE.
ConfusionMatrix confusion(const Model& model, const Corpus& corpus, const CorpusComponents& comps,
                          const EffectConfig& cfg);

struct Evaluation {
  ConfusionMatrix cm{0};
  MetricsReport report;
  std::string predictions_jsonl;
};

Evaluation evaluate(const Model& model, const Corpus& corpus, const EffectConfig& cfg, const BucketSplit& buckets,
                    bool dump_predictions = false);
MetricsReport report_from(const Corpus& corpus, const ConfusionMatrix& cm, const BucketSplit& buckets);

/// Overall MF1 (0..1) of conventional predictions; used for early stopping.
double conventional_macro_f1(const Model& model, const Corpus& corpus);

struct ProbeEntry {
  MaskSpec strategy;
  /// softmax(masked)[gold] - softmax(original)[gold].
  double delta_gold = 0.0;
  /// Same for the largest non-gold probability.
  double delta_other = 0.0;
};

std::vector<MaskSpec> default_probe_strategies();

/// Largest ground-truth drop first. Every node reads the masked sentence.
std::vector<ProbeEntry> probe_factors(const Model& model, const Sentence& sentence, const Candidate& candidate, int gold,
                                      const std::vector<MaskSpec>& strategies = default_probe_strategies());

struct SweepPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double mf1 = 0.0;  // percent
  double mr = 0.0;   // percent
};

struct SweepResult {
  std::vector<SweepPoint> grid;  // alpha-major
  SweepPoint best;               // first point with the highest MF1
  EffectConfig best_config;
};

/// 0, 0.2, ..., 2.4.
std::vector<double> default_beta_grid();
std::vector<double> default_alpha_grid();

SweepResult sweep(const Model& model, const Corpus& dev, std::span<const double> alphas, std::span<const double> betas,
                  const MaskSpec& mask, const InterventionOptions& options = {});
SweepResult sweep(const Model& model, const Corpus& dev, const CorpusComponents& comps, std::span<const double> alphas,
                  std::span<const double> betas, const MaskSpec& mask, const InterventionOptions& options = {});

}  // namespace cfie
