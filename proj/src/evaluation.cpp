#include "cfie/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cfie/errors.hpp"

namespace cfie {

using num::Array;

CorpusComponents precompute(const Model& model, const Corpus& corpus, const MaskSpec& mask,
                            const InterventionOptions& options, bool with_counterfactual) {
  CorpusComponents out;
  out.counterfactual = with_counterfactual;
  out.sentences.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences)
    out.sentences.push_back(sentence_components(model, s, mask, options, with_counterfactual));
  return out;
}

std::vector<std::string> evaluation_classes(const Corpus& corpus) {
  return class_inventory(*corpus.vocabs, corpus.task);
}

namespace {

void add_tagged(ConfusionMatrix& cm, const std::map<std::string, std::size_t>& index,
                const std::vector<TaggedSpan>& gold, const std::vector<TaggedSpan>& pred) {
  auto idx = [&](const std::string& type) -> std::optional<std::size_t> {
    auto it = index.find(type);
    if (it == index.end()) return std::nullopt;
    return it->second;
  };
  for (const auto& g : gold) {
    const auto gi = idx(g.type);
    if (!gi) continue;
    auto match = std::find_if(pred.begin(), pred.end(), [&](const TaggedSpan& p) { return p.span == g.span; });
    std::optional<std::size_t> pi;
    if (match != pred.end()) pi = idx(match->type);
    cm.add(*gi, pi.value_or(cm.none()));
  }
  for (const auto& p : pred) {
    const auto pi = idx(p.type);
    if (!pi) continue;
    const bool matched = std::any_of(gold.begin(), gold.end(), [&](const TaggedSpan& g) { return g.span == p.span; });
    if (!matched) cm.add(cm.none(), *pi);
  }
}

}  // namespace

ConfusionMatrix confusion(const Model& model, const Corpus& corpus, const CorpusComponents& comps,
                          const EffectConfig& cfg) {
  if (cfg.needs_counterfactual() && !comps.counterfactual)
    throw UsageError("components were computed without counterfactuals");
  if (comps.sentences.size() != corpus.sentences.size()) throw DimensionError("components do not match the corpus");
  const auto classes = evaluation_classes(corpus);
  const Task task = corpus.task;
  ConfusionMatrix cm(classes.size(), task != Task::RE);
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = k;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const Sentence& s = corpus.sentences[i];
    const SentencePrediction pred = predict_from(model, s, comps.sentences[i], cfg);
    if (task == Task::RE) {
      for (const auto& p : pred.predictions) {
        const std::string& g = corpus.vocabs->labels.at(p.gold);
        const std::string& q = model.vocabs().labels.at(p.predicted);
        cm.add(index.at(g), index.at(q));
      }
    } else {
      std::vector<int> gold_tags;
      for (const auto& t : s.tokens) gold_tags.push_back(t.gold);
      add_tagged(cm, index, decode_bioes(gold_tags, corpus.vocabs->labels), pred.spans);
    }
  }
  return cm;
}

MetricsReport report_from(const Corpus& corpus, const ConfusionMatrix& cm, const BucketSplit& buckets) {
  return bucket_report(cm, evaluation_classes(corpus), buckets);
}

Evaluation evaluate(const Model& model, const Corpus& corpus, const EffectConfig& cfg, const BucketSplit& buckets,
                    bool dump_predictions) {
  const CorpusComponents comps = precompute(model, corpus, cfg.mask, cfg.options, cfg.needs_counterfactual());
  Evaluation ev;
  ev.cm = confusion(model, corpus, comps, cfg);
  ev.report = report_from(corpus, ev.cm, buckets);
  if (dump_predictions) {
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
      const Sentence& s = corpus.sentences[i];
      ev.predictions_jsonl += prediction_jsonl(model, s, predict_from(model, s, comps.sentences[i], cfg));
    }
  }
  return ev;
}

double conventional_macro_f1(const Model& model, const Corpus& corpus) {
  EffectConfig cfg;
  cfg.mode = EffectMode::Conventional;
  const CorpusComponents comps = precompute(model, corpus, cfg.mask, cfg.options, false);
  const ConfusionMatrix cm = confusion(model, corpus, comps, cfg);
  try {
    return macro_f1(cm, all_classes(cm));
  } catch (const MetricError&) {
    return 0.0;
  }
}

std::vector<MaskSpec> default_probe_strategies() {
  return {MaskStrategy::TwoHop, MaskStrategy::OneHop, MaskStrategy::EntityOnly, MaskStrategy::FeaturePOS};
}

namespace {

std::pair<double, double> gold_and_other(const Array& logits, int gold) {
  const auto p = num::softmax(logits.data());
  double other = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (static_cast<int>(k) != gold) other = std::max(other, p[k]);
  return {p.at(static_cast<std::size_t>(gold)), other};
}

}  // namespace

std::vector<ProbeEntry> probe_factors(const Model& model, const Sentence& sentence, const Candidate& candidate, int gold,
                                      const std::vector<MaskSpec>& strategies) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= model.classes())
    throw IndexError("probe gold " + std::to_string(gold) + " outside " + std::to_string(model.classes()) + " classes");
  const auto [base_gold, base_other] = gold_and_other(model.forward(sentence, candidate).fused, gold);
  std::vector<ProbeEntry> out;
  for (const MaskSpec& spec : strategies) {
    const MaskedSentence ms = apply_mask(sentence, candidate, spec, model.spec().task);
    const auto [g, o] = gold_and_other(model.forward(ms.sentence, candidate).fused, gold);
    out.push_back({spec, g - base_gold, o - base_other});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ProbeEntry& a, const ProbeEntry& b) { return a.delta_gold < b.delta_gold; });
  return out;
}

std::vector<double> default_beta_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 12; ++i) g.push_back(0.2 * i);
  return g;
}

std::vector<double> default_alpha_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

SweepResult sweep(const Model& model, const Corpus& dev, const CorpusComponents& comps, std::span<const double> alphas,
                  std::span<const double> betas, const MaskSpec& mask, const InterventionOptions& options) {
  if (alphas.empty() || betas.empty()) throw UsageError("sweep grids must be non-empty");
  SweepResult out;
  bool first = true;
  for (double a : alphas) {
    for (double b : betas) {
      EffectConfig cfg;
      cfg.mode = EffectMode::MainEffect;
      cfg.alpha = a;
      cfg.beta = b;
      cfg.mask = mask;
      cfg.options = options;
      const ConfusionMatrix cm = confusion(model, dev, comps, cfg);
      SweepPoint p{a, b, 0.0, 0.0};
      try {
        p.mf1 = 100.0 * macro_f1(cm, all_classes(cm));
        p.mr = 100.0 * mean_recall(cm, all_classes(cm));
      } catch (const MetricError&) {
      }
      out.grid.push_back(p);
      if (first || p.mf1 > out.best.mf1) {
        out.best = p;
        out.best_config = cfg;
        first = false;
      }
    }
  }
  return out;
}

SweepResult sweep(const Model& model, const Corpus& dev, std::span<const double> alphas, std::span<const double> betas,
                  const MaskSpec& mask, const InterventionOptions& options) {
  const CorpusComponents comps = precompute(model, dev, mask, options, true);
  return sweep(model, dev, comps, alphas, betas, mask, options);
}

}  // namespace cfie
