#include "cfie/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "cfie/errors.hpp"
#include "cfie/evaluation.hpp"

namespace cfie {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (!(feature_dropout >= 0.0 && feature_dropout < 1.0)) throw ConfigError("train: feature_dropout must lie in [0,1)");
}

std::string EpochRecord::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  if (dev_mf1 >= 0.0) j["dev_mf1"] = dev_mf1;
  j["best"] = best;
  return j.dump();
}

TrainResult train(const Corpus& train_corpus, const Corpus* dev, const SCMSpec& spec, EncoderConfig encoder,
                  const TrainConfig& cfg, std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_corpus.sentences.empty()) throw UsageError("training corpus is empty");
  if (!train_corpus.vocabs) throw UsageError("training corpus has no vocabularies");
  if (dev && dev->vocabs != train_corpus.vocabs) throw UsageError("train and dev corpora must share vocabularies");
  if (train_corpus.task != spec.task) throw UsageError("corpus task differs from the SCM spec task");
  encoder.seed = seed;
  Model model(spec, encoder, train_corpus.vocabs);
  num::ParameterSet& params = model.params();
  num::Adam adam(cfg.adam);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Noise noise{&rng, encoder.dropout, encoder.word_dropout};

  std::vector<std::size_t> order(train_corpus.sentences.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{std::move(model), {}, 0};
  Model& m = result.model;
  std::vector<num::Array> best_values;
  double best_mf1 = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0, batch = 1; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      params.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Sentence& s = train_corpus.sentences[order[k]];
        const auto cands = candidates_of(s, spec.task);
        if (cands.empty()) continue;
        const auto golds = golds_of(s, spec.task);
        num::Tape tape;
        const NodeInputs in = m.node_inputs(tape, s, cands, &noise, cfg.feature_dropout);
        const num::Var loss = m.loss(m.logits(tape, in), golds);
        const double value = loss.value()[0];
        if (!std::isfinite(value))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch) + " (sentence " + s.id + ")");
        loss_sum += value;
        ++counted;
        tape.backward(num::scale(loss, inv));
      }
      adam.step(params);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = counted ? loss_sum / static_cast<double>(counted) : 0.0;
    bool stop = false;
    if (dev) {
      rec.dev_mf1 = 100.0 * conventional_macro_f1(m, *dev);
      if (rec.dev_mf1 > best_mf1) {
        best_mf1 = rec.dev_mf1;
        rec.best = true;
        result.best_epoch = epoch;
        since_best = 0;
        best_values.clear();
        for (const num::Parameter* p : params.all()) best_values.push_back(p->value);
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        stop = true;
      }
    } else {
      rec.best = true;
      result.best_epoch = epoch;
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  if (!best_values.empty()) {
    auto all = params.all();
    for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = best_values[i];
  }
  return result;
}

}  // namespace cfie
