#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/encoder.hpp"
#include "cfie/optim.hpp"
#include "cfie/scm.hpp"

namespace cfie {

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  num::AdamConfig adam{0.005, 0.9, 0.999, 1e-8, 5.0};
  /// Probability of replacing a feature-node id by MASK, train only.
  double feature_dropout = 0.1;
  /// Stop after this many epochs without a dev MF1 improvement; 0 disables.
  std::size_t patience = 4;

  /// Throws ConfigError.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-sentence loss
  double dev_mf1 = -1.0;    // percent; -1 without a dev corpus
  bool best = false;

  std::string to_json() const;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
};

/// Minibatch Adam on the multi-edge loss. With a dev corpus the parameters of
/// the epoch with the best conventional dev MF1 are kept. The encoder seed is
/// overwritten by `seed`. Throws UsageError on an empty corpus and
/// TrainingError on a non-finite loss.
TrainResult train(const Corpus& train_corpus, const Corpus* dev, const SCMSpec& spec, EncoderConfig encoder,
                  const TrainConfig& cfg, std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace cfie
