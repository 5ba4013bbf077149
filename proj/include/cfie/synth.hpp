#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfie/corpus.hpp"

namespace cfie {

enum class TreeModel { Chain, RandomProjective };
TreeModel parse_tree_model(std::string_view name);
std::string_view to_string(TreeModel model);

/// Long-tailed benchmark with a planted spurious cue.
///
/// Each class k owns a cue word "cue<k>" and a context word "ctx<k>". The
/// candidate token (entity, trigger or relation head) carries cue<k> with
/// probability cue_strength in train and a uniformly drawn class's cue in dev
/// and test. Its dependency head carries ctx<k> with probability
/// context_strength in every split and another class's context word
/// otherwise, so context is the only signal that survives the shift. For ED
/// and RE the candidate's NER column names its class with probability
/// ner_strength.
struct SynthConfig {
  Task task = Task::NER;
  std::size_t num_classes = 6;
  double head_tail_ratio = 8.0;
  double cue_strength = 0.95;
  double context_strength = 0.8;
  double ner_strength = 0.6;
  /// Distinct word forms, including cues and context words.
  std::size_t vocab_size = 200;
  std::size_t min_length = 6;
  std::size_t max_length = 14;
  TreeModel tree_model = TreeModel::RandomProjective;
  std::size_t train_sentences = 5000;
  std::size_t dev_sentences = 600;
  std::size_t test_sentences = 1200;
  bool balanced_eval = true;
  bool multi_token_spans = false;
  std::uint64_t seed = 13;

  /// Throws ConfigError.
  void validate() const;
};

struct SynthCorpora {
  Corpus train;
  Corpus dev;
  Corpus test;
};

SynthCorpora generate_synthetic(const SynthConfig& cfg);

/// Class name used for class k, e.g. "C3".
std::string synthetic_class_name(std::size_t k);
/// Class index whose cue word is `form`, if it is a cue.
std::optional<std::size_t> synthetic_cue_class(std::string_view form);
/// Per-class instance counts of a geometric head-to-tail profile summing to `total`.
std::vector<std::size_t> geometric_class_sizes(std::size_t total, std::size_t num_classes, double head_tail_ratio);

}  // namespace cfie
