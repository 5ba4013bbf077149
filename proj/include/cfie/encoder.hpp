#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "cfie/corpus.hpp"
#include "cfie/numerics.hpp"
#include "cfie/tree.hpp"

namespace cfie {

enum class EncoderKind { DepConcat, Gcn };
EncoderKind parse_encoder_kind(std::string_view name);
std::string_view to_string(EncoderKind kind);

struct EncoderConfig {
  std::size_t word_dim = 24;
  std::size_t pos_dim = 8;
  std::size_t deprel_dim = 8;
  /// Per LSTM direction; S has 2 * hidden_dim columns.
  std::size_t hidden_dim = 24;
  /// Width of H_X.
  std::size_t x_dim = 32;
  std::size_t gcn_dim = 32;
  EncoderKind kind = EncoderKind::DepConcat;
  std::size_t gcn_layers = 1;
  /// Inverted dropout on input embeddings, train only.
  double dropout = 0.0;
  /// Probability of replacing a token's word and POS by MASK, train only.
  double word_dropout = 0.1;
  /// False replaces every tree by a rootless one: no head rows, identity adjacency.
  bool use_syntax = true;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
};

struct VocabSizes {
  std::size_t words = 2;
  std::size_t pos = 2;
  std::size_t deprels = 2;
  std::size_t ner = 2;
  std::size_t labels = 0;

  static VocabSizes of(const Vocabularies& v) {
    return {v.words.size(), v.pos.size(), v.deprels.size(), v.ner.size(), v.labels.size()};
  }
};

struct HiddenStates {
  num::Var states;  // n x 2h
  num::Var pooled;  // 1 x 2h, mean over rows
};

/// Training-time noise source; a null pointer means inference.
struct Noise {
  std::mt19937_64* rng = nullptr;
  double dropout = 0.0;
  double word_dropout = 0.0;
};

class Encoder {
 public:
  /// Registers parameters under "enc." in `params`.
  Encoder(const EncoderConfig& cfg, const VocabSizes& sizes, num::ParameterSet& params, std::mt19937_64& rng);

  struct Embedded {
    num::Var features;     // n x (word_dim + pos_dim)
    std::size_t unknown = 0;  // ids outside the trained tables, read as UNK
  };

  const EncoderConfig& config() const { return cfg_; }
  std::size_t state_dim() const { return 2 * cfg_.hidden_dim; }

  Embedded embed(num::Tape& tape, const Sentence& sentence, const Noise* noise = nullptr) const;
  HiddenStates bilstm_encode(num::Tape& tape, num::Var features) const;

  /// Tree used by the syntax-aware encoders; rootless when use_syntax is off.
  std::vector<int> effective_heads(const Sentence& sentence) const;

  /// ReLU(A H W + b) per layer on the projection S W_in + b_in.
  num::Var gcn_encode(num::Tape& tape, num::Var states, const num::Array& adjacency) const;
  num::Var gcn_encode(num::Tape& tape, num::Var states, const Sentence& sentence) const;

  /// Rows concat(S[i], S[head(i)] or root vector, deprel(i)) before projection.
  num::Var dep_concat_features(num::Tape& tape, num::Var states, const Sentence& sentence) const;
  num::Var dep_concat_features(num::Tape& tape, num::Var states, std::span<const int> heads,
                               std::span<const int> deprels) const;
  num::Var dep_concat_encode(num::Tape& tape, num::Var states, const Sentence& sentence) const;

  /// H_X for an entity pair from GCN rows: [pool(head), pool(tail)] projected.
  num::Var pair_representation(num::Tape& tape, num::Var gcn_rows, Span head, Span tail) const;

 private:
  EncoderConfig cfg_;
  VocabSizes sizes_;
  num::Parameter* word_ = nullptr;
  num::Parameter* pos_ = nullptr;
  num::Parameter* deprel_ = nullptr;
  num::Parameter* fwd_ih_ = nullptr;
  num::Parameter* fwd_hh_ = nullptr;
  num::Parameter* fwd_b_ = nullptr;
  num::Parameter* bwd_ih_ = nullptr;
  num::Parameter* bwd_hh_ = nullptr;
  num::Parameter* bwd_b_ = nullptr;
  num::Parameter* root_ = nullptr;
  num::Parameter* dc_w_ = nullptr;
  num::Parameter* dc_b_ = nullptr;
  num::Parameter* gcn_in_w_ = nullptr;
  num::Parameter* gcn_in_b_ = nullptr;
  std::vector<num::Parameter*> gcn_w_;
  std::vector<num::Parameter*> gcn_b_;
  num::Parameter* pair_w_ = nullptr;
  num::Parameter* pair_b_ = nullptr;
};

/// Mean of rows [span.begin, span.end). Empty or out-of-range spans throw.
num::Var span_pool(num::Var reps, Span span);

}  // namespace cfie
