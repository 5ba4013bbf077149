#include "cfie/encoder.hpp"

#include "cfie/errors.hpp"

namespace cfie {

using num::Array;
using num::Parameter;
using num::Tape;
using num::Var;

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "dep_concat" || name == "dep-concat") return EncoderKind::DepConcat;
  if (name == "gcn") return EncoderKind::Gcn;
  throw ConfigError("unknown encoder kind '" + std::string(name) + "' (expected dep_concat or gcn)");
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::Gcn ? "gcn" : "dep_concat"; }

void EncoderConfig::validate() const {
  if (word_dim == 0 || pos_dim == 0 || deprel_dim == 0 || hidden_dim == 0 || x_dim == 0 || gcn_dim == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder dropout must lie in [0,1)");
  if (!(word_dropout >= 0.0 && word_dropout < 1.0)) throw ConfigError("encoder word_dropout must lie in [0,1)");
}

namespace {

Parameter& make(num::ParameterSet& params, const std::string& name, std::size_t rows, std::size_t cols,
                std::mt19937_64& rng, double bound = 0.0) {
  Array a(rows, cols);
  num::init_uniform(a, rng, bound);
  return params.add("enc." + name, std::move(a));
}

Parameter& make_zero(num::ParameterSet& params, const std::string& name, std::size_t rows, std::size_t cols) {
  return params.add("enc." + name, Array(rows, cols));
}

Parameter& lstm_bias(num::ParameterSet& params, const std::string& name, std::size_t hidden) {
  Array b(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
  return params.add("enc." + name, std::move(b));
}

std::size_t table_id(int id, std::size_t rows, std::size_t& unknown) {
  if (id < 0 || static_cast<std::size_t>(id) >= rows) {
    ++unknown;
    return Vocab::kUnk;
  }
  return static_cast<std::size_t>(id);
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, const VocabSizes& sizes, num::ParameterSet& params,
                 std::mt19937_64& rng)
    : cfg_(cfg), sizes_(sizes) {
  cfg_.validate();
  const std::size_t in = cfg.word_dim + cfg.pos_dim;
  const std::size_t h = cfg.hidden_dim;
  word_ = &make(params, "word", sizes.words, cfg.word_dim, rng, 0.5);
  pos_ = &make(params, "pos", sizes.pos, cfg.pos_dim, rng, 0.5);
  fwd_ih_ = &make(params, "lstm_f.w_ih", in, 4 * h, rng);
  fwd_hh_ = &make(params, "lstm_f.w_hh", h, 4 * h, rng);
  fwd_b_ = &lstm_bias(params, "lstm_f.b", h);
  bwd_ih_ = &make(params, "lstm_b.w_ih", in, 4 * h, rng);
  bwd_hh_ = &make(params, "lstm_b.w_hh", h, 4 * h, rng);
  bwd_b_ = &lstm_bias(params, "lstm_b.b", h);
  if (cfg.kind == EncoderKind::DepConcat) {
    deprel_ = &make(params, "deprel", sizes.deprels, cfg.deprel_dim, rng, 0.5);
    root_ = &make(params, "dep.root", 1, state_dim(), rng, 0.5);
    dc_w_ = &make(params, "dep.w", 2 * state_dim() + cfg.deprel_dim, cfg.x_dim, rng);
    dc_b_ = &make_zero(params, "dep.b", 1, cfg.x_dim);
  } else {
    gcn_in_w_ = &make(params, "gcn.in_w", state_dim(), cfg.gcn_dim, rng);
    gcn_in_b_ = &make_zero(params, "gcn.in_b", 1, cfg.gcn_dim);
    for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
      gcn_w_.push_back(&make(params, "gcn.w" + std::to_string(l), cfg.gcn_dim, cfg.gcn_dim, rng));
      gcn_b_.push_back(&make_zero(params, "gcn.b" + std::to_string(l), 1, cfg.gcn_dim));
    }
    pair_w_ = &make(params, "pair.w", 2 * cfg.gcn_dim, cfg.x_dim, rng);
    pair_b_ = &make_zero(params, "pair.b", 1, cfg.x_dim);
  }
}

Encoder::Embedded Encoder::embed(Tape& tape, const Sentence& sentence, const Noise* noise) const {
  if (sentence.tokens.empty()) throw UsageError("cannot embed an empty sentence");
  Embedded out;
  std::vector<std::size_t> words, tags;
  for (const auto& t : sentence.tokens) {
    std::size_t w = table_id(t.word, sizes_.words, out.unknown);
    std::size_t p = table_id(t.pos, sizes_.pos, out.unknown);
    if (noise && noise->rng && noise->word_dropout > 0.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(*noise->rng) < noise->word_dropout) {
      w = Vocab::kMask;
      p = Vocab::kMask;
    }
    words.push_back(w);
    tags.push_back(p);
  }
  Var x = num::concat_cols({num::gather_rows(tape.parameter(*word_), std::move(words)),
                            num::gather_rows(tape.parameter(*pos_), std::move(tags))});
  if (noise && noise->rng && noise->dropout > 0.0) {
    Array mask(x.shape());
    const double keep = 1.0 - noise->dropout;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& m : mask.data()) m = u(*noise->rng) < keep ? 1.0 / keep : 0.0;
    x = num::mul(x, tape.constant(std::move(mask)));
  }
  out.features = x;
  return out;
}

HiddenStates Encoder::bilstm_encode(Tape& tape, Var features) const {
  if (features.rows() == 0) throw UsageError("bilstm_encode needs at least one row");
  Var f = num::lstm(features, tape.parameter(*fwd_ih_), tape.parameter(*fwd_hh_), tape.parameter(*fwd_b_), false);
  Var b = num::lstm(features, tape.parameter(*bwd_ih_), tape.parameter(*bwd_hh_), tape.parameter(*bwd_b_), true);
  HiddenStates hs;
  hs.states = num::concat_cols({f, b});
  hs.pooled = num::mean_rows(hs.states);
  return hs;
}

std::vector<int> Encoder::effective_heads(const Sentence& sentence) const {
  if (cfg_.use_syntax) return sentence.heads();
  return std::vector<int>(sentence.size(), kRoot);
}

Var Encoder::gcn_encode(Tape& tape, Var states, const Array& adjacency) const {
  if (!gcn_in_w_) throw UsageError("encoder was not built with a GCN");
  if (adjacency.rows() != states.rows() || adjacency.cols() != states.rows())
    throw DimensionError("adjacency " + num::to_string(adjacency.shape()) + " does not match " +
                         std::to_string(states.rows()) + " tokens");
  Var h = num::add_bias(num::matmul(states, tape.parameter(*gcn_in_w_)), tape.parameter(*gcn_in_b_));
  Var a = tape.constant(adjacency);
  for (std::size_t l = 0; l < gcn_w_.size(); ++l)
    h = num::relu(num::add_bias(num::matmul(num::matmul(a, h), tape.parameter(*gcn_w_[l])),
                                tape.parameter(*gcn_b_[l])));
  return h;
}

Var Encoder::gcn_encode(Tape& tape, Var states, const Sentence& sentence) const {
  const Array adjacency = cfg_.use_syntax ? normalized_adjacency(DepTree::of(sentence)) : Array::identity(sentence.size());
  return gcn_encode(tape, states, adjacency);
}

Var Encoder::dep_concat_features(Tape& tape, Var states, std::span<const int> heads,
                                 std::span<const int> deprels) const {
  if (!dc_w_) throw UsageError("encoder was not built with dependency concatenation");
  const std::size_t n = states.rows();
  if (heads.size() != n || deprels.size() != n)
    throw DimensionError("dep_concat: " + std::to_string(heads.size()) + " heads for " + std::to_string(n) + " rows");
  std::vector<std::size_t> head_rows, rel_rows;
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < n; ++i) {
    head_rows.push_back(heads[i] == kRoot ? n : static_cast<std::size_t>(heads[i]));
    rel_rows.push_back(table_id(deprels[i], sizes_.deprels, unknown));
  }
  Var table = num::concat_rows({states, tape.parameter(*root_)});
  return num::concat_cols({states, num::gather_rows(table, std::move(head_rows)),
                           num::gather_rows(tape.parameter(*deprel_), std::move(rel_rows))});
}

Var Encoder::dep_concat_features(Tape& tape, Var states, const Sentence& sentence) const {
  const auto heads = effective_heads(sentence);
  std::vector<int> rels;
  for (const auto& t : sentence.tokens) rels.push_back(cfg_.use_syntax ? t.deprel : Vocab::kMask);
  return dep_concat_features(tape, states, heads, rels);
}

Var Encoder::dep_concat_encode(Tape& tape, Var states, const Sentence& sentence) const {
  Var z = dep_concat_features(tape, states, sentence);
  return num::add_bias(num::matmul(z, tape.parameter(*dc_w_)), tape.parameter(*dc_b_));
}

Var Encoder::pair_representation(Tape& tape, Var gcn_rows, Span head, Span tail) const {
  if (!pair_w_) throw UsageError("encoder was not built with a GCN");
  Var z = num::concat_cols({span_pool(gcn_rows, head), span_pool(gcn_rows, tail)});
  return num::add_bias(num::matmul(z, tape.parameter(*pair_w_)), tape.parameter(*pair_b_));
}

Var span_pool(Var reps, Span span) {
  if (span.begin >= span.end) throw UsageError("span_pool on an empty span");
  if (span.begin < 0 || static_cast<std::size_t>(span.end) > reps.rows())
    throw IndexError("span " + std::to_string(span.begin) + ":" + std::to_string(span.end) + " outside " +
                     std::to_string(reps.rows()) + " rows");
  if (span.size() == 1) return num::slice_rows(reps, static_cast<std::size_t>(span.begin), static_cast<std::size_t>(span.end));
  return num::mean_rows(num::slice_rows(reps, static_cast<std::size_t>(span.begin), static_cast<std::size_t>(span.end)));
}

}  // namespace cfie
