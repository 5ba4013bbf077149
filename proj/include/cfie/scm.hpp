#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/encoder.hpp"
#include "cfie/numerics.hpp"

namespace cfie {

/// Parents of Y: the sentence S, the candidate X and feature nodes Z_j.
enum class NodeKind { S, X, POS, NER };
NodeKind parse_node(std::string_view name);
std::string_view to_string(NodeKind node);
std::vector<NodeKind> parse_node_list(std::string_view csv);

enum class Fusion { Sum, Gated };
Fusion parse_fusion(std::string_view name);
std::string_view to_string(Fusion fusion);

struct SCMSpec {
  Task task = Task::NER;
  /// Always S, X first, then feature nodes in canonical order.
  std::vector<NodeKind> nodes = {NodeKind::S, NodeKind::X};
  Fusion fusion = Fusion::Sum;
  std::size_t classes = 0;
  std::size_t feature_dim = 8;

  bool has(NodeKind node) const;
  std::vector<NodeKind> features() const;
  /// Throws UsageError for a missing S/X or a gold-NER node on the NER task.
  void validate() const;
};

/// NER -> {S, X, POS}; ED and RE -> {S, X, POS, NER}.
SCMSpec default_spec(Task task, std::size_t classes);
/// Removes feature nodes; dropping S or X throws UsageError.
SCMSpec ablate(const SCMSpec& spec, const std::vector<NodeKind>& drop);

/// A token span for NER/ED; a head/tail entity pair for RE.
struct Candidate {
  Span x;
  std::optional<Span> tail;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Every token for NER/ED, every annotated pair for RE.
std::vector<Candidate> candidates_of(const Sentence& sentence, Task task);
/// Gold class per candidate: BIOES tag id, or relation label id.
std::vector<int> golds_of(const Sentence& sentence, Task task);
/// Tokens that make up a candidate (both entities for RE), ascending.
std::vector<int> candidate_tokens(const Candidate& c);

struct LogitBundle {
  std::size_t candidate = 0;
  num::Array fused;                          // 1 x c
  std::map<NodeKind, num::Array> per_edge;   // W_iY H_i, 1 x c each
  num::Array gate;                           // W_g H_X for gated fusion, else empty
};

/// Sum fusion is the elementwise sum of the edges; gated multiplies the gate
/// term by the sigmoid of that sum.
num::Array fuse(const std::map<NodeKind, num::Array>& per_edge, const num::Array& gate, Fusion fusion);

/// Node inputs for a batch of m candidates, one row each.
struct NodeInputs {
  std::map<NodeKind, num::Var> h;
};

struct EdgeLogits {
  std::map<NodeKind, num::Var> per_edge;  // m x c
  num::Var gate;                          // m x c, gated only
  num::Var fused;                         // m x c
};

class Model {
 public:
  Model(SCMSpec spec, EncoderConfig encoder, std::shared_ptr<const Vocabularies> vocabs);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const SCMSpec& spec() const { return spec_; }
  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const Encoder& encoder() const { return *encoder_; }
  const Vocabularies& vocabs() const { return *vocabs_; }
  std::shared_ptr<const Vocabularies> shared_vocabs() const { return vocabs_; }
  const VocabSizes& sizes() const { return sizes_; }
  num::ParameterSet& params() { return *params_; }
  const num::ParameterSet& params() const { return *params_; }
  std::size_t classes() const { return spec_.classes; }

  /// Encoder pass shared by every candidate of one (possibly masked) sentence.
  struct Encoded {
    HiddenStates hidden;
    num::Var token_reps;  // dep_concat rows (NER/ED) or GCN rows (RE)
  };
  Encoded encode(num::Tape& tape, const Sentence& sentence, const Noise* noise = nullptr) const;
  /// H_X rows for the candidates, m x x_dim.
  num::Var x_rows(num::Tape& tape, const Encoded& enc, std::span<const Candidate> cands) const;
  /// H_S rows: the pooled sentence vector repeated m times.
  num::Var s_rows(const Encoded& enc, std::size_t m) const;
  /// H_Z rows from the candidate tokens' feature ids. `masked` replaces the
  /// listed nodes' ids by MASK; `feature_dropout` applies only with a noise rng.
  num::Var z_rows(num::Tape& tape, NodeKind node, const Sentence& sentence, std::span<const Candidate> cands,
                  bool masked = false, const Noise* noise = nullptr, double feature_dropout = 0.0) const;

  NodeInputs node_inputs(num::Tape& tape, const Sentence& sentence, std::span<const Candidate> cands,
                         const Noise* noise = nullptr, double feature_dropout = 0.0) const;
  EdgeLogits logits(num::Tape& tape, const NodeInputs& inputs) const;
  /// W_iY h for one node, m x c.
  num::Var edge(num::Tape& tape, NodeKind node, num::Var h) const;
  /// W_g h_x, gated fusion only.
  num::Var gate(num::Tape& tape, num::Var h_x) const;

  /// Mean cross-entropy of the fused logits plus one term per edge.
  num::Var loss(const EdgeLogits& logits, std::span<const int> golds) const;

  LogitBundle forward(const Sentence& sentence, const Candidate& candidate) const;
  std::vector<LogitBundle> forward_all(const Sentence& sentence) const;
  static std::vector<LogitBundle> bundles(const EdgeLogits& logits);

  std::string header_json(const std::string& extra_json = "{}") const;
  void save(const std::filesystem::path& path, const std::string& extra_json = "{}") const;
  /// Throws VersionError if the file is not a compatible checkpoint.
  static Model load(const std::filesystem::path& path, std::string* extra_json = nullptr);

 private:
  void build(std::mt19937_64& rng);

  SCMSpec spec_;
  EncoderConfig enc_cfg_;
  std::shared_ptr<const Vocabularies> vocabs_;
  VocabSizes sizes_;
  std::unique_ptr<num::ParameterSet> params_;
  std::unique_ptr<Encoder> encoder_;
  std::map<NodeKind, num::Parameter*> edges_;
  std::map<NodeKind, num::Parameter*> feature_tables_;
  num::Parameter* gate_ = nullptr;
};

/// Plain-value recomputation of the multi-edge loss from bundles.
double loss_value(const std::vector<LogitBundle>& bundles, std::span<const int> golds);

}  // namespace cfie
