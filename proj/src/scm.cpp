#include "cfie/scm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfie/checkpoint.hpp"
#include "cfie/errors.hpp"

namespace cfie {

using num::Array;
using num::Parameter;
using num::Tape;
using num::Var;
using json = nlohmann::json;

NodeKind parse_node(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "s") return NodeKind::S;
  if (s == "x") return NodeKind::X;
  if (s == "pos") return NodeKind::POS;
  if (s == "ner") return NodeKind::NER;
  throw UsageError("unknown SCM node '" + std::string(name) + "' (expected s, x, pos or ner)");
}

std::string_view to_string(NodeKind node) {
  switch (node) {
    case NodeKind::S: return "S";
    case NodeKind::X: return "X";
    case NodeKind::POS: return "POS";
    case NodeKind::NER: return "NER";
  }
  return "?";
}

std::vector<NodeKind> parse_node_list(std::string_view csv) {
  std::vector<NodeKind> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    std::string_view item = csv.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (!item.empty()) {
      const NodeKind n = parse_node(item);
      if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Fusion parse_fusion(std::string_view name) {
  if (name == "sum") return Fusion::Sum;
  if (name == "gated") return Fusion::Gated;
  throw ConfigError("unknown fusion '" + std::string(name) + "' (expected sum or gated)");
}

std::string_view to_string(Fusion fusion) { return fusion == Fusion::Gated ? "gated" : "sum"; }

bool SCMSpec::has(NodeKind node) const { return std::find(nodes.begin(), nodes.end(), node) != nodes.end(); }

std::vector<NodeKind> SCMSpec::features() const {
  std::vector<NodeKind> out;
  for (NodeKind n : nodes)
    if (n != NodeKind::S && n != NodeKind::X) out.push_back(n);
  return out;
}

void SCMSpec::validate() const {
  if (!has(NodeKind::S) || !has(NodeKind::X)) throw UsageError("SCM spec must contain S and X");
  if (task == Task::NER && has(NodeKind::NER))
    throw UsageError("the NER task cannot use gold NER tags as a feature node");
  if (classes < 2) throw UsageError("SCM spec needs at least 2 classes, got " + std::to_string(classes));
  if (feature_dim == 0) throw UsageError("feature_dim must be positive");
}

SCMSpec default_spec(Task task, std::size_t classes) {
  SCMSpec spec;
  spec.task = task;
  spec.classes = classes;
  spec.nodes = {NodeKind::S, NodeKind::X, NodeKind::POS};
  if (task != Task::NER) spec.nodes.push_back(NodeKind::NER);
  return spec;
}

SCMSpec ablate(const SCMSpec& spec, const std::vector<NodeKind>& drop) {
  SCMSpec out = spec;
  for (NodeKind n : drop) {
    if (n == NodeKind::S || n == NodeKind::X) throw UsageError("cannot drop node " + std::string(to_string(n)));
    out.nodes.erase(std::remove(out.nodes.begin(), out.nodes.end(), n), out.nodes.end());
  }
  return out;
}

std::vector<Candidate> candidates_of(const Sentence& sentence, Task task) {
  std::vector<Candidate> out;
  if (task == Task::RE) {
    for (const auto& r : sentence.relations) out.push_back(Candidate{r.head, r.tail});
  } else {
    for (int i = 0; i < static_cast<int>(sentence.size()); ++i) out.push_back(Candidate{Span{i, i + 1}, std::nullopt});
  }
  return out;
}

std::vector<int> golds_of(const Sentence& sentence, Task task) {
  std::vector<int> out;
  if (task == Task::RE) {
    for (const auto& r : sentence.relations) out.push_back(r.label);
  } else {
    for (const auto& t : sentence.tokens) out.push_back(t.gold);
  }
  return out;
}

std::vector<int> candidate_tokens(const Candidate& c) {
  std::vector<int> out = span_tokens(c.x);
  if (c.tail) {
    for (int i : span_tokens(*c.tail))
      if (!c.x.contains(i)) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Array fuse(const std::map<NodeKind, Array>& per_edge, const Array& gate, Fusion fusion) {
  Array total;
  for (const auto& [node, logits] : per_edge) {
    if (total.empty()) {
      total = logits;
      continue;
    }
    if (logits.shape() != total.shape()) throw DimensionError("edge logits differ in shape");
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += logits[i];
  }
  if (fusion == Fusion::Sum) return total;
  if (gate.shape() != total.shape()) throw DimensionError("gate shape differs from edge logits");
  Array out(total.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gate[i] * num::sigmoid(total[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(SCMSpec spec, EncoderConfig encoder, std::shared_ptr<const Vocabularies> vocabs)
    : spec_(std::move(spec)), enc_cfg_(encoder), vocabs_(std::move(vocabs)) {
  if (!vocabs_) throw UsageError("model needs vocabularies");
  spec_.validate();
  sizes_ = VocabSizes::of(*vocabs_);
  std::mt19937_64 rng(enc_cfg_.seed);
  build(rng);
}

void Model::build(std::mt19937_64& rng) {
  params_ = std::make_unique<num::ParameterSet>();
  encoder_ = std::make_unique<Encoder>(enc_cfg_, sizes_, *params_, rng);
  const std::size_t c = spec_.classes;
  const std::size_t z_in = spec_.feature_dim * (spec_.task == Task::RE ? 2 : 1);
  auto make = [&](const std::string& name, std::size_t rows, std::size_t cols, double bound = 0.0) -> Parameter& {
    Array a(rows, cols);
    num::init_uniform(a, rng, bound);
    return params_->add(name, std::move(a));
  };
  for (NodeKind n : spec_.nodes) {
    std::size_t in = 0;
    switch (n) {
      case NodeKind::S: in = encoder_->state_dim(); break;
      case NodeKind::X: in = enc_cfg_.x_dim; break;
      case NodeKind::POS:
        feature_tables_[n] = &make("feat.pos", sizes_.pos, spec_.feature_dim, 0.5);
        in = z_in;
        break;
      case NodeKind::NER:
        feature_tables_[n] = &make("feat.ner", sizes_.ner, spec_.feature_dim, 0.5);
        in = z_in;
        break;
    }
    edges_[n] = &make("edge." + std::string(to_string(n)), c, in);
  }
  if (spec_.fusion == Fusion::Gated) gate_ = &make("edge.gate", c, enc_cfg_.x_dim);
}

Model::Encoded Model::encode(Tape& tape, const Sentence& sentence, const Noise* noise) const {
  Encoded enc;
  enc.hidden = encoder_->bilstm_encode(tape, encoder_->embed(tape, sentence, noise).features);
  if (enc_cfg_.kind == EncoderKind::Gcn)
    enc.token_reps = encoder_->gcn_encode(tape, enc.hidden.states, sentence);
  else
    enc.token_reps = encoder_->dep_concat_encode(tape, enc.hidden.states, sentence);
  return enc;
}

Var Model::x_rows(Tape& tape, const Encoded& enc, std::span<const Candidate> cands) const {
  const std::size_t n = enc.token_reps.rows();
  if (cands.empty()) throw UsageError("no candidates");
  for (const auto& c : cands) {
    if (c.x.begin < 0 || static_cast<std::size_t>(c.x.end) > n || c.x.begin >= c.x.end)
      throw IndexError("candidate span " + std::to_string(c.x.begin) + ":" + std::to_string(c.x.end) +
                       " outside sentence of length " + std::to_string(n));
    if (c.tail && (c.tail->begin < 0 || static_cast<std::size_t>(c.tail->end) > n || c.tail->begin >= c.tail->end))
      throw IndexError("candidate tail span outside sentence");
  }
  std::vector<Var> rows;
  if (enc_cfg_.kind == EncoderKind::Gcn) {
    for (const auto& c : cands) {
      if (!c.tail) throw UsageError("relation candidates need a tail span");
      rows.push_back(encoder_->pair_representation(tape, enc.token_reps, c.x, *c.tail));
    }
    return rows.size() == 1 ? rows[0] : num::concat_rows(rows);
  }
  bool singles = true;
  std::vector<std::size_t> ids;
  for (const auto& c : cands) {
    singles = singles && c.x.size() == 1;
    ids.push_back(static_cast<std::size_t>(c.x.begin));
  }
  if (singles) return num::gather_rows(enc.token_reps, std::move(ids));
  for (const auto& c : cands) rows.push_back(span_pool(enc.token_reps, c.x));
  return rows.size() == 1 ? rows[0] : num::concat_rows(rows);
}

Var Model::s_rows(const Encoded& enc, std::size_t m) const { return num::repeat_rows(enc.hidden.pooled, m); }

Var Model::z_rows(Tape& tape, NodeKind node, const Sentence& sentence, std::span<const Candidate> cands, bool masked,
                  const Noise* noise, double feature_dropout) const {
  auto it = feature_tables_.find(node);
  if (it == feature_tables_.end())
    throw UsageError("node " + std::string(to_string(node)) + " is not part of this model");
  const std::size_t rows = it->second->value.rows();
  auto id_at = [&](int token) -> std::size_t {
    if (masked) return Vocab::kMask;
    const Token& t = sentence.tokens.at(static_cast<std::size_t>(token));
    int id = node == NodeKind::POS ? t.pos : t.ner.value_or(Vocab::kUnk);
    if (id < 0 || static_cast<std::size_t>(id) >= rows) id = Vocab::kUnk;
    if (noise && noise->rng && feature_dropout > 0.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(*noise->rng) < feature_dropout)
      id = Vocab::kMask;
    return static_cast<std::size_t>(id);
  };
  Var table = tape.parameter(*it->second);
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  for (const auto& c : cands) {
    first.push_back(id_at(c.x.begin));
    if (spec_.task == Task::RE) second.push_back(id_at(c.tail ? c.tail->begin : c.x.begin));
  }
  Var z = num::gather_rows(table, std::move(first));
  if (spec_.task == Task::RE) z = num::concat_cols({z, num::gather_rows(table, std::move(second))});
  return z;
}

NodeInputs Model::node_inputs(Tape& tape, const Sentence& sentence, std::span<const Candidate> cands,
                              const Noise* noise, double feature_dropout) const {
  const Encoded enc = encode(tape, sentence, noise);
  NodeInputs in;
  in.h[NodeKind::S] = s_rows(enc, cands.size());
  in.h[NodeKind::X] = x_rows(tape, enc, cands);
  for (NodeKind n : spec_.features()) in.h[n] = z_rows(tape, n, sentence, cands, false, noise, feature_dropout);
  return in;
}

Var Model::edge(Tape& tape, NodeKind node, Var h) const {
  auto it = edges_.find(node);
  if (it == edges_.end()) throw UsageError("node " + std::string(to_string(node)) + " is not part of this model");
  return num::matmul_nt(h, tape.parameter(*it->second));
}

Var Model::gate(Tape& tape, Var h_x) const {
  if (!gate_) throw UsageError("model has no gate");
  return num::matmul_nt(h_x, tape.parameter(*gate_));
}

EdgeLogits Model::logits(Tape& tape, const NodeInputs& inputs) const {
  EdgeLogits out;
  Var total;
  for (NodeKind n : spec_.nodes) {
    auto it = inputs.h.find(n);
    if (it == inputs.h.end()) throw UsageError("missing input for node " + std::string(to_string(n)));
    Var e = edge(tape, n, it->second);
    out.per_edge[n] = e;
    total = total.valid() ? num::add(total, e) : e;
  }
  if (spec_.fusion == Fusion::Gated) {
    out.gate = gate(tape, inputs.h.at(NodeKind::X));
    out.fused = num::mul(out.gate, num::sigmoid(total));
  } else {
    out.fused = total;
  }
  return out;
}

Var Model::loss(const EdgeLogits& logits, std::span<const int> golds) const {
  Var total = num::cross_entropy(logits.fused, golds);
  for (const auto& [node, e] : logits.per_edge) total = num::add(total, num::cross_entropy(e, golds));
  return total;
}

std::vector<LogitBundle> Model::bundles(const EdgeLogits& logits) {
  const std::size_t m = logits.fused.rows();
  std::vector<LogitBundle> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].candidate = i;
    out[i].fused = logits.fused.value().row_copy(i);
    for (const auto& [node, e] : logits.per_edge) out[i].per_edge[node] = e.value().row_copy(i);
    if (logits.gate.valid()) out[i].gate = logits.gate.value().row_copy(i);
  }
  return out;
}

LogitBundle Model::forward(const Sentence& sentence, const Candidate& candidate) const {
  Tape tape(Tape::Mode::Inference);
  const Candidate c[] = {candidate};
  return bundles(logits(tape, node_inputs(tape, sentence, c)))[0];
}

std::vector<LogitBundle> Model::forward_all(const Sentence& sentence) const {
  const auto cands = candidates_of(sentence, spec_.task);
  if (cands.empty()) return {};
  Tape tape(Tape::Mode::Inference);
  return bundles(logits(tape, node_inputs(tape, sentence, cands)));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json vocab_json(const Vocab& v) { return v.tokens(); }

void fill_vocab(Vocab& v, const json& tokens) {
  for (const auto& t : tokens) v.add(t.get<std::string>());
}

json spec_json(const SCMSpec& s) {
  json nodes = json::array();
  for (NodeKind n : s.nodes) nodes.push_back(std::string(to_string(n)));
  return {{"task", std::string(to_string(s.task))},
          {"nodes", nodes},
          {"fusion", std::string(to_string(s.fusion))},
          {"classes", s.classes},
          {"feature_dim", s.feature_dim}};
}

json encoder_json(const EncoderConfig& e) {
  return {{"word_dim", e.word_dim},     {"pos_dim", e.pos_dim},       {"deprel_dim", e.deprel_dim},
          {"hidden_dim", e.hidden_dim}, {"x_dim", e.x_dim},           {"gcn_dim", e.gcn_dim},
          {"kind", std::string(to_string(e.kind))}, {"gcn_layers", e.gcn_layers}, {"dropout", e.dropout},
          {"word_dropout", e.word_dropout},         {"use_syntax", e.use_syntax}, {"seed", e.seed}};
}

}  // namespace

std::string Model::header_json(const std::string& extra_json) const {
  json h;
  h["format"] = "cfie-model";
  h["spec"] = spec_json(spec_);
  h["encoder"] = encoder_json(enc_cfg_);
  h["vocabs"] = {{"words", vocab_json(vocabs_->words)},
                 {"pos", vocab_json(vocabs_->pos)},
                 {"deprels", vocab_json(vocabs_->deprels)},
                 {"ner", vocab_json(vocabs_->ner)},
                 {"labels", vocab_json(vocabs_->labels)}};
  h["sizes"] = {{"words", sizes_.words}, {"pos", sizes_.pos}, {"deprels", sizes_.deprels}, {"ner", sizes_.ner},
                {"labels", sizes_.labels}};
  h["extra"] = json::parse(extra_json);
  return h.dump();
}

void Model::save(const std::filesystem::path& path, const std::string& extra_json) const {
  num::save_checkpoint(path, header_json(extra_json), *params_);
}

Model Model::load(const std::filesystem::path& path, std::string* extra_json) {
  const auto data = num::load_checkpoint(path);
  json h;
  try {
    h = json::parse(data.header);
  } catch (const json::exception& e) {
    throw VersionError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (h.value("format", "") != "cfie-model") throw VersionError("checkpoint header lacks the cfie-model tag");
    SCMSpec spec;
    const auto& s = h.at("spec");
    spec.task = parse_task(s.at("task").get<std::string>());
    spec.nodes.clear();
    for (const auto& n : s.at("nodes")) spec.nodes.push_back(parse_node(n.get<std::string>()));
    spec.fusion = parse_fusion(s.at("fusion").get<std::string>());
    spec.classes = s.at("classes").get<std::size_t>();
    spec.feature_dim = s.at("feature_dim").get<std::size_t>();
    EncoderConfig e;
    const auto& ej = h.at("encoder");
    e.word_dim = ej.at("word_dim");
    e.pos_dim = ej.at("pos_dim");
    e.deprel_dim = ej.at("deprel_dim");
    e.hidden_dim = ej.at("hidden_dim");
    e.x_dim = ej.at("x_dim");
    e.gcn_dim = ej.at("gcn_dim");
    e.kind = parse_encoder_kind(ej.at("kind").get<std::string>());
    e.gcn_layers = ej.at("gcn_layers");
    e.dropout = ej.at("dropout");
    e.word_dropout = ej.at("word_dropout");
    e.use_syntax = ej.at("use_syntax");
    e.seed = ej.at("seed");
    auto vocabs = std::make_shared<Vocabularies>();
    const auto& vj = h.at("vocabs");
    fill_vocab(vocabs->words, vj.at("words"));
    fill_vocab(vocabs->pos, vj.at("pos"));
    fill_vocab(vocabs->deprels, vj.at("deprels"));
    fill_vocab(vocabs->ner, vj.at("ner"));
    fill_vocab(vocabs->labels, vj.at("labels"));
    Model model(spec, e, vocabs);
    const auto& sz = h.at("sizes");
    if (model.sizes_.words != sz.at("words").get<std::size_t>() || model.sizes_.labels != sz.at("labels").get<std::size_t>())
      throw VersionError("checkpoint vocabulary sizes disagree with its header");
    num::assign_parameters(*model.params_, data);
    if (extra_json) *extra_json = h.contains("extra") ? h.at("extra").dump() : "{}";
    return model;
  } catch (const json::exception& ex) {
    throw VersionError("malformed checkpoint header: " + std::string(ex.what()));
  } catch (const ConfigError& ex) {
    throw VersionError("incompatible checkpoint header: " + std::string(ex.what()));
  } catch (const UsageError& ex) {
    throw VersionError("incompatible checkpoint header: " + std::string(ex.what()));
  }
}

double loss_value(const std::vector<LogitBundle>& bundles, std::span<const int> golds) {
  if (bundles.size() != golds.size()) throw DimensionError("one gold per candidate required");
  if (bundles.empty()) throw UsageError("loss over zero candidates");
  double fused = 0.0;
  std::map<NodeKind, double> edges;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    fused += num::cross_entropy(bundles[i].fused.data(), golds[i]);
    for (const auto& [node, e] : bundles[i].per_edge) edges[node] += num::cross_entropy(e.data(), golds[i]);
  }
  const double m = static_cast<double>(bundles.size());
  double total = fused / m;
  for (const auto& [node, v] : edges) total += v / m;
  return total;
}

}  // namespace cfie
