#include "cfie/counterfactual.hpp"

#include <algorithm>
#include <map>

#include "cfie/errors.hpp"

namespace cfie {

using num::Array;
using num::Tape;
using num::Var;

namespace {

struct StrategyName {
  MaskStrategy strategy;
  const char* name;
};

constexpr StrategyName kStrategyNames[] = {
    {MaskStrategy::EntityOnly, "entity"},         {MaskStrategy::OneHop, "one-hop"},
    {MaskStrategy::TwoHop, "two-hop"},            {MaskStrategy::TokenPlusOneHop, "token+1hop"},
    {MaskStrategy::NullInput, "null"},            {MaskStrategy::FeatureNER, "feature-ner"},
    {MaskStrategy::FeaturePOS, "feature-pos"},
};

std::string trim_copy(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

MaskSpec MaskSpec::parse(std::string_view text) {
  MaskSpec spec;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item =
        trim_copy(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty() && item != "none") {
      bool found = false;
      for (const auto& [strategy, name] : kStrategyNames) {
        if (item == name) {
          spec = spec | MaskSpec(strategy);
          found = true;
        }
      }
      if (!found) throw UsageError("unknown mask strategy '" + item + "'");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return spec;
}

std::string MaskSpec::to_string() const {
  std::string out;
  for (const auto& [strategy, name] : kStrategyNames) {
    if (!has(strategy)) continue;
    if (!out.empty()) out += ',';
    out += name;
  }
  return out.empty() ? "none" : out;
}

MaskSpec default_mask(Task task) {
  return task == Task::RE ? MaskSpec(MaskStrategy::EntityOnly) : MaskSpec(MaskStrategy::OneHop);
}

void check_legal(const MaskSpec& spec, Task task) {
  if (task == Task::NER && spec.has(MaskStrategy::FeatureNER))
    throw UsageError("feature-ner masking is illegal for the NER task");
}

std::vector<int> mask_set(const DepTree& tree, const Candidate& candidate, const MaskSpec& spec) {
  const auto own = candidate_tokens(candidate);
  for (int i : own)
    if (i < 0 || static_cast<std::size_t>(i) >= tree.size())
      throw IndexError("candidate token " + std::to_string(i) + " outside sentence of length " +
                       std::to_string(tree.size()));
  std::vector<char> hit(tree.size(), 0);
  if (spec.has(MaskStrategy::NullInput)) std::fill(hit.begin(), hit.end(), 1);
  if (spec.has(MaskStrategy::EntityOnly) || spec.has(MaskStrategy::TokenPlusOneHop))
    for (int i : own) hit[static_cast<std::size_t>(i)] = 1;
  if (spec.has(MaskStrategy::OneHop) || spec.has(MaskStrategy::TokenPlusOneHop))
    for (int i : khop_neighbors(tree, own, 1)) hit[static_cast<std::size_t>(i)] = 1;
  if (spec.has(MaskStrategy::TwoHop))
    for (int i : khop_neighbors(tree, own, 2)) hit[static_cast<std::size_t>(i)] = 1;
  std::vector<int> out;
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) out.push_back(static_cast<int>(i));
  return out;
}

MaskedSentence apply_mask(const Sentence& sentence, const Candidate& candidate, const MaskSpec& spec, Task task) {
  check_legal(spec, task);
  MaskedSentence out;
  out.sentence = sentence;
  out.masked = mask_set(DepTree::of(sentence), candidate, spec);
  for (int i : out.masked) {
    Token& t = out.sentence.tokens[static_cast<std::size_t>(i)];
    t.word = Vocab::kMask;
    t.pos = Vocab::kMask;
  }
  const auto own = candidate_tokens(candidate);
  if (spec.has(MaskStrategy::FeaturePOS)) {
    out.masked_features.push_back(NodeKind::POS);
    for (int i : own) out.sentence.tokens[static_cast<std::size_t>(i)].pos = Vocab::kMask;
  }
  if (spec.has(MaskStrategy::FeatureNER)) {
    out.masked_features.push_back(NodeKind::NER);
    for (int i : own) out.sentence.tokens[static_cast<std::size_t>(i)].ner = Vocab::kMask;
  }
  return out;
}

namespace {

std::string mask_key(const MaskedSentence& ms, const Candidate& c) {
  std::string key;
  for (int i : ms.masked) key += std::to_string(i) + ",";
  if (!ms.masked_features.empty()) {
    key += "|";
    for (NodeKind n : ms.masked_features) key += std::string(to_string(n)) + ",";
    for (int i : candidate_tokens(c)) key += std::to_string(i) + ",";
  }
  return key;
}

bool contains(const std::vector<NodeKind>& v, NodeKind n) { return std::find(v.begin(), v.end(), n) != v.end(); }

}  // namespace

std::vector<Components> counterfactual_components(const Model& model, const Sentence& sentence,
                                                  std::span<const Candidate> candidates, const MaskSpec& spec,
                                                  const InterventionOptions& options) {
  const SCMSpec& scm = model.spec();
  for (NodeKind n : options.intervene) {
    if (n == NodeKind::S) throw UsageError("S cannot be intervened; use context_sees_counterfactual");
    if (!scm.has(n)) throw UsageError("cannot intervene on node " + std::string(to_string(n)) + ": not in the model");
  }
  if (candidates.empty()) return {};
  check_legal(spec, scm.task);

  Tape tape(Tape::Mode::Inference);
  const Model::Encoded enc = model.encode(tape, sentence);
  NodeInputs in;
  in.h[NodeKind::S] = model.s_rows(enc, candidates.size());
  in.h[NodeKind::X] = model.x_rows(tape, enc, candidates);
  for (NodeKind n : scm.features()) in.h[n] = model.z_rows(tape, n, sentence, candidates);
  const EdgeLogits el = model.logits(tape, in);
  const auto bundles = Model::bundles(el);

  // MASK-row edges for intervened feature nodes are candidate independent.
  std::map<NodeKind, Array> masked_edge;
  for (NodeKind n : scm.features()) {
    if (!contains(options.intervene, n)) continue;
    const Candidate one[] = {candidates[0]};
    masked_edge[n] = model.edge(tape, n, model.z_rows(tape, n, sentence, one, true)).value();
  }

  const bool intervene_x = contains(options.intervene, NodeKind::X);
  std::map<std::string, std::pair<Model::Encoded, Sentence>> cache;
  std::vector<Components> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate one[] = {candidates[i]};
    Components comp;
    comp.factual = bundles[i];
    comp.y_x = bundles[i].fused;
    comp.h_x = in.h[NodeKind::X].value().row_copy(i);

    const Model::Encoded* cf_enc = nullptr;
    const Sentence* cf_sentence = &sentence;
    MaskedSentence ms;
    if (intervene_x || options.context_sees_counterfactual || !spec.empty()) {
      ms = apply_mask(sentence, candidates[i], spec, scm.task);
      const std::string key = mask_key(ms, candidates[i]);
      auto it = cache.find(key);
      if (it == cache.end()) {
        Sentence copy = ms.sentence;
        Model::Encoded e = model.encode(tape, copy);
        it = cache.emplace(key, std::make_pair(e, std::move(copy))).first;
      }
      cf_enc = &it->second.first;
      cf_sentence = &it->second.second;
    }

    Var hx_star = intervene_x ? model.x_rows(tape, *cf_enc, one) : num::slice_rows(in.h[NodeKind::X], i, i + 1);
    comp.h_star = hx_star.value();
    std::map<NodeKind, Array> edges;
    for (NodeKind n : scm.nodes) {
      switch (n) {
        case NodeKind::X:
          edges[n] = model.edge(tape, n, hx_star).value();
          comp.x_edge_cf = edges[n];
          break;
        case NodeKind::S:
          edges[n] = options.context_sees_counterfactual ? model.edge(tape, n, model.s_rows(*cf_enc, 1)).value()
                                                         : bundles[i].per_edge.at(n);
          break;
        default:
          if (masked_edge.count(n)) {
            edges[n] = masked_edge[n];
          } else if (contains(ms.masked_features, n)) {
            edges[n] = model.edge(tape, n, model.z_rows(tape, n, *cf_sentence, one)).value();
          } else {
            edges[n] = bundles[i].per_edge.at(n);
          }
      }
    }
    Array gate;
    if (scm.fusion == Fusion::Gated) gate = model.gate(tape, hx_star).value();
    comp.y_star = fuse(edges, gate, scm.fusion);
    out.push_back(std::move(comp));
  }
  return out;
}

CounterfactualResult counterfactual_logits(const Model& model, const Sentence& sentence, const Candidate& candidate,
                                           const MaskSpec& spec, const InterventionOptions& options) {
  const Candidate one[] = {candidate};
  auto comps = counterfactual_components(model, sentence, one, spec, options);
  return {comps[0].y_star, comps[0].h_star, comps[0].x_edge_cf};
}

CounterfactualResult intervene_features(const Model& model, const Sentence& sentence, const Candidate& candidate,
                                        const std::vector<NodeKind>& nodes, const MaskSpec& spec) {
  for (NodeKind n : nodes) {
    if (n != NodeKind::X && n != NodeKind::POS && n != NodeKind::NER)
      throw UsageError("only X, POS and NER can be intervened");
    if (!model.spec().has(n))
      throw UsageError("cannot intervene on node " + std::string(to_string(n)) + ": not in the model");
  }
  InterventionOptions options;
  options.intervene = nodes;
  return counterfactual_logits(model, sentence, candidate, spec, options);
}

}  // namespace cfie
