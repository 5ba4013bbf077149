#include <doctest.h>

#include "cfie/counterfactual.hpp"
#include "cfie/errors.hpp"
#include "cfie/inference.hpp"
#include "../support/gradcheck.hpp"

using namespace cfie;
using num::Array;

namespace {

const std::vector<MaskSpec>& all_specs() {
  static const std::vector<MaskSpec> specs = {
      MaskStrategy::EntityOnly, MaskStrategy::OneHop,     MaskStrategy::TwoHop,
      MaskStrategy::TokenPlusOneHop, MaskStrategy::NullInput, MaskStrategy::FeaturePOS,
      MaskSpec(MaskStrategy::EntityOnly) | MaskStrategy::TwoHop,
      MaskSpec(MaskStrategy::OneHop) | MaskStrategy::FeatureNER};
  return specs;
}

Model model_for(const Corpus& c, Task task, Fusion fusion = Fusion::Sum) {
  SCMSpec spec = default_spec(task, c.vocabs->labels.size());
  spec.fusion = fusion;
  return Model(spec, gradcheck::tiny_encoder(task == Task::RE ? EncoderKind::Gcn : EncoderKind::DepConcat), c.vocabs);
}

}  // namespace

TEST_CASE("mask spec names round-trip") {
  CHECK(MaskSpec::parse("one-hop") == MaskSpec(MaskStrategy::OneHop));
  CHECK(MaskSpec::parse("token+1hop") == MaskSpec(MaskStrategy::TokenPlusOneHop));
  CHECK(MaskSpec::parse("none").empty());
  for (const MaskSpec& s : all_specs()) CHECK(MaskSpec::parse(s.to_string()) == s);
  CHECK_THROWS_AS(MaskSpec::parse("three-hop"), UsageError);
  CHECK_THROWS_AS(check_legal(MaskStrategy::FeatureNER, Task::NER), UsageError);
  CHECK(default_mask(Task::RE) == MaskSpec(MaskStrategy::EntityOnly));
}

TEST_CASE("mask sets agree with the all-pairs oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 14);
    const auto heads = oracle::random_heads(rng, n);
    const DepTree tree(heads);
    const int b = static_cast<int>(rng() % n);
    const int e = std::min<int>(static_cast<int>(n), b + 1 + static_cast<int>(rng() % 2));
    Candidate c{{b, e}, std::nullopt};
    std::vector<int> own;
    for (int i = b; i < e; ++i) own.push_back(i);
    if (trial % 3 == 0) {
      const int t = static_cast<int>(rng() % n);
      if (t < b || t >= e) {
        c.tail = Span{t, t + 1};
        own.push_back(t);
        std::sort(own.begin(), own.end());
      }
    }
    for (const MaskSpec& s : all_specs()) CHECK(mask_set(tree, c, s) == oracle::mask_set(heads, own, s.flags));
  }
}

TEST_CASE("apply_mask leaves gold labels and the tree untouched") {
  const Corpus c = parse_conll(fixture::kEdText, Task::ED);
  const Sentence& s = c.sentences[0];
  const Candidate cand{{1, 2}, std::nullopt};
  for (const MaskSpec& spec : all_specs()) {
    const MaskedSentence m = apply_mask(s, cand, spec, Task::ED);
    REQUIRE(m.sentence.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(m.sentence.tokens[i].gold == s.tokens[i].gold);
      CHECK(m.sentence.tokens[i].head == s.tokens[i].head);
      CHECK(m.sentence.tokens[i].deprel == s.tokens[i].deprel);
      const bool masked = std::find(m.masked.begin(), m.masked.end(), static_cast<int>(i)) != m.masked.end();
      if (masked) {
        CHECK(m.sentence.tokens[i].word == Vocab::kMask);
        CHECK(m.sentence.tokens[i].pos == Vocab::kMask);
      } else if (!spec.has(MaskStrategy::FeaturePOS) || !cand.x.contains(static_cast<int>(i))) {
        CHECK(m.sentence.tokens[i].word == s.tokens[i].word);
        CHECK(m.sentence.tokens[i].pos == s.tokens[i].pos);
      }
    }
  }
  const MaskedSentence one_hop = apply_mask(s, cand, MaskStrategy::OneHop, Task::ED);
  CHECK(one_hop.masked == std::vector<int>{0, 3});
  const MaskedSentence ner = apply_mask(s, cand, MaskStrategy::FeatureNER, Task::ED);
  CHECK(ner.sentence.tokens[1].ner == Vocab::kMask);
  CHECK(ner.masked.empty());
}

TEST_CASE("substitution identity holds under sum fusion") {
  const auto data = fixture::small_synth(Task::NER, 60);
  Model m = model_for(data.train, Task::NER);
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < 20; ++i) {
    const Sentence& s = data.train.sentences[i];
    const auto cands = candidates_of(s, Task::NER);
    const MaskSpec spec = all_specs()[i % 5];
    const auto comps = counterfactual_components(m, s, cands, spec);
    const Array& w = m.params().at("edge.X").value;
    for (const auto& c : comps) {
      for (std::size_t k = 0; k < m.classes(); ++k) {
        double proj = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) proj += w(k, j) * (c.h_x[j] - c.h_star[j]);
        CHECK(std::abs((c.y_x[k] - c.y_star[k]) - proj) <= 1e-9);
      }
    }
  }
}

TEST_CASE("shared encoder passes give the same answer as one candidate at a time") {
  const auto data = fixture::small_synth(Task::ED, 30);
  Model m = model_for(data.train, Task::ED, Fusion::Gated);
  const Sentence& s = data.train.sentences[3];
  const auto cands = candidates_of(s, Task::ED);
  const MaskSpec spec(MaskStrategy::OneHop);
  const auto all = counterfactual_components(m, s, cands, spec);
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const CounterfactualResult one = counterfactual_logits(m, s, cands[k], spec);
    for (std::size_t j = 0; j < one.y_star.size(); ++j) {
      CHECK(one.y_star[j] == doctest::Approx(all[k].y_star[j]).epsilon(1e-12));
      CHECK(one.x_edge_cf[j] == doctest::Approx(all[k].x_edge_cf[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("S keeps the factual sentence unless the diagnostic flag is set") {
  const auto data = fixture::small_synth(Task::NER, 30);
  Model m = model_for(data.train, Task::NER);
  const Sentence& s = data.train.sentences[0];
  const auto cands = candidates_of(s, Task::NER);
  const auto plain = counterfactual_components(m, s, cands, MaskStrategy::OneHop);
  InterventionOptions diag;
  diag.context_sees_counterfactual = true;
  const auto flagged = counterfactual_components(m, s, cands, MaskStrategy::OneHop, diag);
  bool differs = false;
  for (std::size_t k = 0; k < plain.size(); ++k) {
    CHECK(plain[k].factual.per_edge.at(NodeKind::S) == flagged[k].factual.per_edge.at(NodeKind::S));
    differs |= !(plain[k].y_star == flagged[k].y_star);
  }
  CHECK(differs);
}

TEST_CASE("an empty mask reproduces the factual logits") {
  const auto data = fixture::small_synth(Task::NER, 30);
  Model m = model_for(data.train, Task::NER);
  const Sentence& s = data.train.sentences[1];
  const auto cands = candidates_of(s, Task::NER);
  const auto comps = counterfactual_components(m, s, cands, MaskSpec{});
  for (const auto& c : comps)
    for (std::size_t j = 0; j < c.y_x.size(); ++j) CHECK(c.y_star[j] == doctest::Approx(c.y_x[j]).epsilon(1e-12));
}

TEST_CASE("feature interventions replace only the listed nodes") {
  const auto data = fixture::small_synth(Task::ED, 30);
  Model m = model_for(data.train, Task::ED);
  const Sentence& s = data.train.sentences[2];
  const Candidate c = candidates_of(s, Task::ED)[0];
  const auto x_only = intervene_features(m, s, c, {NodeKind::X}, MaskStrategy::OneHop);
  const auto cf = counterfactual_logits(m, s, c, MaskStrategy::OneHop);
  CHECK(x_only.y_star == cf.y_star);
  const auto with_ner = intervene_features(m, s, c, {NodeKind::X, NodeKind::NER}, MaskStrategy::OneHop);
  CHECK_FALSE(with_ner.y_star == cf.y_star);
  CHECK_THROWS_AS(intervene_features(m, s, c, {NodeKind::S}, MaskStrategy::OneHop), UsageError);

  const auto ner = fixture::small_synth(Task::NER, 30);
  Model nm = model_for(ner.train, Task::NER);
  const Sentence& ns = ner.train.sentences[0];
  CHECK_THROWS_AS(intervene_features(nm, ns, candidates_of(ns, Task::NER)[0], {NodeKind::NER}, MaskStrategy::OneHop),
                  UsageError);
}
