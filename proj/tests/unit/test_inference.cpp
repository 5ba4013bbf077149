#include <doctest.h>

#include "cfie/errors.hpp"
#include "cfie/inference.hpp"
#include "../support/gradcheck.hpp"

using namespace cfie;
using num::Array;

TEST_CASE("effect arithmetic on a hand example") {
  const Array y = Array::row_vector({2.0, 1.0, 0.0});
  const Array ys = Array::row_vector({1.5, -1.0, 0.5});
  const Array xe = Array::row_vector({0.2, 0.4, -0.2});
  CHECK(tde(y, ys) == Array::row_vector({0.5, 2.0, -0.5}));
  const Array me = main_effect(y, ys, xe, 0.5, 2.0);
  CHECK(me[0] == doctest::Approx(2.0 - 0.75 + 0.4));
  CHECK(me[1] == doctest::Approx(1.0 + 0.5 + 0.8));
  CHECK(me[2] == doctest::Approx(0.0 - 0.25 - 0.4));
  CHECK_THROWS_AS(tde(y, Array::row_vector({1.0})), DimensionError);
}

TEST_CASE("main effect reduces to TDE and to the factual logits") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const Array y = gradcheck::random_array(rng, 1, 7);
    const Array ys = gradcheck::random_array(rng, 1, 7);
    const Array xe = gradcheck::random_array(rng, 1, 7);
    const Array a = main_effect(y, ys, xe, 1.0, 0.0);
    const Array b = tde(y, ys);
    const Array c = main_effect(y, ys, xe, 0.0, 0.0);
    for (std::size_t k = 0; k < 7; ++k) {
      CHECK(std::abs(a[k] - b[k]) <= 1e-12);
      CHECK(std::abs(c[k] - y[k]) <= 1e-12);
    }
  }
}

TEST_CASE("effect configs read modes as alpha and beta") {
  EffectConfig cfg;
  cfg.mode = EffectMode::TDE;
  cfg.alpha = 0.3;
  cfg.beta = 0.7;
  CHECK(cfg.effective_alpha() == 1.0);
  CHECK(cfg.effective_beta() == 0.0);
  cfg.mode = EffectMode::Conventional;
  CHECK(cfg.effective_alpha() == 0.0);
  CHECK_FALSE(cfg.needs_counterfactual());
  CHECK(default_effect(Task::RE).alpha == 0.0);
  CHECK(default_effect(Task::NER).alpha == 1.0);
  CHECK(parse_effect_mode("main-effect") == EffectMode::MainEffect);
  CHECK_THROWS_AS(parse_effect_mode("bogus"), UsageError);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  const std::vector<double> v = {1.0, 3.0, 3.0, -2.0};
  CHECK(argmax(v) == 1);
  const std::vector<double> flat = {0.0, 0.0};
  CHECK(argmax(flat) == 0);
}

TEST_CASE("BIOES decoding examples") {
  using V = std::vector<std::string>;
  auto dec = [](V tags) { return decode_bioes(std::span<const std::string>(tags)); };
  CHECK(dec({"B-PER", "E-PER", "O", "S-LOC"}) ==
        std::vector<TaggedSpan>{{{0, 2}, "PER"}, {{3, 4}, "LOC"}});
  CHECK(dec({"B-PER", "I-PER", "I-PER", "E-PER"}) == std::vector<TaggedSpan>{{{0, 4}, "PER"}});
  CHECK(dec({"B-PER", "I-LOC", "E-LOC"}).empty());
  CHECK(dec({"B-PER", "S-LOC", "E-PER"}) == std::vector<TaggedSpan>{{{1, 2}, "LOC"}});
  CHECK(dec({"I-PER", "E-PER"}).empty());
  CHECK(dec({"B-PER", "B-PER", "E-PER"}) == std::vector<TaggedSpan>{{{1, 3}, "PER"}});
  CHECK(dec({"B-PER"}).empty());
}

TEST_CASE("random tag sequences decode to well-formed spans") {
  const std::vector<std::string> pool = {"O", "B-A", "I-A", "E-A", "S-A", "B-B", "I-B", "E-B", "S-B"};
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<std::string> tags(1 + rng() % 12);
    for (auto& t : tags) t = pool[rng() % pool.size()];
    const auto spans = decode_bioes(std::span<const std::string>(tags));
    CHECK(oracle::well_formed(spans, tags.size()));
    CHECK(oracle::spans_match_tags(spans, tags));
  }
}

TEST_CASE("conventional prediction is the argmax of the fused logits") {
  const auto data = fixture::small_synth(Task::NER, 40);
  const SCMSpec spec = default_spec(Task::NER, data.train.vocabs->labels.size());
  const Model m(spec, gradcheck::tiny_encoder(EncoderKind::DepConcat), data.train.vocabs);
  EffectConfig cfg;
  cfg.mode = EffectMode::Conventional;
  for (std::size_t i = 0; i < 10; ++i) {
    const Sentence& s = data.test.sentences[i];
    const auto bundles = m.forward_all(s);
    const SentencePrediction pred = predict(m, s, cfg);
    REQUIRE(pred.predictions.size() == bundles.size());
    for (std::size_t k = 0; k < bundles.size(); ++k) {
      CHECK(pred.predictions[k].predicted == static_cast<int>(argmax(bundles[k].fused.row(0))));
      CHECK(pred.predictions[k].y_star.size() == 0);
    }
  }
}

TEST_CASE("adding a constant to every class leaves predictions alone") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Array y = gradcheck::random_array(rng, 1, 6);
    Array ys = gradcheck::random_array(rng, 1, 6);
    const Array xe = gradcheck::random_array(rng, 1, 6);
    const std::size_t before = argmax(main_effect(y, ys, xe, 0.8, 0.4).row(0));
    for (std::size_t k = 0; k < 6; ++k) {
      y[k] += 3.25;
      ys[k] -= 1.5;
    }
    CHECK(argmax(main_effect(y, ys, xe, 0.8, 0.4).row(0)) == before);
  }
}
