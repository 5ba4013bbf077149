#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cfie/encoder.hpp"
#include "cfie/errors.hpp"
#include "cfie/scm.hpp"
#include "../support/gradcheck.hpp"

using namespace cfie;
using num::Array;
using num::Tape;

namespace {

Model small_model(Task task, Fusion fusion = Fusion::Sum, bool syntax = true) {
  const char* text = task == Task::NER ? fixture::kNerText : task == Task::ED ? fixture::kEdText : fixture::kReText;
  auto vocabs = parse_conll(text, task).vocabs;
  SCMSpec spec = default_spec(task, vocabs->labels.size());
  spec.fusion = fusion;
  EncoderConfig enc = gradcheck::tiny_encoder(task == Task::RE ? EncoderKind::Gcn : EncoderKind::DepConcat);
  enc.use_syntax = syntax;
  return Model(spec, enc, vocabs);
}

}  // namespace

TEST_CASE("default specs follow the task") {
  CHECK(default_spec(Task::NER, 5).nodes == std::vector<NodeKind>{NodeKind::S, NodeKind::X, NodeKind::POS});
  CHECK(default_spec(Task::ED, 5).has(NodeKind::NER));
  CHECK(default_spec(Task::RE, 5).has(NodeKind::NER));
  const SCMSpec ed = default_spec(Task::ED, 5);
  CHECK_FALSE(ablate(ed, {NodeKind::NER}).has(NodeKind::NER));
  CHECK_THROWS_AS(ablate(ed, {NodeKind::S}), UsageError);
  SCMSpec bad = default_spec(Task::NER, 5);
  bad.nodes.push_back(NodeKind::NER);
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK(parse_node_list("x,ner") == std::vector<NodeKind>{NodeKind::X, NodeKind::NER});
}

TEST_CASE("candidates per task") {
  const Corpus ner = parse_conll(fixture::kNerText, Task::NER);
  CHECK(candidates_of(ner.sentences[0], Task::NER).size() == 4);
  const Corpus re = parse_conll(fixture::kReText, Task::RE);
  const auto cands = candidates_of(re.sentences[0], Task::RE);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].tail.has_value());
  CHECK(candidate_tokens(cands[0]) == std::vector<int>{0, 3});
}

TEST_CASE("sum fusion is the sum of the edges and gated fusion gates it") {
  std::map<NodeKind, Array> edges = {{NodeKind::S, Array::row_vector({1, -1})},
                                     {NodeKind::X, Array::row_vector({0.5, 2})}};
  CHECK(fuse(edges, {}, Fusion::Sum) == Array::row_vector({1.5, 1}));
  const Array gated = fuse(edges, Array::row_vector({2, 3}), Fusion::Gated);
  CHECK(gated[0] == doctest::Approx(2.0 * num::sigmoid(1.5)));
  CHECK(gated[1] == doctest::Approx(3.0 * num::sigmoid(1.0)));
}

TEST_CASE("forward bundles carry one logit row per edge") {
  Model m = small_model(Task::ED);
  const Corpus c = parse_conll(fixture::kEdText, Task::ED);
  const auto bundles = m.forward_all(c.sentences[0]);
  REQUIRE(bundles.size() == 4);
  for (const auto& b : bundles) {
    CHECK(b.fused.cols() == m.classes());
    CHECK(b.per_edge.size() == 4);
    CHECK(fuse(b.per_edge, b.gate, Fusion::Sum) == b.fused);
  }
}

TEST_CASE("tape loss equals the value-level oracle") {
  for (Task task : {Task::NER, Task::ED, Task::RE}) {
    for (Fusion fusion : {Fusion::Sum, Fusion::Gated}) {
      Model m = small_model(task, fusion);
      const char* text = task == Task::NER ? fixture::kNerText : task == Task::ED ? fixture::kEdText
                                                                                   : fixture::kReText;
      const Corpus c = parse_conll(text, task);
      for (const auto& s : c.sentences) {
        const auto cands = candidates_of(s, task);
        const auto golds = golds_of(s, task);
        Tape tape(Tape::Mode::Inference);
        const double tape_loss = m.loss(m.logits(tape, m.node_inputs(tape, s, cands)), golds).value()[0];
        CHECK(tape_loss == doctest::Approx(loss_value(m.forward_all(s), golds)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pooled spans and range errors") {
  Tape tape(Tape::Mode::Inference);
  num::Var reps = tape.constant(Array::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  CHECK(span_pool(reps, Span{1, 3}).value() == Array::row_vector({4, 5}));
  CHECK_THROWS_AS(span_pool(reps, Span{2, 2}), UsageError);
  CHECK_THROWS_AS(span_pool(reps, Span{2, 4}), IndexError);
}

TEST_CASE("gcn layer matches a hand computation") {
  Model m = small_model(Task::RE);
  m.params().at("enc.gcn.in_b").value.fill(0.05);
  m.params().at("enc.gcn.b0").value.fill(-0.02);
  const Encoder& enc = m.encoder();
  Tape tape(Tape::Mode::Inference);
  const Array states = Array::from_rows({{0.1, -0.2, 0.3, 0.4}, {0.5, 0.0, -0.1, 0.2}});
  const DepTree tree({kRoot, 0});
  const Array adj = normalized_adjacency(tree);
  const Array got = enc.gcn_encode(tape, tape.constant(states), adj).value();

  const auto& p = m.params();
  const Array& w_in = p.at("enc.gcn.in_w").value;
  const Array& b_in = p.at("enc.gcn.in_b").value;
  const Array& w1 = p.at("enc.gcn.w0").value;
  const Array& b1 = p.at("enc.gcn.b0").value;
  auto matmul = [](const Array& a, const Array& b) {
    Array out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j)
        for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
  };
  Array h = matmul(states, w_in);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += b_in(0, j);
  Array z = matmul(matmul(adj, h), w1);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) = std::max(0.0, z(i, j) + b1(0, j));
  REQUIRE(got.shape() == z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(got[i] == doctest::Approx(z[i]).epsilon(1e-12));
}

TEST_CASE("switching syntax off makes heads rootless and hides the tree") {
  Model with = small_model(Task::NER, Fusion::Sum, true);
  Model without = small_model(Task::NER, Fusion::Sum, false);
  const Corpus c = parse_conll(fixture::kNerText, Task::NER);
  const Sentence& s = c.sentences[0];
  CHECK(with.encoder().effective_heads(s) == s.heads());
  for (int h : without.encoder().effective_heads(s)) CHECK(h == kRoot);
  // Changing the tree must not move a syntax-free model's logits.
  Sentence other = s;
  other.tokens[0].head = 3;
  other.tokens[1].head = 0;
  const auto a = without.forward_all(s);
  const auto b = without.forward_all(other);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].fused == b[k].fused);
  const auto a2 = with.forward_all(s);
  const auto b2 = with.forward_all(other);
  bool moved = false;
  for (std::size_t k = 0; k < a2.size(); ++k) moved |= !(a2[k].fused == b2[k].fused);
  CHECK(moved);
}

TEST_CASE("model checkpoints round-trip logits and reject foreign files") {
  Model m = small_model(Task::RE, Fusion::Gated);
  const auto dir = std::filesystem::temp_directory_path() / "cfie_unit_model";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  m.save(path, "{\"note\":\"x\"}");
  std::string extra;
  Model back = Model::load(path, &extra);
  CHECK(extra == "{\"note\":\"x\"}");
  CHECK(back.spec().fusion == Fusion::Gated);
  const Corpus c = parse_conll(fixture::kReText, Task::RE);
  const auto a = m.forward_all(c.sentences[0]);
  const auto b = back.forward_all(c.sentences[0]);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].fused == b[k].fused);

  {
    std::ofstream junk(dir / "junk.ckpt");
    junk << "hello\n";
  }
  CHECK_THROWS_AS(Model::load(dir / "junk.ckpt"), VersionError);
  CHECK_THROWS_AS(Model::load(dir / "missing.ckpt"), PathError);
}
