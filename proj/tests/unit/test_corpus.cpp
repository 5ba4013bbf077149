#include <doctest.h>

#include "cfie/corpus.hpp"
#include "cfie/errors.hpp"
#include "../support/fixtures.hpp"

using namespace cfie;

TEST_CASE("parse reads tokens, heads, tags and ids") {
  const Corpus c = parse_conll(fixture::kNerText, Task::NER);
  REQUIRE(c.sentences.size() == 2);
  const Sentence& s = c.sentences[0];
  CHECK(s.id == "a");
  REQUIRE(s.size() == 4);
  CHECK(s.tokens[0].form == "John");
  CHECK(s.heads() == std::vector<int>{1, 2, kRoot, 2});
  CHECK(c.vocabs->labels.at(s.tokens[0].gold) == "B-PER");
  CHECK_FALSE(s.tokens[0].ner.has_value());
}

TEST_CASE("relation lines attach spans and labels") {
  const Corpus c = parse_conll(fixture::kReText, Task::RE);
  REQUIRE(c.sentences.size() == 1);
  const auto& rels = c.sentences[0].relations;
  REQUIRE(rels.size() == 2);
  CHECK(rels[0].head == Span{0, 1});
  CHECK(rels[0].tail == Span{3, 4});
  CHECK(c.vocabs->labels.at(rels[1].label) == "Employer");
}

TEST_CASE("serialize then parse is the identity") {
  for (auto [text, task] : {std::pair{fixture::kNerText, Task::NER}, std::pair{fixture::kEdText, Task::ED},
                            std::pair{fixture::kReText, Task::RE}}) {
    const Corpus c = parse_conll(text, task);
    const std::string once = serialize_conll(c);
    const Corpus again = parse_conll(once, task);
    CHECK(serialize_conll(again) == once);
    REQUIRE(again.sentences.size() == c.sentences.size());
    for (std::size_t i = 0; i < c.sentences.size(); ++i) {
      CHECK(again.sentences[i].heads() == c.sentences[i].heads());
      CHECK(again.sentences[i].id == c.sentences[i].id);
    }
  }
}

TEST_CASE("synthetic corpora round-trip through text") {
  const auto data = fixture::small_synth(Task::RE, 40);
  const std::string text = serialize_conll(data.train);
  CHECK(serialize_conll(parse_conll(text, Task::RE)) == text);
}

TEST_CASE("malformed lines report their line number") {
  try {
    parse_conll("1\ta\tNN\t0\troot\t_\n", Task::NER);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  try {
    parse_conll("1\ta\tNN\t0\troot\t_\tO\n2\tb\tNN\t9\tdep\t_\tO\n", Task::NER);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_conll("1\ta\tNN\t0\troot\t_\t_\n", Task::NER), ParseError);
}

TEST_CASE("cyclic and multi-root trees name the sentence") {
  const char* cyclic =
      "# id = loop\n"
      "1\ta\tNN\t2\tdep\t_\tO\n"
      "2\tb\tNN\t1\tdep\t_\tO\n";
  try {
    parse_conll(cyclic, Task::NER);
    FAIL("expected a structure error");
  } catch (const StructureError& e) {
    CHECK(std::string(e.what()).find("loop") != std::string::npos);
  }
  const char* two_roots =
      "# id = twin\n"
      "1\ta\tNN\t0\troot\t_\tO\n"
      "2\tb\tNN\t0\troot\t_\tO\n";
  CHECK_THROWS_AS(parse_conll(two_roots, Task::NER), StructureError);
}

TEST_CASE("tree validity check") {
  CHECK(is_valid_tree(std::vector<int>{kRoot}));
  CHECK(is_valid_tree(std::vector<int>{1, kRoot, 1}));
  CHECK_FALSE(is_valid_tree(std::vector<int>{}));
  CHECK_FALSE(is_valid_tree(std::vector<int>{0}));
  CHECK_FALSE(is_valid_tree(std::vector<int>{kRoot, 2, 1}));
  CHECK_FALSE(is_valid_tree(std::vector<int>{kRoot, kRoot}));
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) CHECK(is_valid_tree(oracle::random_heads(rng, 1 + k % 17)));
}

TEST_CASE("vocab reserves UNK and MASK for features only") {
  Vocab features;
  CHECK(features.size() == 2);
  CHECK(features.lookup("never") == Vocab::kUnk);
  const int id = features.add("x");
  CHECK(features.add("x") == id);
  Vocab labels(false);
  CHECK(labels.size() == 0);
  CHECK(labels.lookup("O") == -1);
}

TEST_CASE("tag splitting") {
  CHECK(split_tag("B-PER").prefix == TagPrefix::B);
  CHECK(split_tag("S-LOC").type == "LOC");
  CHECK(split_tag("O").prefix == TagPrefix::O);
  CHECK(split_tag("weird").prefix == TagPrefix::O);
}

TEST_CASE("instance counts and bucket assignment") {
  const Corpus c = parse_conll(fixture::kNerText, Task::NER);
  const auto counts = count_instances(c);
  CHECK(counts.at("PER") == 2);
  CHECK(counts.at("LOC") == 1);

  const std::map<std::string, std::size_t> n = {{"a", 3}, {"b", 50}, {"c", 51}, {"d", 500}, {"e", 501}};
  const BucketSplit split = compute_buckets(n, {"a", "b", "c", "d", "e", "z"}, BucketThresholds{50, 500});
  CHECK(split.bucket_of("a") == Bucket::Few);
  CHECK(split.bucket_of("b") == Bucket::Few);
  CHECK(split.bucket_of("c") == Bucket::Medium);
  CHECK(split.bucket_of("d") == Bucket::Medium);
  CHECK(split.bucket_of("e") == Bucket::Many);
  CHECK(split.bucket_of("z") == Bucket::Few);
  CHECK_FALSE(split.warnings.empty());
  CHECK(split.members(Bucket::Few).size() == 3);
  CHECK_THROWS_AS(compute_buckets(n, BucketThresholds{600, 500}), ConfigError);
}
