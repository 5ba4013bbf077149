#pragma once

#include <memory>
#include <random>
#include <string>

#include "cfie/corpus.hpp"
#include "cfie/synth.hpp"
#include "oracles.hpp"

namespace fixture {

inline const char* kNerText =
    "# id = a\n"
    "1\tJohn\tNNP\t2\tnsubj\t_\tB-PER\n"
    "2\tSmith\tNNP\t3\tnsubj\t_\tE-PER\n"
    "3\tvisited\tVBD\t0\troot\t_\tO\n"
    "4\tParis\tNNP\t3\tobj\t_\tS-LOC\n"
    "\n"
    "# id = b\n"
    "1\tMary\tNNP\t2\tnsubj\t_\tS-PER\n"
    "2\tleft\tVBD\t0\troot\t_\tO\n";

inline const char* kEdText =
    "# id = e1\n"
    "1\tsoldiers\tNNS\t2\tnsubj\tPER\tO\n"
    "2\tkilled\tVBD\t0\troot\tO\tS-Die\n"
    "3\tthe\tDT\t4\tdet\tO\tO\n"
    "4\tprogram\tNN\t2\tobj\tO\tO\n";

inline const char* kReText =
    "# id = r1\n"
    "#rel\t0:1\t3:4\tWork\n"
    "#rel\t3:4\t0:1\tEmployer\n"
    "1\tAnn\tNNP\t2\tnsubj\tPER\t_\n"
    "2\tjoined\tVBD\t0\troot\tO\t_\n"
    "3\tthe\tDT\t4\tdet\tO\t_\n"
    "4\tIBM\tNNP\t2\tobj\tORG\t_\n";

/// Small synthetic split set for fast model tests.
inline cfie::SynthCorpora small_synth(cfie::Task task, std::size_t train = 120, std::uint64_t seed = 5) {
  cfie::SynthConfig cfg;
  cfg.task = task;
  cfg.train_sentences = train;
  cfg.dev_sentences = 30;
  cfg.test_sentences = 30;
  cfg.seed = seed;
  cfg.validate();
  return cfie::generate_synthetic(cfg);
}

/// Sentence over existing vocab ids with a random tree; NER column only for ED/RE.
inline cfie::Sentence random_sentence(std::mt19937_64& rng, const cfie::Vocabularies& v, std::size_t n,
                                      cfie::Task task) {
  cfie::Sentence s;
  s.id = "rand";
  const auto heads = oracle::random_heads(rng, n);
  auto pick = [&](std::size_t size, std::size_t lo) {
    return static_cast<int>(std::uniform_int_distribution<std::size_t>(lo, size - 1)(rng));
  };
  for (std::size_t i = 0; i < n; ++i) {
    cfie::Token t;
    t.word = pick(v.words.size(), 2);
    t.form = v.words.at(t.word);
    t.pos = pick(v.pos.size(), 2);
    t.head = heads[i];
    t.deprel = pick(v.deprels.size(), 2);
    if (task != cfie::Task::NER) t.ner = pick(v.ner.size(), 2);
    if (task != cfie::Task::RE) t.gold = pick(v.labels.size(), 0);
    s.tokens.push_back(t);
  }
  if (task == cfie::Task::RE && n >= 2) {
    const int a = pick(n, 0);
    int b = pick(n, 0);
    if (b == a) b = (a + 1) % static_cast<int>(n);
    s.relations.push_back({{a, a + 1}, {b, b + 1}, pick(v.labels.size(), 0)});
  }
  return s;
}

}  // namespace fixture
