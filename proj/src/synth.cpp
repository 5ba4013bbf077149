#include "cfie/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cfie/errors.hpp"

namespace cfie {

TreeModel parse_tree_model(std::string_view name) {
  if (name == "chain") return TreeModel::Chain;
  if (name == "random-projective" || name == "random_projective") return TreeModel::RandomProjective;
  throw ConfigError("unknown tree model '" + std::string(name) + "' (expected chain or random-projective)");
}

std::string_view to_string(TreeModel model) {
  return model == TreeModel::Chain ? "chain" : "random-projective";
}

namespace {

constexpr std::size_t kMinLength = 4;
const std::vector<std::string> kFillerPos = {"NN", "DT", "JJ", "IN", "RB", "VBD"};
const std::vector<std::string> kFillerRels = {"dep", "det", "amod", "obj", "nmod"};

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void SynthConfig::validate() const {
  if (num_classes == 0) throw ConfigError("synth: num_classes must be positive");
  if (!(head_tail_ratio >= 1.0)) throw ConfigError("synth: head_tail_ratio must be at least 1");
  if (!in_unit(cue_strength) || !in_unit(context_strength) || !in_unit(ner_strength))
    throw ConfigError("synth: cue_strength, context_strength and ner_strength must lie in [0,1]");
  if (vocab_size < 2 * num_classes + 4)
    throw ConfigError("synth: vocab_size " + std::to_string(vocab_size) + " leaves no room for " +
                      std::to_string(num_classes) + " cue and context words plus 4 fillers");
  if (min_length > max_length) throw ConfigError("synth: min_length exceeds max_length");
  if (min_length < kMinLength) throw ConfigError("synth: min_length must be at least 4");
  if (train_sentences < num_classes) throw ConfigError("synth: fewer train sentences than classes");
  if (dev_sentences == 0 || test_sentences == 0) throw ConfigError("synth: dev and test must be non-empty");
}

std::string synthetic_class_name(std::size_t k) { return "C" + std::to_string(k); }

std::optional<std::size_t> synthetic_cue_class(std::string_view form) {
  if (form.size() < 4 || form.substr(0, 3) != "cue") return std::nullopt;
  std::size_t k = 0;
  for (char ch : form.substr(3)) {
    if (ch < '0' || ch > '9') return std::nullopt;
    k = k * 10 + static_cast<std::size_t>(ch - '0');
  }
  return k;
}

std::vector<std::size_t> geometric_class_sizes(std::size_t total, std::size_t num_classes, double head_tail_ratio) {
  if (num_classes == 0) return {};
  std::vector<double> w(num_classes, 1.0);
  if (num_classes > 1) {
    const double step = std::pow(head_tail_ratio, 1.0 / static_cast<double>(num_classes - 1));
    for (std::size_t k = 1; k < num_classes; ++k) w[k] = w[k - 1] / step;
  }
  double z = 0.0;
  for (double x : w) z += x;
  std::vector<std::size_t> sizes(num_classes);
  std::size_t used = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    sizes[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(total) * w[k] / z)));
    used += sizes[k];
  }
  if (used < total) sizes[0] += total - used;
  return sizes;
}

namespace {

class Generator {
 public:
  explicit Generator(const SynthConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed), vocabs_(std::make_shared<Vocabularies>()) {
    const std::size_t c = cfg.num_classes;
    for (std::size_t k = 0; k < c; ++k) vocabs_->words.add("cue" + std::to_string(k));
    for (std::size_t k = 0; k < c; ++k) vocabs_->words.add("ctx" + std::to_string(k));
    fillers_ = cfg.vocab_size - 2 * c;
    for (std::size_t j = 0; j < fillers_; ++j) vocabs_->words.add("w" + std::to_string(j));
    for (const auto& p : kFillerPos) vocabs_->pos.add(p);
    vocabs_->pos.add("NNP");
    vocabs_->pos.add("VB");
    vocabs_->deprels.add("root");
    for (const auto& r : kFillerRels) vocabs_->deprels.add(r);
    vocabs_->deprels.add("nsubj");
    if (cfg.task != Task::NER) {
      vocabs_->ner.add("O");
      vocabs_->ner.add("ENT");
      for (std::size_t k = 0; k < c; ++k) vocabs_->ner.add("N" + std::to_string(k));
    }
    if (cfg.task == Task::RE) {
      for (std::size_t k = 0; k < c; ++k) vocabs_->labels.add(synthetic_class_name(k));
    } else {
      vocabs_->labels.add("O");
      for (std::size_t k = 0; k < c; ++k) {
        const std::string name = synthetic_class_name(k);
        if (cfg.multi_token_spans) {
          vocabs_->labels.add("B-" + name);
          vocabs_->labels.add("I-" + name);
          vocabs_->labels.add("E-" + name);
        }
        vocabs_->labels.add("S-" + name);
      }
    }
  }

  Corpus split(Split which, std::size_t total, bool geometric) {
    std::vector<std::size_t> sizes;
    if (geometric) {
      sizes = geometric_class_sizes(total, cfg_.num_classes, cfg_.head_tail_ratio);
    } else {
      sizes.assign(cfg_.num_classes, total / cfg_.num_classes);
      for (std::size_t k = 0; k < total % cfg_.num_classes; ++k) ++sizes[k];
    }
    std::vector<std::size_t> classes;
    for (std::size_t k = 0; k < sizes.size(); ++k) classes.insert(classes.end(), sizes[k], k);
    std::shuffle(classes.begin(), classes.end(), rng_);

    Corpus corpus;
    corpus.split = which;
    corpus.task = cfg_.task;
    corpus.vocabs = vocabs_;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      Sentence s = cfg_.task == Task::RE ? relation_sentence(which, classes[i]) : tagged_sentence(which, classes[i]);
      s.id = std::string(to_string(which)) + "-" + std::to_string(i + 1);
      validate_sentence(s);
      corpus.sentences.push_back(std::move(s));
    }
    return corpus;
  }

 private:
  std::size_t uniform(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  std::vector<int> random_heads(std::size_t n) {
    std::vector<int> heads(n, kRoot);
    if (cfg_.tree_model == TreeModel::Chain) {
      for (std::size_t i = 1; i < n; ++i) heads[i] = static_cast<int>(i) - 1;
      return heads;
    }
    build(heads, 0, static_cast<int>(n), kRoot);
    return heads;
  }

  void build(std::vector<int>& heads, int lo, int hi, int parent) {
    if (lo >= hi) return;
    const int m = lo + static_cast<int>(uniform(static_cast<std::size_t>(hi - lo)));
    heads[static_cast<std::size_t>(m)] = parent;
    build(heads, lo, m, m);
    build(heads, m + 1, hi, m);
  }

  std::size_t clue_class(Split which, std::size_t cls) {
    if (which != Split::Train) return uniform(cfg_.num_classes);
    if (cfg_.num_classes == 1 || coin(cfg_.cue_strength)) return cls;
    const std::size_t other = uniform(cfg_.num_classes - 1);
    return other >= cls ? other + 1 : other;
  }

  Token filler() {
    Token t;
    t.form = "w" + std::to_string(uniform(fillers_));
    t.word = vocabs_->words.lookup(t.form);
    t.pos = vocabs_->pos.lookup(kFillerPos[uniform(kFillerPos.size())]);
    t.deprel = vocabs_->deprels.lookup(kFillerRels[uniform(kFillerRels.size())]);
    if (cfg_.task != Task::NER) t.ner = vocabs_->ner.lookup("O");
    t.gold = cfg_.task == Task::RE ? -1 : vocabs_->labels.lookup("O");
    return t;
  }

  void set_form(Token& t, const std::string& form, const char* pos) {
    t.form = form;
    t.word = vocabs_->words.lookup(form);
    t.pos = vocabs_->pos.lookup(pos);
  }

  // The context word names the class with probability context_strength and a
  // different class otherwise, in every split.
  void set_context(Token& t, std::size_t cls) {
    std::size_t shown = cls;
    if (cfg_.num_classes > 1 && !coin(cfg_.context_strength)) {
      const std::size_t other = uniform(cfg_.num_classes - 1);
      shown = other >= cls ? other + 1 : other;
    }
    set_form(t, "ctx" + std::to_string(shown), "VB");
  }

  int feature_tag(std::size_t cls) {
    const std::size_t shown = coin(cfg_.ner_strength) ? cls : uniform(cfg_.num_classes);
    return vocabs_->ner.lookup("N" + std::to_string(shown));
  }

  std::vector<Token> fresh_tokens(const std::vector<int>& heads) {
    std::vector<Token> tokens;
    for (int h : heads) {
      Token t = filler();
      t.head = h;
      if (h == kRoot) t.deprel = vocabs_->deprels.lookup("root");
      tokens.push_back(std::move(t));
    }
    return tokens;
  }

  std::size_t sample_length() { return cfg_.min_length + uniform(cfg_.max_length - cfg_.min_length + 1); }

  Sentence tagged_sentence(Split which, std::size_t cls) {
    const int span_len = cfg_.multi_token_spans ? 2 : 1;
    while (true) {
      const auto heads = random_heads(sample_length());
      const int n = static_cast<int>(heads.size());
      std::vector<int> starts;
      for (int e = 0; e + span_len <= n; ++e) {
        for (int i = e; i < e + span_len; ++i) {
          const int h = heads[static_cast<std::size_t>(i)];
          if (h != kRoot && (h < e || h >= e + span_len)) {
            starts.push_back(e);
            break;
          }
        }
      }
      if (starts.empty()) continue;
      const int e = starts[uniform(starts.size())];
      int ctx = kRoot;
      for (int i = e; i < e + span_len && ctx == kRoot; ++i) {
        const int h = heads[static_cast<std::size_t>(i)];
        if (h != kRoot && (h < e || h >= e + span_len)) ctx = h;
      }

      Sentence s;
      s.tokens = fresh_tokens(heads);
      const std::string name = synthetic_class_name(cls);
      Token& cue = s.tokens[static_cast<std::size_t>(e)];
      set_form(cue, "cue" + std::to_string(clue_class(which, cls)), "NNP");
      cue.deprel = vocabs_->deprels.lookup(cue.head == kRoot ? "root" : "nsubj");
      if (cfg_.task == Task::ED) cue.ner = feature_tag(cls);
      if (span_len == 1) {
        cue.gold = vocabs_->labels.lookup("S-" + name);
      } else {
        Token& tail = s.tokens[static_cast<std::size_t>(e + 1)];
        tail.pos = vocabs_->pos.lookup("NNP");
        if (cfg_.task == Task::ED) tail.ner = cue.ner;
        cue.gold = vocabs_->labels.lookup("B-" + name);
        tail.gold = vocabs_->labels.lookup("E-" + name);
      }
      set_context(s.tokens[static_cast<std::size_t>(ctx)], cls);
      return s;
    }
  }

  Sentence relation_sentence(Split which, std::size_t cls) {
    while (true) {
      auto heads = random_heads(sample_length());
      const int n = static_cast<int>(heads.size());
      std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        if (heads[static_cast<std::size_t>(i)] != kRoot)
          children[static_cast<std::size_t>(heads[static_cast<std::size_t>(i)])].push_back(i);
      std::vector<int> parents;
      for (int i = 0; i < n; ++i)
        if (!children[static_cast<std::size_t>(i)].empty()) parents.push_back(i);
      const int p = parents[uniform(parents.size())];
      auto kids = children[static_cast<std::size_t>(p)];
      if (kids.size() < 2) {
        // A leaf has no descendants, so re-attaching it cannot close a cycle.
        std::vector<int> leaves;
        for (int i = 0; i < n; ++i)
          if (children[static_cast<std::size_t>(i)].empty() && i != p && i != kids[0]) leaves.push_back(i);
        if (leaves.empty()) continue;
        const int x = leaves[uniform(leaves.size())];
        heads[static_cast<std::size_t>(x)] = p;
        kids.push_back(x);
      }
      std::shuffle(kids.begin(), kids.end(), rng_);
      const int h = kids[0];
      const int t = kids[1];

      Sentence s;
      s.tokens = fresh_tokens(heads);
      Token& head_tok = s.tokens[static_cast<std::size_t>(h)];
      set_form(head_tok, "cue" + std::to_string(clue_class(which, cls)), "NNP");
      head_tok.deprel = vocabs_->deprels.lookup("nsubj");
      head_tok.ner = feature_tag(cls);
      Token& tail_tok = s.tokens[static_cast<std::size_t>(t)];
      tail_tok.pos = vocabs_->pos.lookup("NNP");
      tail_tok.ner = vocabs_->ner.lookup("ENT");
      set_context(s.tokens[static_cast<std::size_t>(p)], cls);
      s.relations.push_back(Relation{Span{h, h + 1}, Span{t, t + 1},
                                     vocabs_->labels.lookup(synthetic_class_name(cls))});
      return s;
    }
  }

  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::shared_ptr<Vocabularies> vocabs_;
  std::size_t fillers_ = 0;
};

}  // namespace

SynthCorpora generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Generator gen(cfg);
  SynthCorpora out;
  out.train = gen.split(Split::Train, cfg.train_sentences, true);
  out.dev = gen.split(Split::Dev, cfg.dev_sentences, !cfg.balanced_eval);
  out.test = gen.split(Split::Test, cfg.test_sentences, !cfg.balanced_eval);
  return out;
}

}  // namespace cfie
