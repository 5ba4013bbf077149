#include "cfie/inference.hpp"

#include <nlohmann/json.hpp>

#include "cfie/errors.hpp"

namespace cfie {

using num::Array;

EffectMode parse_effect_mode(std::string_view name) {
  if (name == "conventional") return EffectMode::Conventional;
  if (name == "tde") return EffectMode::TDE;
  if (name == "main-effect" || name == "main_effect") return EffectMode::MainEffect;
  throw UsageError("unknown mode '" + std::string(name) + "' (expected conventional, tde or main-effect)");
}

std::string_view to_string(EffectMode mode) {
  switch (mode) {
    case EffectMode::Conventional: return "conventional";
    case EffectMode::TDE: return "tde";
    case EffectMode::MainEffect: return "main-effect";
  }
  return "?";
}

double EffectConfig::effective_alpha() const {
  switch (mode) {
    case EffectMode::Conventional: return 0.0;
    case EffectMode::TDE: return 1.0;
    case EffectMode::MainEffect: return alpha;
  }
  return alpha;
}

double EffectConfig::effective_beta() const { return mode == EffectMode::MainEffect ? beta : 0.0; }

EffectConfig default_effect(Task task) {
  EffectConfig cfg;
  cfg.mode = EffectMode::MainEffect;
  cfg.alpha = task == Task::RE ? 0.0 : 1.0;
  cfg.beta = 0.0;
  cfg.mask = default_mask(task);
  return cfg;
}

namespace {

void require_same(const Array& a, const Array& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": incompatible shapes " + num::to_string(a.shape()) + " and " +
                         num::to_string(b.shape()));
}

}  // namespace

Array tde(const Array& y_x, const Array& y_star) {
  require_same(y_x, y_star, "tde");
  Array out(y_x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_x[i] - y_star[i];
  return out;
}

Array main_effect(const Array& y_x, const Array& y_star, const Array& x_edge_cf, double alpha, double beta) {
  require_same(y_x, y_star, "main_effect");
  require_same(y_x, x_edge_cf, "main_effect");
  Array out(y_x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_x[i] - alpha * y_star[i] + beta * x_edge_cf[i];
  return out;
}

Array debias(const Components& c, const EffectConfig& cfg) {
  switch (cfg.mode) {
    case EffectMode::Conventional: return c.y_x;
    case EffectMode::TDE: return tde(c.y_x, c.y_star);
    case EffectMode::MainEffect: return main_effect(c.y_x, c.y_star, c.x_edge_cf, cfg.alpha, cfg.beta);
  }
  return c.y_x;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<TaggedSpan> decode_bioes(std::span<const std::string> tags) {
  std::vector<TaggedSpan> out;
  int open = -1;
  std::string open_type;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const TagParts parts = split_tag(tags[i]);
    const int pos = static_cast<int>(i);
    switch (parts.prefix) {
      case TagPrefix::O:
        open = -1;
        break;
      case TagPrefix::S:
        open = -1;
        out.push_back({Span{pos, pos + 1}, parts.type});
        break;
      case TagPrefix::B:
        open = pos;
        open_type = parts.type;
        break;
      case TagPrefix::I:
        if (open < 0 || parts.type != open_type) open = -1;
        break;
      case TagPrefix::E:
        if (open >= 0 && parts.type == open_type) out.push_back({Span{open, pos + 1}, parts.type});
        open = -1;
        break;
    }
  }
  return out;
}

std::vector<TaggedSpan> decode_bioes(std::span<const int> tag_ids, const Vocab& labels) {
  std::vector<std::string> tags;
  tags.reserve(tag_ids.size());
  for (int id : tag_ids) tags.push_back(id >= 0 && static_cast<std::size_t>(id) < labels.size() ? labels.at(id) : "O");
  return decode_bioes(tags);
}

std::vector<Components> sentence_components(const Model& model, const Sentence& sentence, const MaskSpec& mask,
                                            const InterventionOptions& options, bool with_counterfactual) {
  const auto cands = candidates_of(sentence, model.spec().task);
  if (cands.empty()) return {};
  if (with_counterfactual) return counterfactual_components(model, sentence, cands, mask, options);
  num::Tape tape(num::Tape::Mode::Inference);
  const auto bundles = Model::bundles(model.logits(tape, model.node_inputs(tape, sentence, cands)));
  std::vector<Components> out(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    out[i].factual = bundles[i];
    out[i].y_x = bundles[i].fused;
  }
  return out;
}

SentencePrediction predict_from(const Model& model, const Sentence& sentence, const std::vector<Components>& comps,
                                const EffectConfig& cfg) {
  const Task task = model.spec().task;
  const auto cands = candidates_of(sentence, task);
  const auto golds = golds_of(sentence, task);
  if (comps.size() != cands.size()) throw DimensionError("component count differs from candidate count");
  SentencePrediction out;
  std::vector<int> tags;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    Prediction p;
    p.candidate = i;
    p.target = cands[i];
    p.gold = golds[i];
    p.logits = debias(comps[i], cfg);
    p.predicted = static_cast<int>(argmax(p.logits.data()));
    p.y_x = comps[i].y_x;
    p.y_star = comps[i].y_star;
    p.x_edge_cf = comps[i].x_edge_cf;
    tags.push_back(p.predicted);
    out.predictions.push_back(std::move(p));
  }
  if (task != Task::RE) out.spans = decode_bioes(tags, model.vocabs().labels);
  return out;
}

SentencePrediction predict(const Model& model, const Sentence& sentence, const EffectConfig& cfg) {
  return predict_from(model, sentence, sentence_components(model, sentence, cfg.mask, cfg.options, cfg.needs_counterfactual()),
                      cfg);
}

std::string prediction_jsonl(const Model& model, const Sentence& sentence, const SentencePrediction& pred) {
  using json = nlohmann::json;
  const Vocab& labels = model.vocabs().labels;
  auto values = [](const Array& a) { return std::vector<double>(a.data().begin(), a.data().end()); };
  std::string out;
  for (const auto& p : pred.predictions) {
    json j;
    j["sentence"] = sentence.id;
    j["candidate"] = {p.target.x.begin, p.target.x.end};
    if (p.target.tail) j["tail"] = {p.target.tail->begin, p.target.tail->end};
    j["gold"] = p.gold >= 0 ? labels.at(p.gold) : "";
    j["predicted"] = labels.at(p.predicted);
    j["logits"] = values(p.logits);
    j["y_x"] = values(p.y_x);
    if (!p.y_star.empty()) j["y_star"] = values(p.y_star);
    if (!p.x_edge_cf.empty()) j["x_edge_cf"] = values(p.x_edge_cf);
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace cfie
