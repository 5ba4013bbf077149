// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cfie/commands.hpp"
#include "cfie/counterfactual.hpp"
#include "cfie/errors.hpp"
#include "cfie/evaluation.hpp"
#include "cfie/inference.hpp"
#include "cfie/metrics.hpp"
#include "cfie/synth.hpp"
#include "cfie/training.hpp"
#include "../support/gradcheck.hpp"

using namespace cfie;
using num::Array;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + fmt(x);
  return out;
}

const std::vector<std::uint64_t> kSeeds = {13, 14, 15};
const BucketThresholds kBuckets{400, 1000};

Outcome gradients() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string where;
  for (auto& [name, build] : gradcheck::op_builders()) {
    gradcheck::Case c;
    c.name = name;
    build(c, rng);
    const double err = gradcheck::check(c);
    if (err > worst) worst = err, where = name;
  }
  for (auto& mc : gradcheck::model_cases()) {
    const double err = gradcheck::check_model(mc);
    if (err > worst) worst = err, where = mc.name;
  }
  return {worst < 1e-3, "max relative error " + fmt(worst) + " (" + where + ")"};
}

Outcome effect_identities() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 2 + rng() % 12;
    const Array y = gradcheck::random_array(rng, 1, k, -5.0, 5.0);
    const Array ys = gradcheck::random_array(rng, 1, k, -5.0, 5.0);
    const Array xe = gradcheck::random_array(rng, 1, k, -5.0, 5.0);
    const Array a = main_effect(y, ys, xe, 1.0, 0.0);
    const Array t = tde(y, ys);
    const Array z = main_effect(y, ys, xe, 0.0, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      worst = std::max(worst, std::abs(a[j] - t[j]));
      worst = std::max(worst, std::abs(z[j] - y[j]));
    }
  }
  return {worst <= 1e-12, "10000 triples, max abs difference " + fmt(worst)};
}

Outcome substitution_identity() {
  std::mt19937_64 rng(103);
  // Feature strategies intervene on a Z node as well, which adds that edge's
  // change to Y_x - Y_x*; the identity covers interventions on X alone.
  const std::vector<MaskSpec> masks = {MaskStrategy::EntityOnly,
                                       MaskStrategy::OneHop,
                                       MaskStrategy::TwoHop,
                                       MaskStrategy::TokenPlusOneHop,
                                       MaskStrategy::NullInput,
                                       MaskSpec(MaskStrategy::EntityOnly) | MaskStrategy::TwoHop};
  double worst = 0.0;
  std::size_t checked = 0;
  for (Task task : {Task::NER, Task::ED, Task::RE}) {
    const auto data = fixture::small_synth(task, 40, 7);
    SCMSpec spec = default_spec(task, data.train.vocabs->labels.size());
    spec.fusion = Fusion::Sum;
    EncoderConfig enc = gradcheck::tiny_encoder(task == Task::RE ? EncoderKind::Gcn : EncoderKind::DepConcat);
    enc.word_dim = 6;
    enc.hidden_dim = 5;
    const Model m(spec, enc, data.train.vocabs);
    const Array& w = m.params().at("edge.X").value;
    const int count = task == Task::RE ? 334 : 333;
    for (int trial = 0; trial < count; ++trial) {
      const Sentence s = fixture::random_sentence(rng, *data.train.vocabs, 2 + rng() % 12, task);
      const auto cands = candidates_of(s, task);
      const Candidate& c = cands[rng() % cands.size()];
      const MaskSpec& mask = masks[rng() % masks.size()];
      const CounterfactualResult cf = counterfactual_logits(m, s, c, mask);
      const auto bundles = m.forward_all(s);
      const Array& y_x = bundles[static_cast<std::size_t>(&c - cands.data())].fused;
      const auto fact = counterfactual_components(m, s, std::span<const Candidate>(&c, 1), MaskSpec{});
      const Array& h_x = fact[0].h_x;
      for (std::size_t k = 0; k < m.classes(); ++k) {
        double proj = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) proj += w(k, j) * (h_x[j] - cf.h_star[j]);
        worst = std::max(worst, std::abs((y_x[k] - cf.y_star[k]) - proj));
      }
      ++checked;
    }
  }
  return {worst <= 1e-9, std::to_string(checked) + " sentences, max abs error " + fmt(worst)};
}

Outcome mask_oracle() {
  std::mt19937_64 rng(104);
  const std::vector<MaskSpec> specs = {MaskStrategy::EntityOnly,
                                       MaskStrategy::OneHop,
                                       MaskStrategy::TwoHop,
                                       MaskStrategy::TokenPlusOneHop,
                                       MaskStrategy::NullInput,
                                       MaskStrategy::FeatureNER,
                                       MaskStrategy::FeaturePOS,
                                       MaskSpec(MaskStrategy::EntityOnly) | MaskStrategy::OneHop,
                                       MaskSpec(MaskStrategy::TwoHop) | MaskStrategy::FeaturePOS};
  std::size_t mismatches = 0, checks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    const auto heads = oracle::random_heads(rng, n);
    const DepTree tree(heads);
    const int b = static_cast<int>(rng() % n);
    const int e = std::min<int>(static_cast<int>(n), b + 1 + static_cast<int>(rng() % 3));
    Candidate c{{b, e}, std::nullopt};
    std::vector<int> own;
    for (int i = b; i < e; ++i) own.push_back(i);
    if (trial % 2 && e - b < static_cast<int>(n)) {
      int t = static_cast<int>(rng() % n);
      while (t >= b && t < e) t = static_cast<int>(rng() % n);
      c.tail = Span{t, t + 1};
      own.push_back(t);
      std::sort(own.begin(), own.end());
    }
    for (const MaskSpec& s : specs) {
      ++checks;
      if (mask_set(tree, c, s) != oracle::mask_set(heads, own, s.flags)) ++mismatches;
    }
  }
  return {mismatches == 0, "1000 trees, " + std::to_string(checks) + " sets, " + std::to_string(mismatches) +
                               " mismatches"};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(105);
  std::size_t mismatches = 0, undefined = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = 1 + rng() % 8;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    ConfusionMatrix cm(classes);
    const std::size_t n = rng() % 60;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t g = rng() % (classes + 1);
      std::size_t p = rng() % (classes + 1);
      if (g == classes && p == classes) p = 0;
      pairs.emplace_back(g, p);
      cm.add(g, p);
    }
    std::vector<std::size_t> subset;
    for (std::size_t k = 0; k < classes; ++k)
      if (trial % 2 == 0 || rng() % 2) subset.push_back(k);
    if (subset.empty()) subset.push_back(0);
    const oracle::Metrics want = oracle::metrics(pairs, subset);
    if (!want.defined) {
      ++undefined;
      try {
        mean_recall(cm, subset);
        ++mismatches;
      } catch (const MetricError&) {
      }
      continue;
    }
    if (mean_recall(cm, subset) != want.mr || macro_f1(cm, subset) != want.mf1 ||
        micro_f1(cm, subset) != want.micro)
      ++mismatches;
  }
  return {mismatches == 0, "1000 matrices (" + std::to_string(undefined) + " with no gold in the subset), " +
                               std::to_string(mismatches) + " mismatches"};
}

/// Everything the NER criteria need from one trained seed.
struct NerRun {
  double conv_few_mr = 0.0;
  double tde_few_mr = 0.0;
  double swept_few_mr = 0.0;
  std::vector<double> beta_curve;  // dev MF1 at alpha 1
  double probe_entity_share = 0.0;
};

NerRun ner_run(std::uint64_t seed) {
  SynthConfig sc;
  sc.task = Task::NER;
  sc.seed = seed;
  const auto data = generate_synthetic(sc);
  const SCMSpec spec = default_spec(Task::NER, data.train.vocabs->labels.size());
  const TrainResult r = train(data.train, &data.dev, spec, EncoderConfig{}, TrainConfig{}, seed);
  const BucketSplit buckets = compute_buckets(data.train, kBuckets);
  const MaskSpec mask = default_mask(Task::NER);

  NerRun out;
  EffectConfig conv;
  conv.mode = EffectMode::Conventional;
  out.conv_few_mr = evaluate(r.model, data.test, conv, buckets).report.bucket("Few").mr.value_or(0.0);
  EffectConfig t = default_effect(Task::NER);
  t.mode = EffectMode::TDE;
  out.tde_few_mr = evaluate(r.model, data.test, t, buckets).report.bucket("Few").mr.value_or(0.0);

  const auto alphas = default_alpha_grid();
  const auto betas = default_beta_grid();
  const SweepResult sw = sweep(r.model, data.dev, alphas, betas, mask);
  out.swept_few_mr = evaluate(r.model, data.test, sw.best_config, buckets).report.bucket("Few").mr.value_or(0.0);
  for (const SweepPoint& p : sw.grid)
    if (p.alpha == 1.0) out.beta_curve.push_back(p.mf1);

  out.probe_entity_share = 0.0;
  const ProbeSummary probe = run_probe(r.model, data.test, "cue", 200, seed);
  for (const auto& [name, share] : probe.top_share)
    if (name == MaskSpec(MaskStrategy::EntityOnly).to_string()) out.probe_entity_share = share;
  return out;
}

std::vector<NerRun>& ner_runs() {
  static std::vector<NerRun> runs = [] {
    std::vector<NerRun> v;
    for (std::uint64_t s : kSeeds) v.push_back(ner_run(s));
    return v;
  }();
  return runs;
}

Outcome directional_debiasing() {
  std::vector<double> conv, t, swept;
  for (const NerRun& r : ner_runs()) {
    conv.push_back(r.conv_few_mr);
    t.push_back(r.tde_few_mr);
    swept.push_back(r.swept_few_mr);
  }
  const bool pass = mean(swept) - mean(conv) >= 5.0 && mean(t) > mean(conv);
  return {pass, "Few MR conventional " + fmt(mean(conv)) + " [" + list(conv) + "], TDE " + fmt(mean(t)) + " [" +
                    list(t) + "], swept main effect " + fmt(mean(swept)) + " [" + list(swept) + "]"};
}

Outcome beta_curve() {
  const auto& curve = ner_runs().front().beta_curve;
  if (curve.size() < 3) return {false, "beta curve has fewer than 3 points"};
  const std::size_t peak = static_cast<std::size_t>(std::max_element(curve.begin(), curve.end()) - curve.begin());
  const bool pass = peak > 0 && peak + 1 < curve.size() && curve[peak] > curve.front() && curve[peak] > curve.back();
  const auto betas = default_beta_grid();
  return {pass, "seed 13 dev MF1 over beta at alpha 1: [" + list(curve) + "], peak at beta " + fmt(betas[peak])};
}

Outcome probe_direction() {
  std::vector<double> shares;
  for (const NerRun& r : ner_runs()) shares.push_back(r.probe_entity_share);
  return {shares.front() >= 0.8, "EntityOnly largest drop on " + fmt(100.0 * shares.front()) +
                                     "% of 200 cue instances (seed 13; all seeds [" + list(shares) + "])"};
}

double ed_swept_few_mf1(std::uint64_t seed, bool with_ner) {
  SynthConfig sc;
  sc.task = Task::ED;
  sc.seed = seed;
  const auto data = generate_synthetic(sc);
  SCMSpec spec = default_spec(Task::ED, data.train.vocabs->labels.size());
  if (!with_ner) spec = ablate(spec, {NodeKind::NER});
  const TrainResult r = train(data.train, &data.dev, spec, EncoderConfig{}, TrainConfig{}, seed);
  const auto alphas = default_alpha_grid();
  const auto betas = default_beta_grid();
  const SweepResult sw = sweep(r.model, data.dev, alphas, betas, default_mask(Task::ED));
  const BucketSplit buckets = compute_buckets(data.train, kBuckets);
  return evaluate(r.model, data.test, sw.best_config, buckets).report.bucket("Few").mf1.value_or(0.0);
}

Outcome ablation_direction() {
  std::vector<double> full, without;
  for (std::uint64_t s : kSeeds) {
    full.push_back(ed_swept_few_mf1(s, true));
    without.push_back(ed_swept_few_mf1(s, false));
  }
  return {mean(without) <= mean(full), "Few MF1 full " + fmt(mean(full)) + " [" + list(full) + "], without NER " +
                                           fmt(mean(without)) + " [" + list(without) + "]"};
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "cfie_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::ostringstream log;
  std::vector<std::string> reports, predictions;
  for (const char* run : {"first", "second"}) {
    RunConfig cfg = default_run_config(Task::NER);
    cfg.output = root / run;
    cfg.buckets = kBuckets;
    cmd_train(cfg, log);
    EvalOptions e;
    e.checkpoint = cfg.output / "model.ckpt";
    e.corpus = cfg.output / "test.conll";
    e.out = cfg.output / "eval";
    reports.push_back(cmd_eval(e, log).to_jsonl());
    predictions.push_back(read_text_file(e.out / "predictions.jsonl"));
  }
  const bool pass = reports[0] == reports[1] && predictions[0] == predictions[1];
  return {pass, "two train+eval runs: reports " + std::string(reports[0] == reports[1] ? "identical" : "differ") +
                    ", predictions " + (predictions[0] == predictions[1] ? "identical" : "differ") + ", " +
                    std::to_string(reports[0].size()) + " report bytes"};
}

Outcome bioes_fuzz() {
  std::mt19937_64 rng(111);
  const std::vector<std::string> pool = {"O",   "B-A", "I-A", "E-A", "S-A", "B-B", "I-B",
                                         "E-B", "S-B", "B-C", "I-C", "E-C", "S-C"};
  std::size_t failures = 0, spans = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    std::vector<std::string> tags(1 + rng() % 25);
    for (auto& t : tags) t = pool[rng() % pool.size()];
    const auto decoded = decode_bioes(std::span<const std::string>(tags));
    spans += decoded.size();
    if (!oracle::well_formed(decoded, tags.size()) || !oracle::spans_match_tags(decoded, tags)) ++failures;
  }
  return {failures == 0, "100000 sequences, " + std::to_string(spans) + " spans, " + std::to_string(failures) +
                             " failures"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"main effect and TDE identities", effect_identities},
      {"substitution identity under sum fusion", substitution_identity},
      {"mask-set oracle", mask_oracle},
      {"metric oracle", metric_oracle},
      {"directional debiasing on Few MR", directional_debiasing},
      {"beta sweep has an interior maximum", beta_curve},
      {"probe direction", probe_direction},
      {"ablation direction without NER", ablation_direction},
      {"determinism", determinism},
      {"BIOES fuzz", bioes_fuzz},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << " [" << fmt(secs) << "s]" << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << (criteria.size() - failures) << "/" << criteria.size()
            << std::endl;
  return failures;
}
