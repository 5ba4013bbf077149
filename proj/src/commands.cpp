#include "cfie/commands.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <ostream>
#include <random>
#include <sstream>

#include "cfie/errors.hpp"
#include "cfie/synth.hpp"

namespace cfie {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const StructureError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const PathError*>(&e) ||
      dynamic_cast<const VersionError*>(&e))
    return kExitData;
  return kExitRuntime;
}

namespace {

std::string file_hash(const fs::path& path) { return fnv1a_hex(read_text_file(path)); }

std::string join(const std::vector<double>& xs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

void write_corpus(const fs::path& dir, const std::string& name, const Corpus& corpus, Manifest& m) {
  write_conll_file(dir / name, corpus);
  add_output(m, dir, name);
}

fs::path ensure_dir(const fs::path& dir) {
  const fs::path out = resolve_output(dir);
  fs::create_directories(out);
  return out;
}

void write_report(const fs::path& dir, const std::string& stem, const MetricsReport& report, Manifest& m) {
  write_text_file(dir / (stem + ".jsonl"), report.to_jsonl());
  write_text_file(dir / (stem + ".csv"), report.to_csv());
  add_output(m, dir, stem + ".jsonl");
  add_output(m, dir, stem + ".csv");
}

struct Loaded {
  Model model;
  CheckpointInfo info;
};

Loaded load_model(const fs::path& path) {
  if (!fs::exists(path)) throw PathError("checkpoint not found: " + path.string());
  std::string extra;
  Model model = Model::load(path, &extra);
  return {std::move(model), parse_checkpoint_extra(extra)};
}

void log_report(std::ostream& log, const std::string& label, const MetricsReport& report) {
  log << label;
  for (const auto& b : report.buckets) {
    log << "  " << b.name << " MR=";
    if (b.mr) log << *b.mr; else log << "n/a";
    log << " MF1=";
    if (b.mf1) log << *b.mf1; else log << "n/a";
  }
  log << "\n";
}

}  // namespace

Corpora load_corpora(const RunConfig& cfg) {
  Corpora out;
  if (!cfg.uses_files()) {
    SynthCorpora s = generate_synthetic(cfg.synth);
    out.train = std::move(s.train);
    out.dev = std::move(s.dev);
    out.test = std::move(s.test);
    return out;
  }
  auto vocabs = std::make_shared<Vocabularies>();
  out.train = read_conll_file(cfg.train, cfg.task, vocabs, Split::Train);
  if (!cfg.dev.empty()) out.dev = read_conll_file(cfg.dev, cfg.task, vocabs, Split::Dev);
  if (!cfg.test.empty()) out.test = read_conll_file(cfg.test, cfg.task, vocabs, Split::Test);
  return out;
}

Corpus read_corpus_for(const Model& model, const fs::path& path, Split split) {
  if (!fs::exists(path)) throw PathError("corpus file not found: " + path.string());
  auto vocabs = std::make_shared<Vocabularies>(model.vocabs());
  Corpus corpus = read_conll_file(path, model.spec().task, vocabs, split);
  const auto& known = model.vocabs().labels;
  if (vocabs->labels.size() != known.size()) {
    std::string unseen;
    for (std::size_t id = known.size(); id < vocabs->labels.size(); ++id)
      unseen += (unseen.empty() ? "" : ", ") + vocabs->labels.at(static_cast<int>(id));
    throw StructureError(path.string() + ": labels unknown to the checkpoint: " + unseen);
  }
  return corpus;
}

std::string checkpoint_extra(const RunConfig& cfg, const Corpus& train) {
  ordered_json j;
  j["fingerprint"] = fingerprint(cfg);
  j["seed"] = cfg.seed;
  ordered_json counts = ordered_json::object();
  for (const auto& [cls, n] : count_instances(train)) counts[cls] = n;
  j["train_counts"] = counts;
  j["buckets"] = {{"few_max", cfg.buckets.few_max}, {"medium_max", cfg.buckets.medium_max}};
  return j.dump();
}

CheckpointInfo parse_checkpoint_extra(const std::string& json) {
  CheckpointInfo info;
  try {
    const auto j = nlohmann::json::parse(json);
    info.fingerprint = j.at("fingerprint").get<std::string>();
    info.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [cls, n] : j.at("train_counts").items()) info.train_counts[cls] = n.get<std::size_t>();
    info.buckets.few_max = j.at("buckets").at("few_max").get<std::size_t>();
    info.buckets.medium_max = j.at("buckets").at("medium_max").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw VersionError(std::string("checkpoint lacks run metadata: ") + e.what());
  }
  return info;
}

BucketSplit buckets_of(const Model& model, const CheckpointInfo& info) {
  return compute_buckets(info.train_counts, class_inventory(model.vocabs(), model.spec().task), info.buckets);
}

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  if (cfg.uses_files()) throw UsageError("synth needs a config without data.train");
  cfg.synth.validate();
  const fs::path dir = ensure_dir(out_dir);
  SynthCorpora s = generate_synthetic(cfg.synth);
  Manifest m;
  m.command = "synth";
  m.fingerprint = fingerprint(cfg);
  m.seed = cfg.synth.seed;
  m.config = to_ini(cfg);
  write_corpus(dir, "train.conll", s.train, m);
  write_corpus(dir, "dev.conll", s.dev, m);
  write_corpus(dir, "test.conll", s.test, m);
  write_manifest(dir, m);
  log << "wrote " << s.train.sentences.size() << "/" << s.dev.sentences.size() << "/" << s.test.sentences.size()
      << " sentences to " << dir.string() << "\n";
}

TrainOutput cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  Corpora data = load_corpora(cfg);
  const fs::path dir = ensure_dir(cfg.output);
  Manifest m;
  m.command = "train";
  m.fingerprint = fingerprint(cfg);
  m.seed = cfg.seed;
  m.config = to_ini(cfg);
  if (cfg.uses_files()) {
    m.inputs.emplace_back("train", cfg.train.string());
    if (!cfg.dev.empty()) m.inputs.emplace_back("dev", cfg.dev.string());
    if (!cfg.test.empty()) m.inputs.emplace_back("test", cfg.test.string());
  } else {
    write_corpus(dir, "train.conll", data.train, m);
    write_corpus(dir, "dev.conll", *data.dev, m);
    write_corpus(dir, "test.conll", *data.test, m);
  }

  const SCMSpec spec = cfg.scm_spec(data.train.vocabs->labels.size());
  std::string epochs;
  TrainResult result = train(data.train, data.dev ? &*data.dev : nullptr, spec, cfg.encoder, cfg.training, cfg.seed,
                             [&](const EpochRecord& r) {
                               epochs += r.to_json() + "\n";
                               log << r.to_json() << "\n";
                             });
  write_text_file(dir / "train_log.jsonl", epochs);
  add_output(m, dir, "train_log.jsonl");
  const std::string extra = checkpoint_extra(cfg, data.train);
  result.model.save(dir / "model.ckpt", extra);
  add_output(m, dir, "model.ckpt");
  write_manifest(dir, m);
  log << "best epoch " << result.best_epoch << ", checkpoint " << (dir / "model.ckpt").string() << "\n";
  return {std::move(result), parse_checkpoint_extra(extra)};
}

EffectConfig EffectChoice::resolve(Task task) const {
  if (mode == EffectMode::Conventional && mask)
    throw UsageError("--mask has no effect with mode=conventional");
  if (alpha && *alpha < 0.0) throw UsageError("--alpha must be >= 0");
  if (beta && *beta < 0.0) throw UsageError("--beta must be >= 0");
  EffectConfig cfg = default_effect(task);
  cfg.mode = mode;
  if (alpha) cfg.alpha = *alpha;
  if (beta) cfg.beta = *beta;
  if (mask) cfg.mask = *mask;
  if (intervene) cfg.options.intervene = *intervene;
  cfg.options.context_sees_counterfactual = context_sees_counterfactual;
  check_legal(cfg.mask, task);
  return cfg;
}

MetricsReport cmd_eval(const EvalOptions& opts, std::ostream& log) {
  Loaded loaded = load_model(opts.checkpoint);
  const EffectConfig effect = opts.effect.resolve(loaded.model.spec().task);
  const Corpus corpus = read_corpus_for(loaded.model, opts.corpus, Split::Test);
  const BucketSplit buckets = buckets_of(loaded.model, loaded.info);
  Evaluation ev = evaluate(loaded.model, corpus, effect, buckets, opts.dump_predictions);

  const std::string config = "checkpoint = " + file_hash(opts.checkpoint) + "\ncorpus = " + file_hash(opts.corpus) +
                             "\n" + effect_canonical(effect);
  ev.report.fingerprint = fnv1a_hex(config);
  ev.report.seed = loaded.info.seed;

  const fs::path dir = ensure_dir(opts.out);
  Manifest m;
  m.command = "eval";
  m.fingerprint = ev.report.fingerprint;
  m.seed = loaded.info.seed;
  m.config = config;
  m.inputs = {{"checkpoint", opts.checkpoint.string()}, {"corpus", opts.corpus.string()}};
  write_report(dir, "metrics", ev.report, m);
  if (opts.dump_predictions) {
    write_text_file(dir / "predictions.jsonl", ev.predictions_jsonl);
    add_output(m, dir, "predictions.jsonl");
  }
  write_manifest(dir, m);
  log_report(log, std::string(to_string(effect.mode)), ev.report);
  return ev.report;
}

std::vector<ProbeInstance> select_probe_instances(const Corpus& corpus, std::string_view select) {
  std::vector<ProbeInstance> out;
  std::string id;
  if (select.rfind("id:", 0) == 0) {
    id = std::string(select.substr(3));
  } else if (select != "cue" && select != "gold") {
    throw UsageError("unknown probe selector '" + std::string(select) + "' (cue, gold or id:<sentence>)");
  }
  const Vocab& labels = corpus.vocabs->labels;
  for (const Sentence& s : corpus.sentences) {
    if (!id.empty() && s.id != id) continue;
    const auto cands = candidates_of(s, corpus.task);
    const auto golds = golds_of(s, corpus.task);
    for (std::size_t k = 0; k < cands.size(); ++k) {
      if (golds[k] < 0) continue;
      std::string type;
      if (corpus.task == Task::RE) {
        type = labels.at(golds[k]);
      } else {
        const TagParts parts = split_tag(labels.at(golds[k]));
        if (parts.prefix == TagPrefix::O) continue;
        type = parts.type;
      }
      if (select == "cue") {
        bool hit = false;
        for (int t = cands[k].x.begin; t < cands[k].x.end; ++t) {
          const auto cue = synthetic_cue_class(s.tokens[static_cast<std::size_t>(t)].form);
          if (cue && synthetic_class_name(*cue) == type) hit = true;
        }
        if (!hit) continue;
      }
      out.push_back({s.id, cands[k], golds[k], {}});
    }
  }
  if (!id.empty() && out.empty()) throw UsageError("no probe candidates in sentence '" + id + "'");
  return out;
}

ProbeSummary run_probe(const Model& model, const Corpus& corpus, std::string_view select, std::size_t limit,
                       std::uint64_t seed) {
  std::vector<ProbeInstance> pool = select_probe_instances(corpus, select);
  if (limit > 0 && pool.size() > limit) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    std::vector<ProbeInstance> picked;
    for (std::size_t i : idx) picked.push_back(std::move(pool[i]));
    pool = std::move(picked);
  }
  std::map<std::string, const Sentence*> by_id;
  for (const Sentence& s : corpus.sentences) by_id[s.id] = &s;

  ProbeSummary summary;
  std::map<std::string, std::size_t> top;
  const auto strategies = default_probe_strategies();
  for (const auto& s : strategies) top[s.to_string()] = 0;
  for (ProbeInstance& inst : pool) {
    inst.ranking = probe_factors(model, *by_id.at(inst.sentence), inst.candidate, inst.gold, strategies);
    ++top[inst.ranking.front().strategy.to_string()];
  }
  for (const auto& s : strategies) {
    const std::string name = s.to_string();
    summary.top_share.emplace_back(name, pool.empty() ? 0.0 : static_cast<double>(top[name]) / pool.size());
  }
  summary.instances = std::move(pool);
  return summary;
}

ProbeSummary cmd_probe(const ProbeOptions& opts, std::ostream& log) {
  Loaded loaded = load_model(opts.checkpoint);
  const Corpus corpus = read_corpus_for(loaded.model, opts.corpus, Split::Test);
  ProbeSummary summary = run_probe(loaded.model, corpus, opts.select, opts.limit, opts.seed);

  const fs::path dir = ensure_dir(opts.out);
  Manifest m;
  m.command = "probe";
  m.seed = opts.seed;
  m.config = "checkpoint = " + file_hash(opts.checkpoint) + "\ncorpus = " + file_hash(opts.corpus) +
             "\nselect = " + opts.select + "\nlimit = " + std::to_string(opts.limit) + "\n";
  m.fingerprint = fnv1a_hex(m.config);
  m.inputs = {{"checkpoint", opts.checkpoint.string()}, {"corpus", opts.corpus.string()}};

  std::string lines;
  for (const auto& inst : summary.instances) {
    ordered_json j;
    j["sentence"] = inst.sentence;
    j["candidate"] = {inst.candidate.x.begin, inst.candidate.x.end};
    if (inst.candidate.tail) j["tail"] = {inst.candidate.tail->begin, inst.candidate.tail->end};
    j["gold"] = loaded.model.vocabs().labels.at(inst.gold);
    ordered_json ranking = ordered_json::array();
    for (const auto& e : inst.ranking)
      ranking.push_back({{"strategy", e.strategy.to_string()}, {"delta_gold", e.delta_gold},
                         {"delta_other", e.delta_other}});
    j["ranking"] = ranking;
    lines += j.dump() + "\n";
  }
  write_text_file(dir / "probe.jsonl", lines);
  add_output(m, dir, "probe.jsonl");
  ordered_json s;
  s["instances"] = summary.instances.size();
  for (const auto& [name, share] : summary.top_share) s["largest_drop_share"][name] = share;
  write_text_file(dir / "probe_summary.json", s.dump(2) + "\n");
  add_output(m, dir, "probe_summary.json");
  write_manifest(dir, m);
  log << summary.instances.size() << " instances;";
  for (const auto& [name, share] : summary.top_share) log << " " << name << "=" << share;
  log << "\n";
  return summary;
}

SweepResult cmd_sweep(const SweepOptions& opts, std::ostream& log) {
  if (opts.alphas.empty() || opts.betas.empty()) throw UsageError("sweep grids must be non-empty");
  Loaded loaded = load_model(opts.checkpoint);
  EffectChoice choice = opts.effect;
  choice.mode = EffectMode::MainEffect;
  const EffectConfig base = choice.resolve(loaded.model.spec().task);
  const MaskSpec mask = base.mask;
  const Corpus dev = read_corpus_for(loaded.model, opts.dev, Split::Dev);
  SweepResult result = sweep(loaded.model, dev, opts.alphas, opts.betas, mask, base.options);

  const fs::path dir = ensure_dir(opts.out);
  Manifest m;
  m.command = "sweep";
  m.seed = loaded.info.seed;
  EffectConfig probe_cfg = base;
  probe_cfg.alpha = 0.0;
  probe_cfg.beta = 0.0;
  m.config = "checkpoint = " + file_hash(opts.checkpoint) + "\ndev = " + file_hash(opts.dev) +
             "\nalphas = " + join(opts.alphas) + "\nbetas = " + join(opts.betas) + "\n" + effect_canonical(probe_cfg);
  m.fingerprint = fnv1a_hex(m.config);
  m.inputs = {{"checkpoint", opts.checkpoint.string()}, {"dev", opts.dev.string()}};

  std::ostringstream csv;
  csv.precision(17);
  csv << "alpha,beta,mf1,mr\n";
  for (const auto& p : result.grid) csv << p.alpha << "," << p.beta << "," << p.mf1 << "," << p.mr << "\n";
  write_text_file(dir / "sweep.csv", csv.str());
  add_output(m, dir, "sweep.csv");
  ordered_json best;
  best["alpha"] = result.best.alpha;
  best["beta"] = result.best.beta;
  best["mf1"] = result.best.mf1;
  best["mr"] = result.best.mr;
  best["mask"] = mask.to_string();
  write_text_file(dir / "best.json", best.dump(2) + "\n");
  add_output(m, dir, "best.json");
  write_manifest(dir, m);
  log << "best alpha=" << result.best.alpha << " beta=" << result.best.beta << " dev MF1=" << result.best.mf1 << "\n";
  return result;
}

RunConfig ablation_variant(const RunConfig& base, std::string_view variant) {
  RunConfig cfg = base;
  if (variant == "full") return cfg;
  if (variant == "no-syntax-train") {
    cfg.encoder.use_syntax = false;
  } else if (variant == "null-mask") {
    cfg.effect.mask = MaskSpec(MaskStrategy::NullInput);
  } else if (variant == "no-syntax-both") {
    cfg.encoder.use_syntax = false;
    cfg.effect.mask = MaskSpec(MaskStrategy::NullInput);
  } else {
    throw UsageError("unknown ablation variant '" + std::string(variant) +
                     "' (full, no-syntax-train, null-mask, no-syntax-both)");
  }
  return cfg;
}

std::vector<AblationRow> cmd_ablate(const AblateOptions& opts, std::ostream& log) {
  std::vector<std::pair<std::string, RunConfig>> runs;
  for (const auto& v : opts.variants) runs.emplace_back(v, ablation_variant(opts.config, v));
  if (!opts.drop.empty()) {
    RunConfig cfg = opts.config;
    cfg.nodes = ablate(cfg.scm_spec(2), opts.drop).nodes;
    std::string name = "without";
    for (NodeKind n : opts.drop) name += "-" + std::string(to_string(n));
    runs.emplace_back(name, cfg);
  }
  if (runs.empty()) throw UsageError("ablate needs at least one variant");
  for (const auto& [name, cfg] : runs) cfg.validate();

  const fs::path dir = ensure_dir(opts.config.output);
  Manifest m;
  m.command = "ablate";
  m.fingerprint = fingerprint(opts.config);
  m.seed = opts.config.seed;
  m.config = to_ini(opts.config);
  for (const auto& [name, cfg] : runs) m.config += "\n# variant " + name + " " + fingerprint(cfg);
  m.config += opts.tune ? "\n# tune\n" : "\n";

  Corpora data = load_corpora(opts.config);
  const Corpus& eval_corpus = data.test ? *data.test : (data.dev ? *data.dev : data.train);
  std::vector<AblationRow> rows;
  std::ostringstream csv;
  csv.precision(17);
  csv << "variant,bucket,metric,value\n";
  for (const auto& [name, cfg] : runs) {
    log << "variant " << name << "\n";
    const SCMSpec spec = cfg.scm_spec(data.train.vocabs->labels.size());
    TrainResult result =
        train(data.train, data.dev ? &*data.dev : nullptr, spec, cfg.encoder, cfg.training, cfg.seed);
    EffectConfig effect = cfg.effect;
    if (opts.tune && effect.mode != EffectMode::Conventional) {
      if (!data.dev) throw UsageError("ablate --tune needs a dev corpus");
      const auto alphas = default_alpha_grid();
      const auto betas = default_beta_grid();
      effect = sweep(result.model, *data.dev, alphas, betas, effect.mask, effect.options).best_config;
    }
    const BucketSplit buckets = compute_buckets(data.train, cfg.buckets);
    Evaluation ev = evaluate(result.model, eval_corpus, effect, buckets);
    ev.report.fingerprint = fingerprint(cfg);
    ev.report.seed = cfg.seed;
    write_report(dir, "metrics_" + name, ev.report, m);
    for (const auto& b : ev.report.buckets) {
      for (const auto& [metric, value] : {std::pair{"mr", b.mr}, {"mf1", b.mf1}, {"micro_f1", b.micro_f1}}) {
        csv << name << "," << b.name << "," << metric << ",";
        if (value) csv << *value;
        csv << "\n";
      }
    }
    log_report(log, "  " + name, ev.report);
    rows.push_back({name, effect, std::move(ev.report)});
  }
  write_text_file(dir / "ablation.csv", csv.str());
  add_output(m, dir, "ablation.csv");
  write_manifest(dir, m);
  return rows;
}

}  // namespace cfie
