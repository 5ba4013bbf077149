#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/evaluation.hpp"
#include "cfie/metrics.hpp"
#include "cfie/run_config.hpp"
#include "cfie/scm.hpp"
#include "cfie/training.hpp"

namespace cfie {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRuntime = 3 };
/// Maps an exception from a command onto its exit code.
int exit_code_for(const std::exception& e);

struct Corpora {
  Corpus train;
  std::optional<Corpus> dev;
  std::optional<Corpus> test;
};

/// Reads the configured files or generates the synthetic benchmark. All
/// corpora share one vocabulary set.
Corpora load_corpora(const RunConfig& cfg);

/// Reads a corpus against a copy of the model's vocabularies; tokens the model
/// never saw map to UNK at lookup time. Unseen labels throw StructureError.
Corpus read_corpus_for(const Model& model, const std::filesystem::path& path, Split split);

/// What a checkpoint remembers about its training run.
struct CheckpointInfo {
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> train_counts;
  BucketThresholds buckets;
};
std::string checkpoint_extra(const RunConfig& cfg, const Corpus& train);
CheckpointInfo parse_checkpoint_extra(const std::string& json);
BucketSplit buckets_of(const Model& model, const CheckpointInfo& info);

/// Writes train/dev/test .conll files and a manifest.
void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct TrainOutput {
  TrainResult result;
  CheckpointInfo info;
};
/// Writes model.ckpt, train_log.jsonl, the corpora when synthetic, and a
/// manifest into the resolved output directory.
TrainOutput cmd_train(const RunConfig& cfg, std::ostream& log);

/// Effect flags as given on the command line; unset fields take the task default.
struct EffectChoice {
  EffectMode mode = EffectMode::MainEffect;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<MaskSpec> mask;
  std::optional<std::vector<NodeKind>> intervene;
  bool context_sees_counterfactual = false;

  /// Throws UsageError for a mask with mode=conventional or an illegal mask.
  EffectConfig resolve(Task task) const;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path out;
  EffectChoice effect;
  bool dump_predictions = true;
};
/// Writes metrics.jsonl, metrics.csv, predictions.jsonl and a manifest.
MetricsReport cmd_eval(const EvalOptions& opts, std::ostream& log);

struct ProbeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path out;
  /// "cue" picks candidates holding their own class's cue word, "gold" every
  /// non-O candidate, "id:<sentence id>" one sentence.
  std::string select = "cue";
  std::size_t limit = 200;
  std::uint64_t seed = 13;
};

struct ProbeInstance {
  std::string sentence;
  Candidate candidate;
  int gold = -1;
  std::vector<ProbeEntry> ranking;
};

struct ProbeSummary {
  std::vector<ProbeInstance> instances;
  /// Share of instances where each strategy gives the largest drop.
  std::vector<std::pair<std::string, double>> top_share;
};

/// Candidates a selector picks, before sampling.
std::vector<ProbeInstance> select_probe_instances(const Corpus& corpus, std::string_view select);
ProbeSummary run_probe(const Model& model, const Corpus& corpus, std::string_view select, std::size_t limit,
                       std::uint64_t seed);
/// Writes probe.jsonl, probe_summary.json and a manifest.
ProbeSummary cmd_probe(const ProbeOptions& opts, std::ostream& log);

struct SweepOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dev;
  std::filesystem::path out;
  std::vector<double> alphas = default_alpha_grid();
  std::vector<double> betas = default_beta_grid();
  /// Mode, alpha and beta are ignored.
  EffectChoice effect;
};
/// Writes sweep.csv, best.json and a manifest.
SweepResult cmd_sweep(const SweepOptions& opts, std::ostream& log);

struct AblateOptions {
  RunConfig config;
  /// full, no-syntax-train, null-mask, no-syntax-both.
  std::vector<std::string> variants = {"full"};
  /// Adds a variant without these feature nodes.
  std::vector<NodeKind> drop;
  /// Tune alpha and beta on dev per variant before the test evaluation.
  bool tune = false;
};

struct AblationRow {
  std::string variant;
  EffectConfig effect;
  MetricsReport report;
};

/// Returns the effect and run config a named variant uses.
RunConfig ablation_variant(const RunConfig& base, std::string_view variant);
/// Trains and evaluates every variant; writes ablation.csv, one metrics file
/// per variant and a manifest.
std::vector<AblationRow> cmd_ablate(const AblateOptions& opts, std::ostream& log);

}  // namespace cfie
