#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfie/corpus.hpp"
#include "cfie/encoder.hpp"
#include "cfie/inference.hpp"
#include "cfie/scm.hpp"
#include "cfie/synth.hpp"
#include "cfie/training.hpp"

namespace cfie {

inline constexpr const char* kVersion = "0.1.0";
/// Environment variable that relative output directories resolve under.
inline constexpr const char* kOutputRootEnv = "CFIE_OUTPUT_ROOT";

/// One experiment. Config files are INI-style: `[section]` headers and
/// `key = value` lines. Sections: run, data, synth, encoder, scm, train,
/// effect, buckets. Keys mirror the field names below.
struct RunConfig {
  Task task = Task::NER;
  std::uint64_t seed = 13;
  std::filesystem::path output = "runs/default";

  /// Corpus files. When `train` is empty the synth section generates data.
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path test;
  SynthConfig synth;

  EncoderConfig encoder;
  /// Empty means the task default.
  std::vector<NodeKind> nodes;
  Fusion fusion = Fusion::Sum;
  std::size_t feature_dim = 8;
  TrainConfig training;

  EffectConfig effect;
  BucketThresholds buckets;

  bool uses_files() const { return !train.empty(); }
  /// Throws ConfigError on bad values and PathError on missing corpus files.
  void validate() const;
  /// Spec for a label inventory of `classes` entries.
  SCMSpec scm_spec(std::size_t classes) const;
};

/// Defaults for a task: default effect and encoder kind follow the task.
RunConfig default_run_config(Task task);

/// Reads `path` and then applies `overrides` ("section.key=value"). Unknown
/// sections or keys throw ConfigError.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides = {});
void apply_override(RunConfig& cfg, std::string_view assignment);
void set_value(RunConfig& cfg, std::string_view section, std::string_view key, std::string_view value);

/// Canonical INI text: every key, fixed order, shortest round-trip numbers.
std::string to_ini(const RunConfig& cfg);
/// Canonical text of an effect config. TDE is written as main effect with
/// alpha 1 and beta 0 so equivalent settings share a fingerprint.
std::string effect_canonical(const EffectConfig& effect);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view data);
/// Hash of the canonical text with run.output blanked.
std::string fingerprint(const RunConfig& cfg);

/// Relative paths resolve under $CFIE_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& dir);

struct ManifestOutput {
  std::string file;
  std::string fnv1a;
};

/// Written next to every command's outputs. No timestamps, so two identical
/// runs produce identical manifests.
struct Manifest {
  std::string command;
  std::string fingerprint;
  std::uint64_t seed = 0;
  /// Canonical config or argument text the outputs were produced from.
  std::string config;
  std::vector<std::pair<std::string, std::string>> inputs;  // role, path
  std::vector<ManifestOutput> outputs;

  std::string to_json() const;
};

/// Records the hash of a file already written in `dir`.
void add_output(Manifest& manifest, const std::filesystem::path& dir, const std::string& file);
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cfie
