#include "cfie/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cfie/errors.hpp"

namespace cfie {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string where(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

double to_double(std::string_view section, std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where(section, key) + ": expected a number, got '" + std::string(v) + "'");
  return out;
}

template <class T>
T to_unsigned(std::string_view section, std::string_view key, std::string_view v) {
  T out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where(section, key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view section, std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where(section, key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string node_list(const std::vector<NodeKind>& nodes) {
  std::string out;
  for (NodeKind n : nodes) {
    if (!out.empty()) out += ',';
    out += to_string(n);
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define CFIE_SIZE(sec, name, member)                                                      \
  Field{sec, name, [](const RunConfig& c) { return std::to_string(c.member); },          \
        [](RunConfig& c, std::string_view v) { c.member = to_unsigned<std::size_t>(sec, name, v); }}
#define CFIE_REAL(sec, name, member)                                 \
  Field{sec, name, [](const RunConfig& c) { return fmt(c.member); }, \
        [](RunConfig& c, std::string_view v) { c.member = to_double(sec, name, v); }}
#define CFIE_BOOL(sec, name, member)                                                     \
  Field{sec, name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](RunConfig& c, std::string_view v) { c.member = to_bool(sec, name, v); }}
#define CFIE_PATH(sec, name, member)                                       \
  Field{sec, name, [](const RunConfig& c) { return c.member.string(); },  \
        [](RunConfig& c, std::string_view v) { c.member = std::filesystem::path(std::string(v)); }}

template <class F>
auto wrap(std::string_view section, std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where(section, key) + ": " + e.what());
  }
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "task", [](const RunConfig& c) { return std::string(to_string(c.task)); },
            [](RunConfig& c, std::string_view v) { c.task = wrap("run", "task", [&] { return parse_task(v); }); }},
      Field{"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, std::string_view v) { c.seed = to_unsigned<std::uint64_t>("run", "seed", v); }},
      CFIE_PATH("run", "output", output),

      CFIE_PATH("data", "train", train),
      CFIE_PATH("data", "dev", dev),
      CFIE_PATH("data", "test", test),

      CFIE_SIZE("synth", "num_classes", synth.num_classes),
      CFIE_REAL("synth", "head_tail_ratio", synth.head_tail_ratio),
      CFIE_REAL("synth", "cue_strength", synth.cue_strength),
      CFIE_REAL("synth", "context_strength", synth.context_strength),
      CFIE_REAL("synth", "ner_strength", synth.ner_strength),
      CFIE_SIZE("synth", "vocab_size", synth.vocab_size),
      CFIE_SIZE("synth", "min_length", synth.min_length),
      CFIE_SIZE("synth", "max_length", synth.max_length),
      Field{"synth", "tree_model", [](const RunConfig& c) { return std::string(to_string(c.synth.tree_model)); },
            [](RunConfig& c, std::string_view v) {
              c.synth.tree_model = wrap("synth", "tree_model", [&] { return parse_tree_model(v); });
            }},
      CFIE_SIZE("synth", "train_sentences", synth.train_sentences),
      CFIE_SIZE("synth", "dev_sentences", synth.dev_sentences),
      CFIE_SIZE("synth", "test_sentences", synth.test_sentences),
      CFIE_BOOL("synth", "balanced_eval", synth.balanced_eval),
      CFIE_BOOL("synth", "multi_token_spans", synth.multi_token_spans),
      Field{"synth", "seed", [](const RunConfig& c) { return std::to_string(c.synth.seed); },
            [](RunConfig& c, std::string_view v) { c.synth.seed = to_unsigned<std::uint64_t>("synth", "seed", v); }},

      Field{"encoder", "kind", [](const RunConfig& c) { return std::string(to_string(c.encoder.kind)); },
            [](RunConfig& c, std::string_view v) {
              c.encoder.kind = wrap("encoder", "kind", [&] { return parse_encoder_kind(v); });
            }},
      CFIE_SIZE("encoder", "word_dim", encoder.word_dim),
      CFIE_SIZE("encoder", "pos_dim", encoder.pos_dim),
      CFIE_SIZE("encoder", "deprel_dim", encoder.deprel_dim),
      CFIE_SIZE("encoder", "hidden_dim", encoder.hidden_dim),
      CFIE_SIZE("encoder", "x_dim", encoder.x_dim),
      CFIE_SIZE("encoder", "gcn_dim", encoder.gcn_dim),
      CFIE_SIZE("encoder", "gcn_layers", encoder.gcn_layers),
      CFIE_REAL("encoder", "dropout", encoder.dropout),
      CFIE_REAL("encoder", "word_dropout", encoder.word_dropout),
      CFIE_BOOL("encoder", "use_syntax", encoder.use_syntax),

      Field{"scm", "nodes", [](const RunConfig& c) { return c.nodes.empty() ? std::string("default") : node_list(c.nodes); },
            [](RunConfig& c, std::string_view v) {
              if (v == "default" || v.empty())
                c.nodes.clear();
              else
                c.nodes = wrap("scm", "nodes", [&] { return parse_node_list(v); });
            }},
      Field{"scm", "fusion", [](const RunConfig& c) { return std::string(to_string(c.fusion)); },
            [](RunConfig& c, std::string_view v) { c.fusion = wrap("scm", "fusion", [&] { return parse_fusion(v); }); }},
      CFIE_SIZE("scm", "feature_dim", feature_dim),

      CFIE_SIZE("train", "epochs", training.epochs),
      CFIE_SIZE("train", "batch_size", training.batch_size),
      CFIE_REAL("train", "learning_rate", training.adam.learning_rate),
      CFIE_REAL("train", "clip_norm", training.adam.clip_norm),
      CFIE_REAL("train", "feature_dropout", training.feature_dropout),
      CFIE_SIZE("train", "patience", training.patience),

      Field{"effect", "mode", [](const RunConfig& c) { return std::string(to_string(c.effect.mode)); },
            [](RunConfig& c, std::string_view v) {
              c.effect.mode = wrap("effect", "mode", [&] { return parse_effect_mode(v); });
            }},
      CFIE_REAL("effect", "alpha", effect.alpha),
      CFIE_REAL("effect", "beta", effect.beta),
      Field{"effect", "mask", [](const RunConfig& c) { return c.effect.mask.to_string(); },
            [](RunConfig& c, std::string_view v) {
              c.effect.mask = wrap("effect", "mask", [&] { return MaskSpec::parse(v); });
            }},
      Field{"effect", "intervene", [](const RunConfig& c) { return node_list(c.effect.options.intervene); },
            [](RunConfig& c, std::string_view v) {
              c.effect.options.intervene = wrap("effect", "intervene", [&] { return parse_node_list(v); });
            }},
      CFIE_BOOL("effect", "context_sees_counterfactual", effect.options.context_sees_counterfactual),

      CFIE_SIZE("buckets", "few_max", buckets.few_max),
      CFIE_SIZE("buckets", "medium_max", buckets.medium_max),
  };
  return table;
}

#undef CFIE_SIZE
#undef CFIE_REAL
#undef CFIE_BOOL
#undef CFIE_PATH

using Assignment = std::tuple<std::string, std::string, std::string>;

Assignment split_override(std::string_view text) {
  const auto eq = text.find('=');
  const auto dot = text.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
    throw ConfigError("override '" + std::string(text) + "' is not section.key=value");
  return {trim(text.substr(0, dot)), trim(text.substr(dot + 1, eq - dot - 1)), trim(text.substr(eq + 1))};
}

std::vector<Assignment> read_assignments(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }
  std::vector<Assignment> out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' sits outside any section");
    for (const auto& [key, value] : body) out.emplace_back(section, key, trim(value.data()));
  }
  return out;
}

RunConfig build(const std::vector<Assignment>& assignments) {
  Task task = Task::NER;
  for (const auto& [section, key, value] : assignments)
    if (section == "run" && key == "task") task = wrap("run", "task", [&] { return parse_task(value); });
  RunConfig cfg = default_run_config(task);
  for (const auto& [section, key, value] : assignments) set_value(cfg, section, key, value);
  cfg.synth.task = cfg.task;
  return cfg;
}

}  // namespace

void RunConfig::validate() const {
  if (uses_files()) {
    for (const auto* p : {&train, &dev, &test})
      if (!p->empty() && !std::filesystem::exists(*p)) throw PathError("corpus file not found: " + p->string());
  } else {
    if (!dev.empty() || !test.empty()) throw ConfigError("data.dev/data.test need data.train");
    synth.validate();
    if (synth.task != task) throw ConfigError("synth task differs from run.task");
  }
  encoder.validate();
  training.validate();
  if (feature_dim == 0) throw ConfigError("scm.feature_dim must be positive");
  if (buckets.few_max > buckets.medium_max) throw ConfigError("buckets.few_max exceeds buckets.medium_max");
  if (!(effect.alpha >= 0.0) || !(effect.beta >= 0.0)) throw ConfigError("effect.alpha and effect.beta must be >= 0");
  try {
    check_legal(effect.mask, task);
    scm_spec(2).validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

SCMSpec RunConfig::scm_spec(std::size_t classes) const {
  SCMSpec spec = default_spec(task, classes);
  if (!nodes.empty()) spec.nodes = nodes;
  spec.fusion = fusion;
  spec.feature_dim = feature_dim;
  return spec;
}

RunConfig default_run_config(Task task) {
  RunConfig cfg;
  cfg.task = task;
  cfg.synth.task = task;
  cfg.encoder.kind = task == Task::RE ? EncoderKind::Gcn : EncoderKind::DepConcat;
  cfg.effect = default_effect(task);
  return cfg;
}

void set_value(RunConfig& cfg, std::string_view section, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (section == f.section && key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key " + where(section, key));
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto [section, key, value] = split_override(assignment);
  set_value(cfg, section, key, value);
  cfg.synth.task = cfg.task;
}

RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides) {
  std::vector<Assignment> all = read_assignments(text);
  for (const auto& o : overrides) all.push_back(split_override(o));
  return build(all);
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = parse_run_config(read_text_file(path), overrides);
  // Relative corpus paths are read relative to the config file.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.train, &cfg.dev, &cfg.test})
    if (!p->empty() && p->is_relative() && !base.empty()) *p = base / *p;
  return cfg;
}

std::string effect_canonical(const EffectConfig& effect) {
  std::ostringstream out;
  if (effect.mode == EffectMode::Conventional) {
    out << "mode = conventional\n";
    return out.str();
  }
  out << "mode = main-effect\n"
      << "alpha = " << fmt(effect.effective_alpha()) << "\n"
      << "beta = " << fmt(effect.effective_beta()) << "\n"
      << "mask = " << effect.mask.to_string() << "\n"
      << "intervene = " << node_list(effect.options.intervene) << "\n"
      << "context_sees_counterfactual = " << (effect.options.context_sees_counterfactual ? "true" : "false")
      << "\n";
  return out.str();
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (std::string_view(f.section) == "effect") continue;
    if (section != f.section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << "\n";
  }
  out << "\n[effect]\n" << effect_canonical(cfg.effect);
  return out.str();
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fingerprint(const RunConfig& cfg) {
  // Where outputs go does not change what they contain.
  RunConfig c = cfg;
  c.output.clear();
  return fnv1a_hex(to_ini(c));
}

std::filesystem::path resolve_output(const std::filesystem::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / dir;
  return dir;
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "cfie-manifest";
  j["command"] = command;
  j["fingerprint"] = fingerprint;
  j["seed"] = seed;
  j["versions"] = {{"cfie", kVersion}, {"checkpoint", 1}};
  j["config"] = config;
  nlohmann::ordered_json in = nlohmann::ordered_json::array();
  for (const auto& [role, path] : inputs) in.push_back({{"role", role}, {"path", path}});
  j["inputs"] = in;
  nlohmann::ordered_json outs = nlohmann::ordered_json::array();
  for (const auto& o : outputs) outs.push_back({{"file", o.file}, {"fnv1a", o.fnv1a}});
  j["outputs"] = outs;
  return j.dump(2) + "\n";
}

void add_output(Manifest& manifest, const std::filesystem::path& dir, const std::string& file) {
  manifest.outputs.push_back({file, fnv1a_hex(read_text_file(dir / file))});
}

void write_manifest(const std::filesystem::path& dir, const Manifest& manifest) {
  write_text_file(dir / "manifest.json", manifest.to_json());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw PathError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cfie
