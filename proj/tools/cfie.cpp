// cfie: counterfactual debiasing experiments from the command line.
//
//   cfie synth   --config synth.cfg --out data/
//   cfie train   --config ner.cfg [--set train.epochs=4]
//   cfie eval    --checkpoint m.ckpt --corpus test.conll --mode tde
//   cfie probe   --checkpoint m.ckpt --corpus test.conll --select cue
//   cfie sweep   --checkpoint m.ckpt --dev dev.conll --mask one-hop
//   cfie ablate  --config ed.cfg --variant full --drop ner --tune

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "cfie/commands.hpp"
#include "cfie/errors.hpp"

namespace {

using namespace cfie;

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty grid");
  return out;
}

struct EffectFlags {
  std::string mode = "main-effect";
  std::optional<double> alpha;
  std::optional<double> beta;
  std::string mask;
  std::string intervene;
  bool context_cf = false;

  void attach(CLI::App* app, bool with_mode) {
    if (with_mode) {
      app->add_option("--mode", mode, "conventional, tde or main-effect");
      app->add_option("--alpha", alpha, "weight of Y_x*");
      app->add_option("--beta", beta, "weight of the counterfactual X edge");
    }
    app->add_option("--mask", mask, "mask strategies, e.g. one-hop or entity,feature-pos");
    app->add_option("--intervene", intervene, "intervened nodes, e.g. x,ner");
    app->add_flag("--context-sees-counterfactual", context_cf, "let the S edge read the masked sentence");
  }

  EffectChoice choice() const {
    EffectChoice c;
    c.mode = parse_effect_mode(mode);
    c.alpha = alpha;
    c.beta = beta;
    if (!mask.empty()) c.mask = MaskSpec::parse(mask);
    if (!intervene.empty()) c.intervene = parse_node_list(intervene);
    c.context_sees_counterfactual = context_cf;
    return c;
  }
};

RunConfig read_config(const std::string& path, const std::vector<std::string>& sets) {
  if (path.empty()) return parse_run_config("", sets);
  return load_run_config(path, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual debiasing for information extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration");
    sub->add_option("--set", sets, "override, section.key=value")->allow_extra_args(false);
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  add_config(synth);
  synth->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train an SCM and write a checkpoint");
  add_config(train);
  train->add_option("--out", out, "output directory (overrides run.output)");

  EvalOptions eval_opts;
  EffectFlags eval_flags;
  std::string ckpt, corpus;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--out", out, "output directory")->required();
  eval->add_flag("!--no-predictions", eval_opts.dump_predictions, "skip predictions.jsonl");
  eval_flags.attach(eval, true);

  ProbeOptions probe_opts;
  auto* probe = app.add_subcommand("probe", "rank mask strategies by ground-truth drop");
  probe->add_option("--checkpoint", ckpt)->required();
  probe->add_option("--corpus", corpus)->required();
  probe->add_option("--out", out, "output directory")->required();
  probe->add_option("--select", probe_opts.select, "cue, gold or id:<sentence id>");
  probe->add_option("--limit", probe_opts.limit, "sampled instances, 0 for all");
  probe->add_option("--seed", probe_opts.seed, "sampling seed");

  SweepOptions sweep_opts;
  EffectFlags sweep_flags;
  std::string alphas, betas;
  auto* sweep = app.add_subcommand("sweep", "grid-search alpha and beta on dev MF1");
  sweep->add_option("--checkpoint", ckpt)->required();
  sweep->add_option("--dev", corpus)->required();
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_option("--alphas", alphas, "comma list, default 0,0.25,0.5,0.75,1");
  sweep->add_option("--betas", betas, "comma list, default 0..2.4 step 0.2");
  sweep_flags.attach(sweep, false);

  AblateOptions ablate_opts;
  std::vector<std::string> variants;
  std::string drop;
  EffectFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "train and compare model variants");
  add_config(ablate);
  ablate->add_option("--out", out, "output directory (overrides run.output)");
  ablate->add_option("--variant", variants, "full, no-syntax-train, null-mask, no-syntax-both");
  ablate->add_flag("--no-syntax-train", [&](std::int64_t) { variants.push_back("no-syntax-train"); });
  ablate->add_flag("--no-syntax-both", [&](std::int64_t) { variants.push_back("no-syntax-both"); });
  ablate->add_option("--drop", drop, "feature nodes to remove, e.g. ner");
  ablate->add_flag("--tune", ablate_opts.tune, "sweep alpha and beta on dev per variant");
  ablate_flags.attach(ablate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(read_config(config_path, sets), out, std::cout);
    } else if (train->parsed()) {
      RunConfig cfg = read_config(config_path, sets);
      if (!out.empty()) cfg.output = out;
      cmd_train(cfg, std::cout);
    } else if (eval->parsed()) {
      eval_opts.checkpoint = ckpt;
      eval_opts.corpus = corpus;
      eval_opts.out = out;
      eval_opts.effect = eval_flags.choice();
      cmd_eval(eval_opts, std::cout);
    } else if (probe->parsed()) {
      probe_opts.checkpoint = ckpt;
      probe_opts.corpus = corpus;
      probe_opts.out = out;
      cmd_probe(probe_opts, std::cout);
    } else if (sweep->parsed()) {
      sweep_opts.checkpoint = ckpt;
      sweep_opts.dev = corpus;
      sweep_opts.out = out;
      if (!alphas.empty()) sweep_opts.alphas = parse_grid(alphas);
      if (!betas.empty()) sweep_opts.betas = parse_grid(betas);
      sweep_opts.effect = sweep_flags.choice();
      cmd_sweep(sweep_opts, std::cout);
    } else if (ablate->parsed()) {
      RunConfig cfg = read_config(config_path, sets);
      if (!out.empty()) cfg.output = out;
      const EffectChoice choice = ablate_flags.choice();
      if (choice.mask) cfg.effect.mask = *choice.mask;
      if (choice.intervene) cfg.effect.options.intervene = *choice.intervene;
      cfg.effect.options.context_sees_counterfactual |= choice.context_sees_counterfactual;
      ablate_opts.config = cfg;
      if (!variants.empty()) ablate_opts.variants = variants;
      if (!drop.empty()) {
        ablate_opts.drop = parse_node_list(drop);
        if (variants.empty()) ablate_opts.variants = {"full"};
      }
      cmd_ablate(ablate_opts, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "cfie: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
