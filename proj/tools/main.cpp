#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <functional>

#include "commands.hpp"
#include "lwnd/errors.hpp"

using namespace lwnd::cli;

namespace {

// Reads a flat key=value file into the options of the selected subcommand.
// A seed in the file yields to ND_SEED, which yields to --seed.
class FlatConfig : public CLI::ConfigBase {
 public:
  explicit FlatConfig(const CLI::App& app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigBase::from_config(input);
    const auto subs = app_.get_subcommands();
    const bool env_seed = std::getenv("ND_SEED") != nullptr;
    std::vector<CLI::ConfigItem> out;
    for (auto& item : items) {
      if (!item.parents.empty() || subs.empty()) continue;
      if (env_seed && item.name == "seed") continue;
      item.parents = {subs.front()->get_name()};
      out.push_back(std::move(item));
    }
    return out;
  }

 private:
  const CLI::App& app_;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->envname("ND_SEED");
  sub->add_option("--jobs", c.jobs, "Maximum worker threads (0 = all cores)");
  sub->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-reproducible numerics");
  sub->add_option("--report", c.report, "Write a JSON run report to this path");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight neural distinguisher toolkit for SPECK32/64"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Flat key=value configuration file; command-line flags take precedence");
  app.config_formatter(std::make_shared<FlatConfig>(app));

  Common common;
  std::function<int()> run;

  GenDataOptions gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a labeled ciphertext-pair dataset");
  add_common(gen, common);
  gen->add_option("--rounds", gd.rounds, "Cipher rounds")->capture_default_str();
  gen->add_option("--n-per-class", gd.n_per_class, "Pairs per class")->capture_default_str();
  gen->add_option("--group-size,-g", gd.group_size, "Pairs per sample")->capture_default_str();
  gen->add_option("--delta", gd.delta, "Input difference LEFT/RIGHT in hex")->capture_default_str();
  gen->add_option("--out,-o", gd.out, "Output dataset file")->required();
  gen->callback([&] { run = [&] { return gen_data(common, gd); }; });

  TrainOptions tr;
  auto* trn = app.add_subcommand("train", "Train one or more distinguishers");
  add_common(trn, common);
  trn->add_option("--data", tr.data, "Training dataset")->required();
  trn->add_option("--val-data", tr.val_data, "Validation dataset")->required();
  trn->add_option("--out,-o", tr.out, "Checkpoint path (suffixed _rN with repeats)")->required();
  trn->add_option("--init", tr.init, "Start from this checkpoint instead of a fresh model");
  trn->add_option("--quant-stage", tr.quant_stage, "fp | weights | full")->capture_default_str();
  trn->add_option("--repeats", tr.repeats, "Independently seeded runs")->capture_default_str();
  trn->add_option("--epochs", tr.epochs, "Epochs (per stage when quantizing)")->capture_default_str();
  trn->add_option("--schedule", tr.schedule, "Epochs per stage fp,weights,full")->delimiter(',');
  trn->add_option("--batch-size", tr.batch_size)->capture_default_str();
  trn->add_option("--lr", tr.lr)->capture_default_str();
  trn->add_option("--final-lr-fraction", tr.final_lr_fraction, "Linear decay target within each stage")
      ->capture_default_str();
  trn->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  trn->add_option("--patience", tr.patience, "Early-stopping patience (0 = off)")->capture_default_str();
  trn->add_option("--channels", tr.channels)->capture_default_str();
  trn->add_option("--blocks", tr.blocks, "Residual blocks")->capture_default_str();
  trn->add_option("--dense", tr.dense, "Hidden dense widths")->delimiter(',')->capture_default_str();
  trn->add_option("--head-activation", tr.head_activation, "relu | sigmoid")->capture_default_str();
  trn->add_option("--threshold", tr.threshold, "Decision threshold")->capture_default_str();
  trn->callback([&] { run = [&] { return train(common, tr); }; });

  QuantizeOptions qo;
  auto* qz = app.add_subcommand("quantize", "Move a checkpoint to a later quantization stage");
  add_common(qz, common);
  qz->add_option("--checkpoint", qo.checkpoint)->required();
  qz->add_option("--out,-o", qo.out)->required();
  qz->add_option("--stage", qo.stage, "weights | full")->capture_default_str();
  qz->add_option("--data", qo.data, "Training data for optional fine-tuning");
  qz->add_option("--val-data", qo.val_data);
  qz->add_option("--epochs", qo.epochs, "Fine-tuning epochs")->capture_default_str();
  qz->add_option("--batch-size", qo.batch_size)->capture_default_str();
  qz->add_option("--lr", qo.lr)->capture_default_str();
  qz->add_option("--final-lr-fraction", qo.final_lr_fraction)->capture_default_str();
  qz->add_option("--patience", qo.patience)->capture_default_str();
  qz->callback([&] { run = [&] { return quantize(common, qo); }; });

  LowerOptions lo;
  auto* lw = app.add_subcommand("lower", "Lower a fully quantized checkpoint to a Boolean program");
  add_common(lw, common);
  lw->add_option("--checkpoint", lo.checkpoint)->required();
  lw->add_option("--out,-o", lo.out)->required();
  lw->add_option("--theta-mode", lo.theta_mode, "folded | zero")->capture_default_str();
  lw->add_flag("--fold-output,!--no-fold-output", lo.fold_output, "Fold the two-way output into one channel");
  lw->add_option("--trials", lo.trials, "Random equivalence trials")->capture_default_str();
  lw->add_option("--exhaustive-width", lo.exhaustive_width, "Enumerate units with at most this many inputs")
      ->capture_default_str();
  lw->add_option("--max-literals", lo.max_literals, "Synthesize expressions up to this fan-in")
      ->capture_default_str();
  lw->callback([&] { run = [&] { return lower(common, lo); }; });

  CountOptions co;
  auto* ct = app.add_subcommand("count", "Operation counts, dense versus lightweight");
  add_common(ct, common);
  ct->add_option("input", co.input, "Checkpoint or program file");
  ct->add_flag("--fixture", co.fixture, "Use the reference sparsity profile");
  ct->add_option("--group-size,-g", co.group_size, "Architecture group size for --fixture")->capture_default_str();
  ct->add_flag("--count-dead-indicators", co.count_dead_indicators, "Count indicators of dead head channels");
  ct->add_flag("--csv", co.csv, "CSV instead of a table");
  ct->callback([&] { run = [&] { return count(common, co); }; });

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Accuracy of a checkpoint or program on a dataset");
  add_common(ev, common);
  ev->add_option("input", eo.input, "Checkpoint or program file")->required();
  ev->add_option("--data", eo.data)->required();
  ev->add_option("--threshold", eo.threshold)->capture_default_str();
  ev->callback([&] { run = [&] { return eval(common, eo); }; });

  VerifyOptions vo;
  auto* vf = app.add_subcommand("verify", "Check a program against the checkpoint it came from");
  add_common(vf, common);
  vf->add_option("--checkpoint", vo.checkpoint)->required();
  vf->add_option("--program", vo.program)->required();
  vf->add_option("--trials", vo.trials)->capture_default_str();
  vf->add_option("--exhaustive-width", vo.exhaustive_width)->capture_default_str();
  vf->callback([&] { run = [&] { return verify(common, vo); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (CLI::App* sub : app.get_subcommands()) common.resolved_config = sub->config_to_str(true, false);
  try {
    return run();
  } catch (const lwnd::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const lwnd::EquivalenceError& e) {
    std::fprintf(stderr, "equivalence failure: %s\n", e.what());
    return 3;
  } catch (const lwnd::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
