#include "commands.hpp"

#include <omp.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "lwnd/checksum.hpp"
#include "lwnd/dataset.hpp"
#include "lwnd/errors.hpp"
#include "lwnd/lowering.hpp"
#include "lwnd/model.hpp"
#include "lwnd/opcount.hpp"
#include "lwnd/program_io.hpp"
#include "lwnd/rng.hpp"
#include "lwnd/train.hpp"
#include "lwnd/weights_io.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace lwnd::cli {
namespace {

void apply_jobs(const Common& c) {
  if (c.jobs > 0) {
    omp_set_num_threads(c.jobs);
    Eigen::setNbThreads(c.jobs);
  }
  if (c.deterministic) Eigen::setNbThreads(1);
}

Report start(const std::string& command, const Common& c) {
  Report r(command, c.resolved_config, c.seed, c.report);
  r.save("started");
  return r;
}

std::uint16_t parse_word(const std::string& s) {
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value, 16);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty() || value > 0xffff)
    throw ValidationError("bad hex word '" + s + "'");
  return static_cast<std::uint16_t>(value);
}

InputDifference parse_delta(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) throw ValidationError("difference must be LEFT/RIGHT in hex, got '" + s + "'");
  return {parse_word(s.substr(0, slash)), parse_word(s.substr(slash + 1))};
}

std::string hex4(std::uint16_t w) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%04x", static_cast<unsigned>(w));
  return buf;
}

std::uint64_t repeat_seed(std::uint64_t seed, int r) { return r == 0 ? seed : SplitMix64::stream(seed, static_cast<std::uint64_t>(r))(); }

fs::path repeat_path(const fs::path& out, int r, int repeats) {
  if (repeats == 1) return out;
  fs::path p = out;
  p.replace_filename(out.stem().string() + "_r" + std::to_string(r) + out.extension().string());
  return p;
}

nlohmann::ordered_json confusion_json(const Confusion& c) {
  return {{"accuracy", c.accuracy()},         {"true_real", c.true_real},       {"true_random", c.true_random},
          {"false_real", c.false_real},       {"false_random", c.false_random}, {"total", c.total()}};
}

void print_confusion(const Confusion& c) {
  std::printf("accuracy %.6f (%ld/%ld)\n", c.accuracy(), c.true_real + c.true_random, c.total());
  std::printf("                predicted real  predicted random\n");
  std::printf("actual real     %14ld  %16ld\n", c.true_real, c.false_random);
  std::printf("actual random   %14ld  %16ld\n", c.false_real, c.true_random);
}

void print_sparsity(const lowering::BooleanProgram& p) {
  std::printf("layer type    out  live  nonzeros\n");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    int live = 0;
    for (const auto& cp : L.channels) live += cp.dead() ? 0 : 1;
    const char* type = L.type == lowering::LayerType::Conv ? "conv" : L.type == lowering::LayerType::Dense ? "dense" : "output";
    std::printf("%5zu %-6s %4d  %4d  %8ld\n", l, type, L.out_channels(), live, L.nonzeros());
  }
}

int report_equivalence(const lowering::EquivalenceReport& eq, Report& report) {
  report.results()["equivalence"] = {{"passed", eq.passed},
                                     {"trials", eq.trials_run},
                                     {"units_enumerated", eq.units_enumerated},
                                     {"assignments_checked", eq.assignments_checked},
                                     {"warning", eq.warning},
                                     {"counterexample", eq.counterexample}};
  if (!eq.warning.empty()) std::fprintf(stderr, "warning: %s\n", eq.warning.c_str());
  std::printf("equivalence: %s (%ld random trials, %ld units enumerated, %ld assignments)\n",
              eq.passed ? "PASS" : "FAIL", eq.trials_run, eq.units_enumerated, eq.assignments_checked);
  if (!eq.passed) {
    std::printf("counterexample: %s\n", eq.counterexample.c_str());
    report.save("equivalence-failure");
    return 3;
  }
  return 0;
}

}  // namespace

int gen_data(const Common& common, const GenDataOptions& o) {
  apply_jobs(common);
  Report report = start("gen-data", common);
  if (o.n_per_class < 0) throw ValidationError("n-per-class must be non-negative");
  const InputDifference delta = parse_delta(o.delta);
  const Dataset ds = gen_dataset(static_cast<std::size_t>(o.n_per_class), o.rounds, delta, o.group_size, common.seed);
  write_dataset(o.out, ds);
  report.add_output(o.out);
  const std::string checksum = sha256_file(o.out);
  std::printf("wrote %s: %zu samples (real %zu, random %zu), rounds %d, g %d, delta %s/%s, seed %llu\n",
              o.out.c_str(), ds.size(), ds.count(Label::Real), ds.count(Label::Random), ds.rounds, ds.group_size,
              hex4(delta.left).c_str(), hex4(delta.right).c_str(), static_cast<unsigned long long>(common.seed));
  std::printf("sha256 %s\n", checksum.c_str());
  report.results() = {{"samples", ds.size()},
                      {"real", ds.count(Label::Real)},
                      {"random", ds.count(Label::Random)},
                      {"rounds", ds.rounds},
                      {"group_size", ds.group_size},
                      {"delta", hex4(delta.left) + "/" + hex4(delta.right)},
                      {"sha256", checksum}};
  report.save("ok");
  return 0;
}

int train(const Common& common, const TrainOptions& o) {
  apply_jobs(common);
  Report report = start("train", common);
  if (o.repeats < 1) throw ValidationError("repeats must be >= 1");
  const lsq::QuantStage target = lsq::parse_stage(o.quant_stage);
  const Dataset tr = read_dataset(o.data);
  const Dataset va = read_dataset(o.val_data);
  report.add_input(o.data);
  report.add_input(o.val_data);
  if (!o.init.empty()) report.add_input(o.init);

  ModelConfig cfg;
  cfg.group_size = tr.group_size;
  cfg.channels = o.channels;
  cfg.residual_blocks = o.blocks;
  cfg.dense_sizes = o.dense;
  cfg.decision_threshold = o.threshold;
  if (o.head_activation == "relu")
    cfg.head_activation = HiddenActivation::Relu;
  else if (o.head_activation == "sigmoid")
    cfg.head_activation = HiddenActivation::Sigmoid;
  else
    throw ValidationError("head-activation must be relu or sigmoid");

  std::optional<lsq::QuantSchedule> schedule;
  if (!o.schedule.empty()) {
    if (o.schedule.size() != 3) throw ValidationError("schedule takes three epoch counts: fp,weights,full");
    schedule = lsq::QuantSchedule{o.schedule[0], o.schedule[1], o.schedule[2]};
  } else if (target != lsq::QuantStage::FullPrecision) {
    schedule = lsq::QuantSchedule{o.epochs, o.epochs, target == lsq::QuantStage::Full ? o.epochs : 0};
  }

  std::vector<double> accuracies;
  auto& runs = report.results()["runs"] = nlohmann::ordered_json::array();
  for (int r = 0; r < o.repeats; ++r) {
    const std::uint64_t seed = repeat_seed(common.seed, r);
    ModelF model = o.init.empty() ? ModelF::build(cfg, seed) : load_checkpoint(o.init);
    TrainHyper h;
    h.epochs = o.epochs;
    h.batch_size = o.batch_size;
    h.adam.lr = o.lr;
    h.adam.weight_decay = o.weight_decay;
    h.final_lr_fraction = o.final_lr_fraction;
    h.patience = o.patience;
    h.seed = seed;
    h.deterministic = common.deterministic;
    std::printf("run %d seed %llu\n", r, static_cast<unsigned long long>(seed));
    const TrainResult res = train(model, tr, va, h, schedule, [](const EpochRecord& e) {
      std::printf("  epoch %3d %-7s loss %.5f train %.4f val %.4f (%.1fs)\n", e.epoch, lsq::to_string(e.stage).c_str(),
                  e.loss, e.train_accuracy, e.val_accuracy, e.seconds);
      std::fflush(stdout);
    });
    const fs::path out = repeat_path(o.out, r, o.repeats);
    save_checkpoint(out, res.model);
    report.add_output(out);
    const double acc = res.report.epochs.empty() ? evaluate(res.model, va).accuracy() : res.report.best_val_accuracy;
    accuracies.push_back(acc);
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const auto& e : res.report.epochs)
      epochs.push_back({{"epoch", e.epoch},
                        {"stage", lsq::to_string(e.stage)},
                        {"loss", e.loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_accuracy", e.val_accuracy},
                        {"seconds", e.seconds}});
    runs.push_back({{"seed", seed},
                    {"checkpoint", out.string()},
                    {"stage", lsq::to_string(res.model.stage)},
                    {"best_epoch", res.report.best_epoch},
                    {"val_accuracy", acc},
                    {"wall_seconds", res.report.wall_seconds},
                    {"epochs", epochs}});
    std::printf("run %d: validation accuracy %.6f -> %s\n", r, acc, out.c_str());
  }
  const double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
  report.results()["mean_val_accuracy"] = mean;
  std::printf("mean validation accuracy over %d run(s): %.6f\n", o.repeats, mean);
  report.save("ok");
  return 0;
}

int quantize(const Common& common, const QuantizeOptions& o) {
  apply_jobs(common);
  Report report = start("quantize", common);
  ModelF model = load_checkpoint(o.checkpoint);
  report.add_input(o.checkpoint);
  const lsq::QuantStage target = lsq::parse_stage(o.stage);
  if (target < model.stage) throw ValidationError("cannot move a checkpoint back to an earlier quantization stage");
  model.set_stage(target);
  if (o.epochs > 0) {
    if (o.data.empty() || o.val_data.empty()) throw ValidationError("fine-tuning needs --data and --val-data");
    const Dataset tr = read_dataset(o.data);
    const Dataset va = read_dataset(o.val_data);
    report.add_input(o.data);
    report.add_input(o.val_data);
    TrainHyper h;
    h.epochs = o.epochs;
    h.batch_size = o.batch_size;
    h.adam.lr = o.lr;
    h.final_lr_fraction = o.final_lr_fraction;
    h.patience = o.patience;
    h.seed = common.seed;
    h.deterministic = common.deterministic;
    const TrainResult res = train(model, tr, va, h);
    model = res.model;
    report.results()["val_accuracy"] = res.report.best_val_accuracy;
    std::printf("fine-tuned %d epoch(s): validation accuracy %.6f\n", static_cast<int>(res.report.epochs.size()),
                res.report.best_val_accuracy);
  }
  save_checkpoint(o.out, model);
  report.add_output(o.out);
  report.results()["stage"] = lsq::to_string(model.stage);
  std::printf("wrote %s (stage %s)\n", o.out.c_str(), lsq::to_string(model.stage).c_str());
  report.save("ok");
  return 0;
}

int lower(const Common& common, const LowerOptions& o) {
  apply_jobs(common);
  Report report = start("lower", common);
  const ModelF model = load_checkpoint(o.checkpoint);
  report.add_input(o.checkpoint);
  lowering::LowerOptions lo;
  if (o.theta_mode == "folded")
    lo.theta_mode = lowering::ThetaMode::Folded;
  else if (o.theta_mode == "zero")
    lo.theta_mode = lowering::ThetaMode::Zero;
  else
    throw ValidationError("theta-mode must be folded or zero");
  lo.fold_output = o.fold_output;
  lo.max_expression_literals = o.max_literals;
  const lowering::BooleanProgram program = lowering::lower_model(model, lo);
  for (const auto& w : program.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  print_sparsity(program);
  std::printf("expressions:\n");
  for (const auto& e : program.expressions) std::printf("  L%d.%d = %s\n", e.layer, e.channel, e.formula.c_str());

  const auto eq = lowering::verify_equivalence(program, model, o.trials, o.exhaustive_width, common.seed);
  if (const int rc = report_equivalence(eq, report); rc != 0) return rc;
  lowering::write_program(o.out, program);
  report.add_output(o.out);
  report.results()["layers"] = program.layers.size();
  report.results()["expressions"] = program.expressions.size();
  report.results()["warnings"] = program.warnings;
  std::printf("wrote %s\n", o.out.c_str());
  report.save("ok");
  return 0;
}

int count(const Common& common, const CountOptions& o) {
  apply_jobs(common);
  Report report = start("count", common);
  const opcount::CountOptions co{o.count_dead_indicators};
  opcount::CountReport dense, lw;
  if (o.fixture) {
    ModelConfig cfg;
    cfg.group_size = o.group_size;
    dense = opcount::count_dense(cfg);
    lw = opcount::count_lightweight(opcount::reference_sparsity_fixture(), co);
  } else {
    if (o.input.empty()) throw ValidationError("count needs a checkpoint, a program, or --fixture");
    report.add_input(o.input);
    lowering::BooleanProgram program;
    if (lowering::is_program_file(o.input)) {
      program = lowering::read_program(o.input);
    } else {
      const ModelF model = load_checkpoint(o.input);
      if (model.stage != lsq::QuantStage::Full) {
        dense = opcount::count_dense(model.config);
        std::printf("checkpoint is not fully quantized; dense counts only\n");
        for (const auto& c : dense.components)
          std::printf("%-9s mults %ld adds %ld\n", opcount::component_name(c.component).c_str(), c.counts.mults,
                      c.counts.adds);
        std::printf("%-9s mults %ld adds %ld\n", "total", dense.total.mults, dense.total.adds);
        report.results()["dense_total"] = dense.total.total();
        report.save("ok");
        return 0;
      }
      program = lowering::lower_model(model);
    }
    dense = opcount::count_dense(opcount::layer_shapes(program));
    lw = opcount::count_lightweight(program, co);
  }
  std::fputs((o.csv ? opcount::format_csv(dense, lw) : opcount::format_table(dense, lw)).c_str(), stdout);
  auto counts = [](const opcount::OpCounts& c) {
    return nlohmann::ordered_json{{"mults", c.mults}, {"adds", c.adds}, {"bools", c.bools}, {"indicators", c.indicators}};
  };
  auto& res = report.results();
  for (const auto& c : dense.components) res["dense"][opcount::component_name(c.component)] = counts(c.counts);
  res["dense"]["total"] = counts(dense.total);
  for (const auto& c : lw.components) res["lightweight"][opcount::component_name(c.component)] = counts(c.counts);
  res["lightweight"]["total"] = counts(lw.total);
  res["ratio"] = opcount::ratio(lw, dense);
  report.save("ok");
  return 0;
}

int eval(const Common& common, const EvalOptions& o) {
  apply_jobs(common);
  Report report = start("eval", common);
  const Dataset ds = read_dataset(o.data);
  report.add_input(o.input);
  report.add_input(o.data);
  Confusion c;
  if (lowering::is_program_file(o.input)) {
    c = lowering::evaluate_program(lowering::read_program(o.input), ds, o.threshold);
    report.results()["kind"] = "program";
  } else {
    c = evaluate(load_checkpoint(o.input), ds, o.threshold);
    report.results()["kind"] = "checkpoint";
  }
  report.results()["threshold"] = o.threshold;
  report.results()["confusion"] = confusion_json(c);
  print_confusion(c);
  report.save("ok");
  return 0;
}

int verify(const Common& common, const VerifyOptions& o) {
  apply_jobs(common);
  Report report = start("verify", common);
  const ModelF model = load_checkpoint(o.checkpoint);
  const lowering::BooleanProgram program = lowering::read_program(o.program);
  report.add_input(o.checkpoint);
  report.add_input(o.program);
  const auto eq = lowering::verify_equivalence(program, model, o.trials, o.exhaustive_width, common.seed);
  if (const int rc = report_equivalence(eq, report); rc != 0) return rc;
  report.save("ok");
  return 0;
}

}  // namespace lwnd::cli
