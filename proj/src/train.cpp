#include "lwnd/train.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <sstream>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "lwnd/rng.hpp"

namespace lwnd {

using lsq::QuantStage;

bool TrainReport::same_result(const TrainReport& o) const {
  if (epochs.size() != o.epochs.size() || best_epoch != o.best_epoch || best_val_accuracy != o.best_val_accuracy)
    return false;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (!epochs[i].same_result(o.epochs[i])) return false;
  return true;
}

std::string TrainReport::to_text() const {
  std::ostringstream os;
  os << "epoch stage   loss      train_acc val_acc   seconds\n";
  for (const auto& e : epochs) {
    char line[160];
    std::snprintf(line, sizeof line, "%5d %-7s %.6f  %.6f  %.6f  %.1f\n", e.epoch, lsq::to_string(e.stage).c_str(),
                  e.loss, e.train_accuracy, e.val_accuracy, e.seconds);
    os << line;
  }
  os << "best_epoch " << best_epoch << " best_val_accuracy " << best_val_accuracy << " wall_seconds " << wall_seconds
     << "\n";
  return os.str();
}

namespace {

// Subnormals flushed to zero while training.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE2__)
    saved_ = _mm_getcsr();
#pragma omp parallel
    _mm_setcsr(_mm_getcsr() | 0x8040);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE2__)
    const unsigned saved = saved_;
#pragma omp parallel
    _mm_setcsr(saved);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

void check_compatible(const ModelF& model, const Dataset& ds, const char* what) {
  if (ds.size() == 0) throw ValidationError(std::string("train: empty ") + what + " set");
  if (ds.group_size != model.config.group_size)
    throw ValidationError(std::string("train: ") + what + " set group size " + std::to_string(ds.group_size) +
                          " does not match model group size " + std::to_string(model.config.group_size));
}

}  // namespace

TrainResult train(ModelF model, const Dataset& train_set, const Dataset& val_set, const TrainHyper& hyper,
                  const std::optional<lsq::QuantSchedule>& schedule, const EpochCallback& on_epoch) {
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");
  const FlushDenormals flush;
  if (train_set.rounds != val_set.rounds) throw ValidationError("train: training and validation rounds differ");
  if (hyper.batch_size < 2) throw ValidationError("train: batch size must be >= 2");

  const int saved_threads = Eigen::nbThreads();
  if (hyper.deterministic) Eigen::setNbThreads(1);

  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result{model, {}};
  const int total_epochs = schedule ? schedule->total_epochs() : hyper.epochs;

  ModelF grads = model.zeros_like();
  std::vector<nn::AdamState<float>> adam;
  auto reset_optimizer = [&] { adam.assign(model.parameters().size(), {}); };
  reset_optimizer();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::span<const Sample> samples(train_set.samples);
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  // Batches shorter than 2 cannot be batch-normalized; drop such a tail.
  const std::size_t n_batches = (order.size() + batch - 1) / batch - ((order.size() % batch) == 1 ? 1 : 0);
  if (n_batches == 0) throw ValidationError("train: training set too small for one batch");

  int since_best = 0;
  int stage_epoch = 0;
  int stage_length = total_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    if (schedule) {
      const QuantStage want = schedule->stage_for_epoch(epoch);
      if (epoch == 0 || want != model.stage) {
        if (want != model.stage) reset_optimizer();
        model.set_stage(want);
        grads = model.zeros_like();
        result.report.best_epoch = -1;
        result.report.best_val_accuracy = 0;
        since_best = 0;
        stage_epoch = 0;
        stage_length = want == QuantStage::FullPrecision ? schedule->warmup_epochs
                       : want == QuantStage::Weights     ? schedule->weight_quant_epochs
                                                         : schedule->act_quant_epochs;
      }
    }
    const bool final_stage = !schedule || model.stage == schedule->stage_for_epoch(total_epochs - 1);

    nn::AdamConfig adam_cfg = hyper.adam;
    if (stage_length > 1) {
      const double frac = static_cast<double>(stage_epoch) / static_cast<double>(stage_length - 1);
      adam_cfg.lr = hyper.adam.lr * (1.0 - frac * (1.0 - hyper.final_lr_fraction));
    }

    SplitMix64 shuffle_rng = SplitMix64::stream(hyper.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    long correct_sum = 0, seen = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t start = bi * batch;
      const std::size_t n = std::min(batch, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, n);
      const auto x = make_input<float>(samples, idx);
      std::vector<int> labels(n);
      for (std::size_t k = 0; k < n; ++k) labels[k] = samples[idx[k]].label == Label::Real ? 1 : 0;
      int correct = 0;
      const float loss = model.loss_and_gradients(x, labels, grads, &correct, hyper.step_size_grad_scale);
      loss_sum += static_cast<double>(loss) * static_cast<double>(n);
      correct_sum += correct;
      seen += static_cast<long>(n);

      auto params = model.parameters();
      auto gparams = grads.parameters();
      const bool quantized = model.stage != QuantStage::FullPrecision;
      for (std::size_t p = 0; p < params.size(); ++p) {
        const bool is_delta = params[p].name.ends_with(".delta");
        if (is_delta && !quantized) continue;
        auto target = params[p].map();
        nn::adam_step(target, gparams[p].map(), adam[p], adam_cfg, params[p].decay);
        if (is_delta) *params[p].data = lsq::project_step_size(*params[p].data);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = model.stage;
    rec.loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct_sum) / static_cast<double>(seen);
    rec.val_accuracy = evaluate(model, val_set).accuracy();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (result.report.best_epoch < 0 || rec.val_accuracy > result.report.best_val_accuracy) {
      result.report.best_epoch = epoch;
      result.report.best_val_accuracy = rec.val_accuracy;
      result.model = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    ++stage_epoch;
    if (final_stage && hyper.patience > 0 && since_best >= hyper.patience) break;
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (hyper.deterministic) Eigen::setNbThreads(saved_threads);
  return result;
}

}  // namespace lwnd
