#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lwnd::cli {

/// Options every command accepts.
struct Common {
  std::uint64_t seed = 1;
  int jobs = 0;  // 0 = library default
  bool deterministic = false;
  std::string report;
  std::string resolved_config;  // filled in after parsing
};

struct GenDataOptions {
  int rounds = 6;
  long n_per_class = 100000;
  int group_size = 8;
  std::string delta = "0040/0000";
  std::string out;
};

struct TrainOptions {
  std::string data, val_data, out;
  std::string init;  // optional checkpoint to continue from
  std::string quant_stage = "fp";
  int repeats = 1;
  int epochs = 20;
  int batch_size = 512;
  double lr = 1e-3;
  double final_lr_fraction = 1.0;
  double weight_decay = 1e-5;
  int patience = 5;
  std::vector<int> schedule;  // epochs per stage; overrides --epochs
  int channels = 32;
  int blocks = 1;
  std::vector<int> dense{64, 64};
  std::string head_activation = "relu";
  double threshold = 0.505;
};

struct QuantizeOptions {
  std::string checkpoint, out, stage = "full";
  std::string data, val_data;
  int epochs = 0;
  int batch_size = 512;
  double lr = 1e-3;
  double final_lr_fraction = 1.0;
  int patience = 0;
};

struct LowerOptions {
  std::string checkpoint, out;
  std::string theta_mode = "folded";
  bool fold_output = true;
  long trials = 10000;
  int exhaustive_width = 10;
  int max_literals = 8;
};

struct CountOptions {
  std::string input;
  bool fixture = false;
  bool count_dead_indicators = false;
  bool csv = false;
  int group_size = 8;  // architecture used with --fixture
};

struct EvalOptions {
  std::string input, data;
  double threshold = 0.505;
};

struct VerifyOptions {
  std::string checkpoint, program;
  long trials = 10000;
  int exhaustive_width = 10;
};

int gen_data(const Common& common, const GenDataOptions& o);
int train(const Common& common, const TrainOptions& o);
int quantize(const Common& common, const QuantizeOptions& o);
int lower(const Common& common, const LowerOptions& o);
int count(const Common& common, const CountOptions& o);
int eval(const Common& common, const EvalOptions& o);
int verify(const Common& common, const VerifyOptions& o);

}  // namespace lwnd::cli
