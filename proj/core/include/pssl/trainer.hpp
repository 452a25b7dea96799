#pragma once

#include "pssl/config.hpp"
#include "pssl/csv.hpp"
#include "pssl/data.hpp"
#include "pssl/models.hpp"
#include "pssl/objectives.hpp"
#include "pssl/optim.hpp"
#include "pssl/params.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace pssl::train {

struct MetricsRow {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  objectives::LossBreakdown loss;
  // Batch statistics of sigma over both views; NaN for deterministic runs.
  double mean_sigma = 0.0;
  double std_sigma = 0.0;
};

struct TrainResult {
  ParamStore params;
  optim::AdamState opt;
  std::vector<MetricsRow> history;
};

// Called after every optimizer step.
using StepCallback = std::function<void(const MetricsRow&, const ParamStore&)>;

data::Dataset load_dataset(const RunConfig& config);
models::Model make_model(const RunConfig& config);
// Batches per epoch; the tail that does not fill a batch is dropped.
long steps_per_epoch(const RunConfig& config, Index train_rows);

// Throws NumericError naming the first non-finite loss term.
TrainResult train(const RunConfig& config, const data::Dataset& dataset, const StepCallback& on_step = {});

csv::Table metrics_table(const std::vector<MetricsRow>& history);

// Parameters as f32 under their own names, optimizer moments as f64 under
// "opt.m.<name>" / "opt.v.<name>"; the config rides in the manifest metadata.
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const ParamStore& params,
                     const optim::AdamState& opt);

struct LoadedRun {
  RunConfig config;
  ParamStore params;
  optim::AdamState opt;
};

LoadedRun load_checkpoint(const std::filesystem::path& dir);

}  // namespace pssl::train
