#pragma once

// Run configuration and its JSON schema. One document fully determines a run.

#include "pssl/data.hpp"
#include "pssl/gaussdist.hpp"
#include "pssl/models.hpp"
#include "pssl/objectives.hpp"
#include "pssl/optim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pssl {

inline constexpr int kSchemaVersion = 1;

enum class DataKind { synthetic, cifar };

struct DataConfig {
  DataKind kind = DataKind::synthetic;
  std::uint64_t seed = 0;  // dataset draw; kept apart from the run seed so seeds share data
  data::SyntheticSpec synthetic;
  std::vector<std::string> train_files;
  std::string test_file;
  std::string ood_file;
};

struct OptimizerConfig {
  double lr_peak = 1e-3;
  double lr_final = 5e-4;
  optim::AdamConfig adam;
};

struct ScheduleConfig {
  int epochs = 20;
  int warmup_epochs = 2;
  int batch_size = 128;
};

struct RunConfig {
  Method method = Method::vicreg;
  Variant variant = Variant::deterministic;
  gauss::PriorConfig prior;
  objectives::LossCoefficients loss;
  int mc_samples = 1;  // K
  models::ModelConfig model;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  DataConfig data;
  data::AugmentSpec augment;
  std::uint64_t seed = 1;

  // Throws ConfigError listing every offending key.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Unknown keys, wrong types and out-of-range values are all collected before
// throwing. "seed" is mandatory; every other key falls back to its default.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// Sets one value by dotted path ("loss.beta", "seed", ...) from its text form.
// Used by the ablation grid.
void set_config_value(nlohmann::json& doc, const std::string& dotted_key, const std::string& text);

}  // namespace pssl
