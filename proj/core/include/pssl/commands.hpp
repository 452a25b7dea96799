#pragma once

// Run-directory commands behind the pssl executable.
//
// Layout of a run directory:
//   manifest.json   config snapshot, seed, timestamps, file inventory with checksums
//   config.json     the validated config
//   metrics.csv     per-step training metrics
//   checkpoint.json / checkpoint.bin
//   results/        one subfolder per evaluation command

#include "pssl/config.hpp"
#include "pssl/evalprobe.hpp"
#include "pssl/mi.hpp"
#include "pssl/ood.hpp"
#include "pssl/trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pssl::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

inline constexpr const char* kVersion = "0.1.0";

// Maps the active exception to an exit code and prints a one-line diagnostic.
int exit_code_for_current_exception(std::ostream& err);

// Holds <dir>/.lock for its lifetime; throws IoError if already held.
class RunLock {
 public:
  explicit RunLock(fs::path dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

std::string checksum_file(const fs::path& path);

// Rewrites manifest.json with the current file inventory.
void write_manifest(const fs::path& run_dir, const RunConfig& config, const std::string& status);

struct PretrainResult {
  fs::path run_dir;
  train::TrainResult train;
};

PretrainResult cmd_pretrain(const fs::path& config_path, const fs::path& out_dir, bool force = false);
PretrainResult pretrain_config(const RunConfig& config, const fs::path& out_dir, bool force = false);

struct ProbeOptions {
  bool finetune = false;
  double label_fraction = 1.0;
  int representation_samples = 0;  // hprob only; 0 uses the posterior mean
  eval::ProbeConfig probe;
};

struct ProbeOutcome {
  eval::ProbeResult result;
  std::size_t train_size = 0;
  fs::path result_dir;
};

// Writes results/probe-<freeze|finetune>-<fraction>/ with probe_result.csv,
// per_class.csv, curve.csv and, for stochastic runs, sigma_by_correctness.csv.
ProbeOutcome cmd_probe(const fs::path& run_dir, const ProbeOptions& options = {});

struct OodOptions {
  std::vector<ood::Detector> detectors;  // empty: all
  // Entries: "builtin" (the dataset's OOD split), "shift:<s>" (synthetic OOD
  // regenerated at shift s), "file:<path>" (image records).
  std::vector<std::string> out_spec{"builtin"};
  ood::OdinConfig odin;
  double shrinkage = ood::kDefaultShrinkage;
  eval::ProbeConfig probe;
};

struct AurocRow {
  std::string detector;
  std::string out_dataset;
  std::optional<double> auroc;  // empty for N/A
};

// Writes results/ood/auroc.csv and results/ood/scores_<out>.csv.
std::vector<AurocRow> cmd_ood(const fs::path& run_dir, const OodOptions& options = {});

struct MiOptions {
  std::vector<mi::Pair> pairs;  // empty: all four
  mi::MineConfig mine;
};

// Writes results/mi/curve.csv and results/mi/summary.csv.
std::vector<mi::MIEstimate> cmd_mi(const fs::path& run_dir, const MiOptions& options = {});

struct GridAxis {
  std::string name;  // as written on the command line
  std::string key;   // dotted path after alias resolution
  std::vector<std::string> values;
};

// "beta=1e-4,1e-3" -> {loss.beta, [...]}. Aliases: beta, K, prior, variant, method.
GridAxis parse_grid_axis(const std::string& text);
// "3" -> {1,2,3}; "4,7" -> {4,7}.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

struct AblateOptions {
  std::vector<GridAxis> grid;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool probe = true;
  eval::ProbeConfig probe_config;
  bool force = false;
};

struct AblateRow {
  std::map<std::string, std::string> keys;
  std::uint64_t seed = 0;
  fs::path run_dir;
  double final_loss = 0.0;
  double final_mean_sigma = 0.0;
  std::optional<double> accuracy;
};

// One run per grid point and seed; writes <out>/ablation.csv and <out>/summary.csv.
std::vector<AblateRow> cmd_ablate(const fs::path& base_config, const fs::path& out_dir, const AblateOptions& options);

struct SummaryStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
  std::size_t count = 0;
};
SummaryStat summarize(const std::vector<double>& values);

// Writes runs.csv, sigma_density.csv and mi_vs_loss.csv under out_dir.
void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir);

}  // namespace pssl::cli
