#include "pssl/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace pssl;
namespace fs = std::filesystem;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void add_probe_flags(CLI::App* cmd, eval::ProbeConfig& probe) {
  cmd->add_option("--probe-epochs", probe.epochs, "Linear probe epochs")->capture_default_str();
  cmd->add_option("--probe-batch-size", probe.batch_size, "Linear probe batch size")->capture_default_str();
  cmd->add_option("--probe-lr", probe.lr, "Linear probe learning rate")->capture_default_str();
  cmd->add_option("--probe-weight-decay", probe.weight_decay, "Linear probe weight decay")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic Barlow Twins / VICReg desk laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kVersion));

  // pretrain
  std::string config_path, out_dir;
  bool force = false;
  auto* pretrain = app.add_subcommand("pretrain", "Train an encoder/projector from a config file");
  pretrain->add_option("--config", config_path, "Run config (JSON)")->required();
  pretrain->add_option("--out-dir", out_dir, "Run directory to create")->required();
  pretrain->add_flag("--force", force, "Overwrite an existing run directory");

  // probe
  std::string run_dir;
  cli::ProbeOptions probe_opts;
  bool freeze = false, finetune = false;
  auto* probe = app.add_subcommand("probe", "Linear probe (frozen) or fine-tune on a run");
  probe->add_option("--run-dir", run_dir, "Run directory")->required();
  auto* freeze_flag = probe->add_flag("--freeze", freeze, "Frozen encoder (default)");
  probe->add_flag("--finetune", finetune, "Fine-tune encoder and head jointly")->excludes(freeze_flag);
  probe->add_option("--label-fraction", probe_opts.label_fraction, "Stratified fraction of training labels")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  probe->add_option("--representation-samples", probe_opts.representation_samples,
                    "H-prob.: average this many posterior samples instead of the mean")
      ->capture_default_str();
  probe->add_option("--finetune-epochs", probe_opts.probe.finetune_epochs)->capture_default_str();
  add_probe_flags(probe, probe_opts.probe);

  // ood
  cli::OodOptions ood_opts;
  std::string detectors, out_spec = "builtin";
  auto* ood = app.add_subcommand("ood", "Out-of-distribution scores and AUROC");
  ood->add_option("--run-dir", run_dir, "Run directory")->required();
  ood->add_option("--detectors", detectors, "Comma list (default: all)");
  ood->add_option("--out-spec", out_spec, "Comma list of builtin | shift:<s> | file:<path>")->capture_default_str();
  ood->add_option("--odin-temperature", ood_opts.odin.temperature)->capture_default_str();
  ood->add_option("--odin-epsilon", ood_opts.odin.epsilon)->capture_default_str();
  ood->add_option("--shrinkage", ood_opts.shrinkage, "Mahalanobis covariance shrinkage")->capture_default_str();
  add_probe_flags(ood, ood_opts.probe);

  // mi
  cli::MiOptions mi_opts;
  std::string pairs;
  auto* mi = app.add_subcommand("mi", "MINE estimates for v:h, h:h', h:z, z:z'");
  mi->add_option("--run-dir", run_dir, "Run directory")->required();
  mi->add_option("--pairs", pairs, "Comma list (default: all four)");
  mi->add_option("--steps", mi_opts.mine.steps)->capture_default_str();
  mi->add_option("--batch-size", mi_opts.mine.batch_size)->capture_default_str();
  mi->add_option("--width", mi_opts.mine.width, "Statistic network width")->capture_default_str();
  mi->add_option("--lr", mi_opts.mine.lr)->capture_default_str();
  mi->add_option("--ema-decay", mi_opts.mine.ema_decay)->capture_default_str();

  // ablate
  cli::AblateOptions ab_opts;
  std::vector<std::string> grid;
  std::string seeds = "3";
  bool no_probe = false;
  auto* ablate = app.add_subcommand("ablate", "Grid of runs over config keys and seeds");
  ablate->add_option("--config", config_path, "Base run config")->required();
  ablate->add_option("--out-dir", out_dir, "Directory for the grid")->required();
  ablate->add_option("--grid", grid, "key=v1,v2,... (repeatable)");
  ablate->add_option("--seeds", seeds, "Seed count (1..n) or explicit comma list")->capture_default_str();
  ablate->add_flag("--no-probe", no_probe, "Skip the frozen linear probe per run");
  ablate->add_flag("--force", force, "Overwrite existing run directories");
  add_probe_flags(ablate, ab_opts.probe_config);

  // report
  std::vector<std::string> run_dirs;
  std::string emit = "csv";
  auto* report = app.add_subcommand("report", "Aggregate tables across run directories");
  report->add_option("--run-dirs", run_dirs, "Run directories")->expected(0, -1);
  report->add_option("--out-dir", out_dir, "Where to write the tables")->required();
  report->add_option("--emit", emit, "Output format")->check(CLI::IsMember({"csv"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsage;
  }

  try {
    if (*pretrain) {
      const auto r = cli::cmd_pretrain(config_path, out_dir, force);
      std::cout << "pretrained " << r.train.history.size() << " steps -> " << r.run_dir.string() << "\n";
    } else if (*probe) {
      probe_opts.finetune = finetune;
      const auto r = cli::cmd_probe(run_dir, probe_opts);
      std::cout << "accuracy " << r.result.accuracy << " (" << r.result_dir.string() << ")\n";
    } else if (*ood) {
      for (const auto& d : split_list(detectors)) ood_opts.detectors.push_back(ood::parse_detector(d));
      ood_opts.out_spec = split_list(out_spec);
      for (const auto& row : cli::cmd_ood(run_dir, ood_opts))
        std::cout << row.detector << " " << row.out_dataset << " "
                  << (row.auroc ? std::to_string(*row.auroc) : std::string("N/A")) << "\n";
    } else if (*mi) {
      for (const auto& p : split_list(pairs)) mi_opts.pairs.push_back(mi::parse_pair(p));
      for (const auto& e : cli::cmd_mi(run_dir, mi_opts)) std::cout << e.label << " " << e.value << " nats\n";
    } else if (*ablate) {
      for (const auto& g : grid) ab_opts.grid.push_back(cli::parse_grid_axis(g));
      ab_opts.seeds = cli::parse_seeds(seeds);
      ab_opts.probe = !no_probe;
      ab_opts.force = force;
      const auto rows = cli::cmd_ablate(config_path, out_dir, ab_opts);
      std::cout << rows.size() << " runs -> " << out_dir << "\n";
    } else if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      cli::cmd_report(dirs, out_dir);
      std::cout << "report -> " << out_dir << "\n";
    }
  } catch (...) {
    return cli::exit_code_for_current_exception(std::cerr);
  }
  return cli::kOk;
}
