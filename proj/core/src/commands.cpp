#include "pssl/commands.hpp"

#include "pssl/checkpoint.hpp"
#include "pssl/csv.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <chrono>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace pssl::cli {

using nlohmann::json;

namespace {

const char* const kManifest = "manifest.json";
const char* const kConfigSnapshot = "config.json";
const char* const kMetrics = "metrics.csv";
const char* const kLock = ".lock";

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_own_artifact(const fs::path& name) {
  const std::string s = name.filename().string();
  return s == kManifest || s == kConfigSnapshot || s == kMetrics || s == ckpt::kManifestName ||
         s == ckpt::kBlobName || s == "results";
}

void prepare_out_dir(const fs::path& dir, bool force) {
  std::vector<fs::path> existing;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != kLock) existing.push_back(e.path());
  if (existing.empty()) return;
  if (!force) throw IoError(dir.string() + " is not empty (pass --force to overwrite)");
  for (const auto& p : existing)
    if (is_own_artifact(p)) fs::remove_all(p);
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '=') ? c : '_';
  return out;
}

struct Loaded {
  train::LoadedRun run;
  models::Model model;
  data::Dataset dataset;
};

Loaded load(const fs::path& run_dir) {
  train::LoadedRun run = train::load_checkpoint(run_dir);
  models::Model model = train::make_model(run.config);
  data::Dataset dataset = train::load_dataset(run.config);
  return Loaded{std::move(run), std::move(model), std::move(dataset)};
}

std::string fmt_opt(const std::optional<double>& v) { return v ? csv::format(*v) : "NA"; }

}  // namespace

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const json::exception& e) {
    err << "error: malformed document: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

RunLock::RunLock(fs::path dir) : path_(std::move(dir) / kLock) {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    if (errno == EEXIST) throw IoError("run directory is locked by another writer (" + path_.string() + ")");
    throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string checksum_file(const fs::path& path) {
  const std::string bytes = read_text(path);
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

void write_manifest(const fs::path& run_dir, const RunConfig& config, const std::string& status) {
  json m;
  std::string created = utc_now();
  if (fs::exists(run_dir / kManifest)) {
    try {
      const json old = json::parse(read_text(run_dir / kManifest));
      created = old.value("created_at", created);
    } catch (const json::exception&) {
    }
  }
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), run_dir);
    const std::string name = rel.generic_string();
    if (name == kManifest || name == kLock || e.path().extension() == ".tmp") continue;
    files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  json inventory = json::array();
  for (const auto& f : files)
    inventory.push_back({{"path", f}, {"bytes", fs::file_size(run_dir / f)}, {"crc32", checksum_file(run_dir / f)}});

  m["format"] = "pssl-run";
  m["schema_version"] = kSchemaVersion;
  m["code_version"] = kVersion;
  m["seed"] = config.seed;
  m["status"] = status;
  m["created_at"] = created;
  m["updated_at"] = utc_now();
  m["config"] = to_json(config);
  m["files"] = inventory;
  csv::write_file_atomic(run_dir / kManifest, m.dump(2) + "\n");
}

PretrainResult cmd_pretrain(const fs::path& config_path, const fs::path& out_dir, bool force) {
  return pretrain_config(load_run_config(config_path), out_dir, force);
}

PretrainResult pretrain_config(const RunConfig& config, const fs::path& out_dir, bool force) {
  config.validate();
  fs::create_directories(out_dir);
  RunLock lock(out_dir);
  prepare_out_dir(out_dir, force);

  csv::write_file_atomic(out_dir / kConfigSnapshot, to_json(config).dump(2) + "\n");
  write_manifest(out_dir, config, "running");

  PretrainResult out;
  out.run_dir = out_dir;
  try {
    const data::Dataset dataset = train::load_dataset(config);
    out.train = train::train(config, dataset);
  } catch (const NumericError& e) {
    write_manifest(out_dir, config, std::string("failed: ") + e.what());
    throw;
  }
  train::metrics_table(out.train.history).write(out_dir / kMetrics);
  train::save_checkpoint(out_dir, config, out.train.params, out.train.opt);
  write_manifest(out_dir, config, "complete");
  return out;
}

ProbeOutcome cmd_probe(const fs::path& run_dir, const ProbeOptions& options) {
  RunLock lock(run_dir);
  Loaded L = load(run_dir);
  const RunConfig& cfg = L.run.config;
  eval::ProbeConfig pc = options.probe;
  pc.seed = cfg.seed;
  pc.validate();
  require(options.label_fraction > 0.0 && options.label_fraction <= 1.0, "--label-fraction must be in (0, 1]");
  const auto& D = L.dataset;

  std::vector<std::size_t> subset;
  if (options.label_fraction < 1.0) {
    subset = data::stratified_subset(D.train_y, D.num_classes, options.label_fraction, cfg.seed);
  } else {
    subset.resize(D.train_y.size());
    for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
  }
  const Matrix train_x = data::gather_rows(D.train_x, subset);
  const std::vector<int> train_y = data::gather(D.train_y, subset);

  ProbeOutcome out;
  out.train_size = subset.size();
  const eval::RepresentationOptions rep{options.representation_samples, cfg.seed};
  if (options.finetune) {
    out.result = eval::finetune(L.model, L.run.params, train_x, train_y, D.test_x, D.test_y, D.num_classes, pc);
  } else {
    const Matrix ftr = eval::extract_representation(L.model, L.run.params, train_x, cfg.variant, rep);
    const Matrix fte = eval::extract_representation(L.model, L.run.params, D.test_x, cfg.variant, rep);
    out.result = eval::train_probe(ftr, train_y, fte, D.test_y, D.num_classes, pc);
  }

  const std::string mode = options.finetune ? "finetune" : "freeze";
  out.result_dir = run_dir / "results" / ("probe-" + mode + "-" + csv::format(options.label_fraction));
  fs::create_directories(out.result_dir);

  csv::Table summary({"mode", "label_fraction", "train_size", "test_size", "accuracy", "seed"});
  summary.add({mode, csv::format(options.label_fraction), csv::format(out.train_size), csv::format(D.test_y.size()),
               csv::format(out.result.accuracy), std::to_string(cfg.seed)});
  summary.write(out.result_dir / "probe_result.csv");

  csv::Table per_class({"class", "count", "accuracy"});
  for (std::size_t c = 0; c < out.result.per_class.size(); ++c)
    per_class.add({csv::format(c), csv::format(static_cast<long>(out.result.class_counts[c])),
                   csv::format(out.result.per_class[c])});
  per_class.write(out.result_dir / "per_class.csv");

  csv::Table curve({"epoch", "loss"});
  for (std::size_t e = 0; e < out.result.curve.size(); ++e) curve.add({csv::format(e), csv::format(out.result.curve[e])});
  curve.write(out.result_dir / "curve.csv");

  if (is_stochastic(cfg.variant)) {
    const eval::Embeddings emb = eval::embed(L.model, L.run.params, D.test_x);
    const auto pred = out.result.head.predict(eval::l2_normalize(emb.h));
    const eval::SigmaPartition part = eval::sigma_by_correctness(emb.stochastic_dist()->sigma, pred, D.test_y);
    csv::Table table({"sample_id", "label", "prediction", "correct", "mean_sigma"});
    for (const auto& r : part.table)
      table.add({csv::format(static_cast<long>(r.sample)), csv::format(r.label), csv::format(r.prediction),
                 r.correct ? "1" : "0", csv::format(r.mean_sigma)});
    table.write(out.result_dir / "sigma_by_correctness.csv");
    csv::Table s({"partition", "count", "mean_sigma", "empty"});
    s.add({"correct", csv::format(static_cast<long>(part.count_correct)), fmt_opt(part.mean_correct),
           part.mean_correct ? "0" : "1"});
    s.add({"incorrect", csv::format(static_cast<long>(part.count_incorrect)), fmt_opt(part.mean_incorrect),
           part.mean_incorrect ? "0" : "1"});
    s.write(out.result_dir / "sigma_summary.csv");
  }
  write_manifest(run_dir, cfg, "complete");
  return out;
}

std::vector<AurocRow> cmd_ood(const fs::path& run_dir, const OodOptions& options) {
  RunLock lock(run_dir);
  Loaded L = load(run_dir);
  const RunConfig& cfg = L.run.config;
  const auto& D = L.dataset;
  const std::vector<ood::Detector> detectors = options.detectors.empty() ? ood::all_detectors() : options.detectors;
  require(!options.out_spec.empty(), "--out-spec must name at least one OUT dataset");
  const bool stochastic = is_stochastic(cfg.variant);

  eval::ProbeConfig pc = options.probe;
  pc.seed = cfg.seed;
  const eval::Embeddings train_emb = eval::embed(L.model, L.run.params, D.train_x);
  const eval::Embeddings in_emb = eval::embed(L.model, L.run.params, D.test_x);
  const eval::ProbeResult probe = eval::train_probe(train_emb.h, D.train_y, in_emb.h, D.test_y, D.num_classes, pc);
  const ood::MahalanobisFit fit = ood::mahalanobis_fit(train_emb.h, options.shrinkage);

  const auto odin_chunked = [&](const Matrix& x) {
    Vector s(x.rows());
    for (Index start = 0; start < x.rows(); start += 256) {
      const Index rows = std::min<Index>(256, x.rows() - start);
      s.segment(start, rows) = ood::odin_score(L.model, L.run.params, probe.head, x.middleRows(start, rows), options.odin);
    }
    return s;
  };
  const auto scores = [&](ood::Detector d, const Matrix& x, const eval::Embeddings& e) -> Vector {
    switch (d) {
      case ood::Detector::sigma_mean: return ood::sigma_mean_score(*e.stochastic_dist());
      case ood::Detector::sigma_std: return ood::sigma_std_score(*e.stochastic_dist());
      case ood::Detector::mahalanobis: return ood::mahalanobis_score(fit, e.h);
      case ood::Detector::max_softmax: return ood::max_softmax_score(probe.head.logits(eval::l2_normalize(e.h)));
      case ood::Detector::entropy: return ood::entropy_score(probe.head.logits(eval::l2_normalize(e.h)));
      case ood::Detector::odin: return odin_chunked(x);
    }
    return {};
  };

  std::map<ood::Detector, Vector> in_scores;
  for (auto d : detectors)
    if (stochastic || !ood::needs_sigma(d)) in_scores[d] = scores(d, D.test_x, in_emb);

  const fs::path dir = run_dir / "results" / "ood";
  fs::create_directories(dir);
  std::vector<AurocRow> rows;
  csv::Table summary({"detector", "out_dataset", "auroc", "seed"});
  for (const std::string& spec : options.out_spec) {
    Matrix out_x;
    std::string name;
    if (spec == "builtin") {
      out_x = D.ood_x;
      name = "builtin";
    } else if (spec.rfind("shift:", 0) == 0) {
      if (cfg.data.kind != DataKind::synthetic) throw InvalidArgument("--out-spec shift: needs a synthetic dataset");
      data::SyntheticSpec s = cfg.data.synthetic;
      s.ood_shift = std::stod(spec.substr(6));
      out_x = data::synth_multiview_dataset(s, cfg.data.seed).ood_x;
      name = "shift-" + spec.substr(6);
    } else if (spec.rfind("file:", 0) == 0) {
      out_x = data::read_cifar_records(spec.substr(5)).first;
      name = fs::path(spec.substr(5)).stem().string();
    } else {
      throw InvalidArgument("unknown --out-spec entry '" + spec + "'");
    }
    if (out_x.rows() == 0) throw InvalidArgument("OUT dataset '" + spec + "' is empty");
    require(out_x.cols() == D.test_x.cols(), "OUT dataset '" + spec + "' has the wrong width");
    name = sanitize(name);
    const eval::Embeddings out_emb = eval::embed(L.model, L.run.params, out_x);

    csv::Table table({"sample_id", "detector", "score", "split"});
    for (auto d : detectors) {
      AurocRow row{ood::to_string(d), name, std::nullopt};
      if (in_scores.count(d)) {
        const Vector& si = in_scores.at(d);
        const Vector so = scores(d, out_x, out_emb);
        row.auroc = ood::auroc(si, so);
        for (Index i = 0; i < si.size(); ++i) table.add({csv::format(static_cast<long>(i)), row.detector, csv::format(si(i)), "in"});
        for (Index i = 0; i < so.size(); ++i) table.add({csv::format(static_cast<long>(i)), row.detector, csv::format(so(i)), "out"});
      }
      summary.add({row.detector, name, row.auroc ? csv::format(*row.auroc) : "N/A", std::to_string(cfg.seed)});
      rows.push_back(row);
    }
    table.write(dir / ("scores_" + name + ".csv"));
  }
  summary.write(dir / "auroc.csv");
  write_manifest(run_dir, cfg, "complete");
  return rows;
}

std::vector<mi::MIEstimate> cmd_mi(const fs::path& run_dir, const MiOptions& options) {
  RunLock lock(run_dir);
  Loaded L = load(run_dir);
  const RunConfig& cfg = L.run.config;
  const std::vector<mi::Pair> pairs = options.pairs.empty() ? mi::all_pairs() : options.pairs;
  const long train_step = L.run.opt.step - 1;

  std::vector<mi::MIEstimate> out;
  csv::Table curve({"pair", "step", "bound_value"});
  csv::Table summary({"pair", "estimate", "window", "steps", "train_step", "seed"});
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    mi::MineConfig mc = options.mine;
    mc.seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(pairs[p]), 0x6d69ULL});
    const auto [xd, yd] = mi::pair_dims(L.model, pairs[p]);
    const mi::PairSource source = mi::probe_pairs(L.model, L.run.params, L.dataset.train_x, cfg.augment, pairs[p],
                                                  L.dataset.is_image, L.dataset.image);
    mi::MIEstimate est = mi::mine_train(source, xd, yd, mc, mi::to_string(pairs[p]));
    for (std::size_t s = 0; s < est.curve.size(); ++s) curve.add({est.label, csv::format(s), csv::format(est.curve[s])});
    summary.add({est.label, csv::format(est.value), csv::format(est.window), csv::format(mc.steps),
                 csv::format(train_step), std::to_string(cfg.seed)});
    out.push_back(std::move(est));
  }
  const fs::path dir = run_dir / "results" / "mi";
  fs::create_directories(dir);
  curve.write(dir / "curve.csv");
  summary.write(dir / "summary.csv");
  write_manifest(run_dir, cfg, "complete");
  return out;
}

GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= text.size())
    throw InvalidArgument("--grid expects key=v1,v2,... (got '" + text + "')");
  GridAxis axis;
  axis.name = text.substr(0, eq);
  static const std::map<std::string, std::string> aliases{
      {"beta", "loss.beta"}, {"K", "loss.mc_samples"}, {"mc_samples", "loss.mc_samples"},
      {"prior", "prior.kind"}, {"variant", "variant"}, {"method", "method"}};
  const auto it = aliases.find(axis.name);
  axis.key = it != aliases.end() ? it->second : axis.name;
  std::stringstream ss(text.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ','))
    if (!v.empty()) axis.values.push_back(v);
  if (axis.values.empty()) throw InvalidArgument("--grid " + axis.name + " has no values");
  return axis;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (text.find(',') == std::string::npos) {
    const long n = std::stol(text);
    if (n < 1) throw InvalidArgument("--seeds count must be >= 1");
    for (long i = 1; i <= n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    return seeds;
  }
  std::stringstream ss(text);
  std::string v;
  while (std::getline(ss, v, ','))
    if (!v.empty()) seeds.push_back(std::stoull(v));
  if (seeds.empty()) throw InvalidArgument("--seeds is empty");
  return seeds;
}

SummaryStat summarize(const std::vector<double>& values) {
  SummaryStat s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  for (double v : values) s.mean += v;
  s.mean /= double(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / double(values.size() - 1));
  }
  return s;
}

std::vector<AblateRow> cmd_ablate(const fs::path& base_config, const fs::path& out_dir, const AblateOptions& options) {
  json base;
  {
    std::ifstream in(base_config);
    if (!in) throw IoError("cannot open config " + base_config.string());
    try {
      base = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError({std::string("<parse error: ") + e.what() + ">"});
    }
  }
  require(!options.seeds.empty(), "ablate: no seeds");

  // Expand and validate every grid point before running any of them.
  struct Point {
    std::map<std::string, std::string> keys;
    std::uint64_t seed;
    RunConfig config;
    std::string dir_name;
  };
  std::vector<Point> points;
  std::vector<std::size_t> idx(options.grid.size(), 0);
  while (true) {
    for (std::uint64_t seed : options.seeds) {
      json doc = base;
      Point p;
      std::string name;
      for (std::size_t a = 0; a < options.grid.size(); ++a) {
        const auto& axis = options.grid[a];
        set_config_value(doc, axis.key, axis.values[idx[a]]);
        p.keys[axis.name] = axis.values[idx[a]];
        name += sanitize(axis.name + "=" + axis.values[idx[a]]) + "_";
      }
      doc["seed"] = seed;
      p.seed = seed;
      p.config = run_config_from_json(doc);
      p.dir_name = name + "seed=" + std::to_string(seed);
      points.push_back(std::move(p));
    }
    std::size_t a = 0;
    for (; a < idx.size(); ++a) {
      if (++idx[a] < options.grid[a].values.size()) break;
      idx[a] = 0;
    }
    if (a == idx.size()) break;
  }

  fs::create_directories(out_dir);
  std::vector<AblateRow> rows;
  for (const Point& p : points) {
    AblateRow row;
    row.keys = p.keys;
    row.seed = p.seed;
    row.run_dir = out_dir / p.dir_name;
    const PretrainResult pr = pretrain_config(p.config, row.run_dir, options.force);
    row.final_loss = pr.train.history.back().loss.total;
    row.final_mean_sigma = pr.train.history.back().mean_sigma;
    if (options.probe) {
      ProbeOptions po;
      po.probe = options.probe_config;
      row.accuracy = cmd_probe(row.run_dir, po).result.accuracy;
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::string> names;
  for (const auto& axis : options.grid) names.push_back(axis.name);
  std::vector<std::string> header = names;
  for (const char* h : {"seed", "run_dir", "final_loss_total", "final_mean_sigma", "probe_accuracy"}) header.push_back(h);
  csv::Table table(header);
  for (const auto& r : rows) {
    std::vector<std::string> cells;
    for (const auto& n : names) cells.push_back(r.keys.at(n));
    cells.push_back(std::to_string(r.seed));
    cells.push_back(fs::relative(r.run_dir, out_dir).generic_string());
    cells.push_back(csv::format(r.final_loss));
    cells.push_back(csv::format(r.final_mean_sigma));
    cells.push_back(fmt_opt(r.accuracy));
    table.add(std::move(cells));
  }
  table.write(out_dir / "ablation.csv");

  std::vector<std::string> sheader = names;
  for (const char* h : {"runs", "accuracy_mean", "accuracy_std", "mean_sigma_mean", "mean_sigma_std", "loss_mean",
                        "loss_std"})
    sheader.push_back(h);
  csv::Table summary(sheader);
  std::vector<std::map<std::string, std::string>> groups;
  for (const auto& r : rows)
    if (std::find(groups.begin(), groups.end(), r.keys) == groups.end()) groups.push_back(r.keys);
  for (const auto& g : groups) {
    std::vector<double> acc, sig, loss;
    for (const auto& r : rows) {
      if (r.keys != g) continue;
      if (r.accuracy) acc.push_back(*r.accuracy);
      if (!std::isnan(r.final_mean_sigma)) sig.push_back(r.final_mean_sigma);
      loss.push_back(r.final_loss);
    }
    const SummaryStat a = summarize(acc), s = summarize(sig), l = summarize(loss);
    std::vector<std::string> cells;
    for (const auto& n : names) cells.push_back(g.at(n));
    cells.push_back(csv::format(l.count));
    for (const auto& st : {a, s, l}) {
      cells.push_back(csv::format(st.mean));
      cells.push_back(st.count ? csv::format(st.std) : "NA");
    }
    summary.add(std::move(cells));
  }
  summary.write(out_dir / "summary.csv");
  return rows;
}

void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw InvalidArgument("report: no run directories given");
  fs::create_directories(out_dir);
  csv::Table runs({"run", "method", "variant", "prior", "beta", "mc_samples", "seed", "steps", "final_loss_total",
                   "final_mean_sigma", "probe_accuracy"});
  csv::Table density({"run", "sample_id", "split", "mean_sigma"});
  csv::Table mi_loss({"run", "step", "pair", "mi_estimate", "loss_total"});

  for (const auto& dir : run_dirs) {
    const std::string label = dir.lexically_normal().generic_string();
    Loaded L = load(dir);
    const RunConfig& cfg = L.run.config;
    const csv::Table metrics = csv::read(dir / kMetrics);
    if (metrics.rows().empty()) throw IoError(label + ": metrics.csv has no rows");
    const auto col = [&](const csv::Table& t, const std::string& name) {
      const auto& h = t.header();
      const auto it = std::find(h.begin(), h.end(), name);
      if (it == h.end()) throw IoError(label + ": missing column " + name);
      return static_cast<std::size_t>(it - h.begin());
    };
    const auto& last = metrics.rows().back();
    std::string accuracy = "NA";
    const fs::path probe_csv = dir / "results" / "probe-freeze-1" / "probe_result.csv";
    if (fs::exists(probe_csv)) {
      const csv::Table p = csv::read(probe_csv);
      if (!p.rows().empty()) accuracy = p.rows().front()[col(p, "accuracy")];
    }
    runs.add({label, to_string(cfg.method), to_string(cfg.variant), to_string(cfg.prior.kind), csv::format(cfg.loss.beta),
              csv::format(cfg.mc_samples), std::to_string(cfg.seed), csv::format(metrics.rows().size()),
              last[col(metrics, "loss_total")], last[col(metrics, "mean_sigma")], accuracy});

    if (is_stochastic(cfg.variant)) {
      const auto add_split = [&](const Matrix& x, const char* split) {
        if (x.rows() == 0) return;
        const eval::Embeddings e = eval::embed(L.model, L.run.params, x);
        const Vector s = ood::sigma_mean_score(*e.stochastic_dist());
        for (Index i = 0; i < s.size(); ++i) density.add({label, csv::format(static_cast<long>(i)), split, csv::format(s(i))});
      };
      add_split(L.dataset.test_x, "in");
      add_split(L.dataset.ood_x, "out");
    }

    const fs::path mi_csv = dir / "results" / "mi" / "summary.csv";
    if (fs::exists(mi_csv)) {
      const csv::Table m = csv::read(mi_csv);
      for (const auto& r : m.rows()) {
        const std::string& step = r[col(m, "train_step")];
        for (const auto& mr : metrics.rows())
          if (mr[col(metrics, "step")] == step) mi_loss.add({label, step, r[col(m, "pair")], r[col(m, "estimate")], mr[col(metrics, "loss_total")]});
      }
    }
  }
  runs.write(out_dir / "runs.csv");
  density.write(out_dir / "sigma_density.csv");
  mi_loss.write(out_dir / "mi_vs_loss.csv");
}

}  // namespace pssl::cli
