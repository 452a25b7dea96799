#include "pssl/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pssl {

namespace {

using nlohmann::json;

std::string to_string(DataKind k) { return k == DataKind::synthetic ? "synthetic" : "cifar"; }

// Walks one JSON object, recording every problem under its dotted key.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& bad)
      : obj_(obj), prefix_(std::move(prefix)), bad_(bad) {
    if (!obj_.is_object()) {
      bad_.push_back(prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1));
      ok_ = false;
    }
  }
  ~Reader() {
    if (!ok_) return;
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) bad_.push_back(prefix_ + key);
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return ok_ && obj_.contains(key);
  }
  std::string key(const std::string& k) const { return prefix_ + k; }
  void fail(const std::string& k) { bad_.push_back(prefix_ + k); }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    const json& v = obj_.at(k);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::exception();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::exception();
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) throw std::exception();
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::exception();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::exception();
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      fail(k);
    }
  }

  template <class E>
  void get_enum(const std::string& k, E& out, E (*parse)(const std::string&)) {
    if (!has(k)) return;
    if (!obj_.at(k).is_string()) return fail(k);
    try {
      out = parse(obj_.at(k).get<std::string>());
    } catch (const std::exception&) {
      fail(k);
    }
  }

  const json* child(const std::string& k) {
    if (!has(k)) return nullptr;
    return &obj_.at(k);
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& bad_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

DataKind parse_data_kind(const std::string& s) {
  if (s == "synthetic") return DataKind::synthetic;
  if (s == "cifar") return DataKind::cifar;
  throw InvalidArgument("unknown data kind '" + s + "'");
}

void prefixed(std::vector<std::string>& bad, const std::string& prefix, const std::vector<std::string>& keys) {
  for (const auto& k : keys) bad.push_back(prefix + k);
}

std::vector<std::string> config_problems(const RunConfig& c) {
  std::vector<std::string> bad;
  const auto& L = c.loss;
  if (!(L.lambda_bt >= 0.0)) bad.push_back("loss.lambda_bt");
  if (!(L.alpha >= 0.0)) bad.push_back("loss.alpha");
  if (!(L.tau >= 0.0)) bad.push_back("loss.tau");
  if (!(L.nu >= 0.0)) bad.push_back("loss.nu");
  if (!(L.gamma > 0.0)) bad.push_back("loss.gamma");
  if (!(L.beta >= 0.0)) bad.push_back("loss.beta");
  if (!(L.var_eps >= 0.0)) bad.push_back("loss.var_eps");
  if (!(L.corr_eps >= 0.0)) bad.push_back("loss.corr_eps");
  if (c.mc_samples < 1) bad.push_back("loss.mc_samples");
  if (c.prior.components < 1) bad.push_back("prior.components");
  if (!(c.prior.init_mean_std >= 0.0)) bad.push_back("prior.init_mean_std");

  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.keys().begin(), e.keys().end());
  }

  const auto& O = c.optimizer;
  if (!(O.lr_peak > 0.0)) bad.push_back("optimizer.lr_peak");
  if (!(O.lr_final >= 0.0)) bad.push_back("optimizer.lr_final");
  if (!(O.adam.beta1 >= 0.0 && O.adam.beta1 < 1.0)) bad.push_back("optimizer.beta1");
  if (!(O.adam.beta2 >= 0.0 && O.adam.beta2 < 1.0)) bad.push_back("optimizer.beta2");
  if (!(O.adam.eps > 0.0)) bad.push_back("optimizer.eps");
  if (!(O.adam.weight_decay >= 0.0)) bad.push_back("optimizer.weight_decay");

  const auto& S = c.schedule;
  if (S.epochs < 1) bad.push_back("schedule.epochs");
  if (S.warmup_epochs < 0 || S.warmup_epochs >= S.epochs) bad.push_back("schedule.warmup_epochs");
  if (S.batch_size < 2) bad.push_back("schedule.batch_size");

  const auto& D = c.data;
  if (D.kind == DataKind::synthetic) {
    prefixed(bad, "data.synthetic.", D.synthetic.problems());
    if (c.model.input_width() != D.synthetic.observed_dim) bad.push_back("model.input_dim");
    if (S.batch_size > D.synthetic.train_size) bad.push_back("schedule.batch_size");
  } else {
    if (D.train_files.empty()) bad.push_back("data.train_files");
    if (D.test_file.empty()) bad.push_back("data.test_file");
    if (c.model.input_width() != 3 * 32 * 32) bad.push_back("model.input_dim");
  }
  prefixed(bad, "augment.", c.augment.problems());
  return bad;
}

}  // namespace

void RunConfig::validate() const {
  auto bad = config_problems(*this);
  if (!bad.empty()) throw ConfigError(bad);
}

nlohmann::json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["method"] = to_string(c.method);
  j["variant"] = to_string(c.variant);
  j["prior"] = {{"kind", to_string(c.prior.kind)},
                {"components", c.prior.components},
                {"init_mean_std", c.prior.init_mean_std}};
  j["loss"] = {{"lambda_bt", c.loss.lambda_bt}, {"alpha", c.loss.alpha},     {"tau", c.loss.tau},
               {"nu", c.loss.nu},               {"gamma", c.loss.gamma},     {"beta", c.loss.beta},
               {"var_eps", c.loss.var_eps},     {"corr_eps", c.loss.corr_eps}, {"mc_samples", c.mc_samples}};
  const auto& m = c.model;
  j["model"] = {{"encoder", models::to_string(m.encoder)},
                {"input_dim", m.input_dim},
                {"encoder_hidden", m.encoder_hidden},
                {"image", {{"channels", m.image.channels}, {"height", m.image.height}, {"width", m.image.width}}},
                {"conv_channels", m.conv_channels},
                {"repr_dim", m.repr_dim},
                {"proj_width", m.proj_width},
                {"embed_dim", m.embed_dim},
                {"sigma_min", m.sigma_min},
                {"sigma_init", m.sigma_init},
                {"bn_eps", m.bn_eps},
                {"bn_momentum", m.bn_momentum}};
  j["optimizer"] = {{"lr_peak", c.optimizer.lr_peak},   {"lr_final", c.optimizer.lr_final},
                    {"beta1", c.optimizer.adam.beta1},  {"beta2", c.optimizer.adam.beta2},
                    {"eps", c.optimizer.adam.eps},      {"weight_decay", c.optimizer.adam.weight_decay}};
  j["schedule"] = {{"epochs", c.schedule.epochs},
                   {"warmup_epochs", c.schedule.warmup_epochs},
                   {"batch_size", c.schedule.batch_size}};
  const auto& s = c.data.synthetic;
  j["data"] = {{"kind", to_string(c.data.kind)},
               {"seed", c.data.seed},
               {"synthetic",
                {{"num_classes", s.num_classes},
                 {"latent_dim", s.latent_dim},
                 {"observed_dim", s.observed_dim},
                 {"center_scale", s.center_scale},
                 {"latent_noise", s.latent_noise},
                 {"observation_noise", s.observation_noise},
                 {"train_size", s.train_size},
                 {"test_size", s.test_size},
                 {"ood_size", s.ood_size},
                 {"ood_shift", s.ood_shift},
                 {"ood_scale", s.ood_scale}}},
               {"train_files", c.data.train_files},
               {"test_file", c.data.test_file},
               {"ood_file", c.data.ood_file}};
  const auto& a = c.augment;
  j["augment"] = {{"noise_std", a.noise_std},
                  {"mask_prob", a.mask_prob},
                  {"gain", a.gain},
                  {"crop_min_scale", a.crop_min_scale},
                  {"flip_prob", a.flip_prob},
                  {"brightness", a.brightness},
                  {"contrast", a.contrast}};
  j["seed"] = c.seed;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  std::vector<std::string> bad;
  {
    Reader r(doc, "", bad);
    int version = kSchemaVersion;
    r.get("schema_version", version);
    if (version != kSchemaVersion) r.fail("schema_version");
    r.get_enum("method", c.method, &parse_method);
    r.get_enum("variant", c.variant, &parse_variant);
    if (!r.has("seed")) r.fail("seed");
    r.get("seed", c.seed);

    if (const json* p = r.child("prior")) {
      Reader q(*p, "prior.", bad);
      q.get_enum("kind", c.prior.kind, &parse_prior_kind);
      q.get("components", c.prior.components);
      q.get("init_mean_std", c.prior.init_mean_std);
    }
    if (const json* p = r.child("loss")) {
      Reader q(*p, "loss.", bad);
      q.get("lambda_bt", c.loss.lambda_bt);
      q.get("alpha", c.loss.alpha);
      q.get("tau", c.loss.tau);
      q.get("nu", c.loss.nu);
      q.get("gamma", c.loss.gamma);
      q.get("beta", c.loss.beta);
      q.get("var_eps", c.loss.var_eps);
      q.get("corr_eps", c.loss.corr_eps);
      q.get("mc_samples", c.mc_samples);
    }
    if (const json* p = r.child("model")) {
      Reader q(*p, "model.", bad);
      q.get_enum("encoder", c.model.encoder, &models::parse_encoder_kind);
      q.get("input_dim", c.model.input_dim);
      q.get("encoder_hidden", c.model.encoder_hidden);
      if (const json* im = q.child("image")) {
        Reader qi(*im, "model.image.", bad);
        qi.get("channels", c.model.image.channels);
        qi.get("height", c.model.image.height);
        qi.get("width", c.model.image.width);
      }
      q.get("conv_channels", c.model.conv_channels);
      q.get("repr_dim", c.model.repr_dim);
      q.get("proj_width", c.model.proj_width);
      q.get("embed_dim", c.model.embed_dim);
      q.get("sigma_min", c.model.sigma_min);
      q.get("sigma_init", c.model.sigma_init);
      q.get("bn_eps", c.model.bn_eps);
      q.get("bn_momentum", c.model.bn_momentum);
    }
    if (const json* p = r.child("optimizer")) {
      Reader q(*p, "optimizer.", bad);
      q.get("lr_peak", c.optimizer.lr_peak);
      q.get("lr_final", c.optimizer.lr_final);
      q.get("beta1", c.optimizer.adam.beta1);
      q.get("beta2", c.optimizer.adam.beta2);
      q.get("eps", c.optimizer.adam.eps);
      q.get("weight_decay", c.optimizer.adam.weight_decay);
    }
    if (const json* p = r.child("schedule")) {
      Reader q(*p, "schedule.", bad);
      q.get("epochs", c.schedule.epochs);
      q.get("warmup_epochs", c.schedule.warmup_epochs);
      q.get("batch_size", c.schedule.batch_size);
    }
    if (const json* p = r.child("data")) {
      Reader q(*p, "data.", bad);
      q.get_enum("kind", c.data.kind, &parse_data_kind);
      q.get("seed", c.data.seed);
      if (const json* sp = q.child("synthetic")) {
        Reader qs(*sp, "data.synthetic.", bad);
        auto& s = c.data.synthetic;
        qs.get("num_classes", s.num_classes);
        qs.get("latent_dim", s.latent_dim);
        qs.get("observed_dim", s.observed_dim);
        qs.get("center_scale", s.center_scale);
        qs.get("latent_noise", s.latent_noise);
        qs.get("observation_noise", s.observation_noise);
        qs.get("train_size", s.train_size);
        qs.get("test_size", s.test_size);
        qs.get("ood_size", s.ood_size);
        qs.get("ood_shift", s.ood_shift);
        qs.get("ood_scale", s.ood_scale);
      }
      q.get("train_files", c.data.train_files);
      q.get("test_file", c.data.test_file);
      q.get("ood_file", c.data.ood_file);
    }
    if (const json* p = r.child("augment")) {
      Reader q(*p, "augment.", bad);
      q.get("noise_std", c.augment.noise_std);
      q.get("mask_prob", c.augment.mask_prob);
      q.get("gain", c.augment.gain);
      q.get("crop_min_scale", c.augment.crop_min_scale);
      q.get("flip_prob", c.augment.flip_prob);
      q.get("brightness", c.augment.brightness);
      q.get("contrast", c.augment.contrast);
    }
  }
  if (bad.empty()) bad = config_problems(c);
  else {
    // Report range problems too, skipping keys that already failed to parse.
    for (auto& k : config_problems(c))
      if (std::find(bad.begin(), bad.end(), k) == bad.end()) bad.push_back(k);
  }
  if (!bad.empty()) throw ConfigError(bad);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("<parse error: ") + e.what() + ">"});
  }
  return run_config_from_json(doc);
}

void set_config_value(nlohmann::json& doc, const std::string& dotted_key, const std::string& text) {
  json* node = &doc;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError({dotted_key});
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError({dotted_key});
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare word such as "zprob"
  }
  (*node)[parts.back()] = value;
}

}  // namespace pssl
