#pragma once

// Encoder f (v -> h) and projector g (h -> z) networks and the three forward
// pipelines. The stochastic stage swaps a point output for a two-headed
// (mu, sigma) output: on the encoder for hprob, on the projector for zprob.

#include "pssl/autodiff.hpp"
#include "pssl/forward.hpp"
#include "pssl/gaussdist.hpp"
#include "pssl/params.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pssl::models {

enum class EncoderKind { mlp, conv };
enum class Mode { train, eval };

std::string to_string(EncoderKind k);
EncoderKind parse_encoder_kind(const std::string& s);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::mlp;
  Index input_dim = 64;                  // flattened input width (mlp)
  std::vector<int> encoder_hidden{256};  // mlp hidden widths
  ad::ImageShape image{3, 32, 32};       // conv input
  std::vector<int> conv_channels{16, 32, 64, 128};
  int repr_dim = 128;
  int proj_width = 128;
  int embed_dim = 128;
  double sigma_min = gauss::kDefaultSigmaMin;
  double sigma_init = 1.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  Index input_width() const { return encoder == EncoderKind::conv ? image.size() : input_dim; }
  void validate() const;
};

// Binds each parameter at most once per tape.
class Bound {
 public:
  Bound(ad::Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }

 private:
  ad::Tape& tape_;
  ParamStore& store_;
  std::map<std::string, ad::Var> vars_;
};

// Output of one network stage: a point or a diagonal Gaussian.
struct StageOutput {
  std::optional<ad::Var> point;
  std::optional<gauss::GaussVar> dist;
};

inline const std::string kPriorPrefix = "prior.";

class Model {
 public:
  Model(ModelConfig config, Variant variant, gauss::PriorConfig prior = {});

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return variant_; }
  const gauss::PriorConfig& prior() const { return prior_; }
  // Width of the space carrying sigma (embed_dim for zprob, repr_dim for hprob).
  Index stochastic_dim() const;

  // Registers every tensor with seeded fan-in uniform initialization.
  void init(ParamStore& store, std::uint64_t seed) const;

  StageOutput encoder_forward(Bound& b, const ad::Var& v) const;
  StageOutput projector_forward(Bound& b, const ad::Var& h, Mode mode) const;
  // noise holds K draws shaped like the stochastic stage; ignored when deterministic.
  ForwardOutput pipeline_forward(Bound& b, const ad::Var& v, const gauss::NoiseStack& noise, Mode mode) const;
  gauss::PriorVar bind_prior(Bound& b) const;

 private:
  ad::Var linear(Bound& b, const std::string& name, const ad::Var& x) const;
  ad::Var batch_norm(Bound& b, const std::string& name, const ad::Var& x, Mode mode) const;
  StageOutput head(Bound& b, const std::string& prefix, const ad::Var& x, bool stochastic) const;

  ModelConfig config_;
  Variant variant_;
  gauss::PriorConfig prior_;
};

}  // namespace pssl::models
