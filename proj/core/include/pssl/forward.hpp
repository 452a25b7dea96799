#pragma once

#include "pssl/autodiff.hpp"
#include "pssl/gaussdist.hpp"

#include <optional>
#include <vector>

namespace pssl {

// Result of running one view through encoder and projector.
//   deterministic: h_point, z_point
//   zprob:         h_point, z_dist, z_samples
//   hprob:         h_dist, h_samples, z_samples (projector applied per h sample)
struct ForwardOutput {
  Variant variant = Variant::deterministic;
  std::optional<ad::Var> h_point;
  std::optional<gauss::GaussVar> h_dist;
  std::optional<ad::Var> z_point;
  std::optional<gauss::GaussVar> z_dist;
  std::vector<ad::Var> z_samples;
  std::vector<ad::Var> h_samples;

  // Throws if the populated fields do not match the variant tag.
  void validate() const;
  // The distribution carrying sigma (z_dist for zprob, h_dist for hprob).
  const gauss::GaussVar& stochastic_dist() const;
  // Draws of stochastic_dist(), in the same order as z_samples.
  const std::vector<ad::Var>& stochastic_samples() const;
};

}  // namespace pssl
