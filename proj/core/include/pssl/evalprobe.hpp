#pragma once

// Representation extraction, linear probing, fine-tuning and the sigma vs
// correctness analysis.

#include "pssl/gaussdist.hpp"
#include "pssl/models.hpp"
#include "pssl/params.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pssl::eval {

// Evaluation-mode outputs for a whole input matrix.
//   h: point output, or the posterior mean for hprob
//   z: point output, or the posterior mean for zprob (hprob projects the mean of h)
struct Embeddings {
  Matrix h;
  Matrix z;
  std::optional<gauss::DiagGaussianBatch> h_dist;
  std::optional<gauss::DiagGaussianBatch> z_dist;

  // The distribution carrying sigma, or nullptr for deterministic runs.
  const gauss::DiagGaussianBatch* stochastic_dist() const;
};

Embeddings embed(const models::Model& model, ParamStore& params, const Matrix& x, Index chunk = 512);

struct RepresentationOptions {
  // 0: analytic posterior mean. K > 0: average of K posterior samples (hprob only).
  int samples = 0;
  std::uint64_t seed = 0;
};

// Throws InvalidArgument when the model's variant differs from `expected`.
Matrix extract_representation(const models::Model& model, ParamStore& params, const Matrix& x, Variant expected,
                              const RepresentationOptions& options = {});

// Throws on an all-zero row.
Matrix l2_normalize(const Matrix& x);

struct ProbeConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  // Fractions of training at which the rate drops by decay_factor.
  std::vector<double> decay_at{0.3, 0.6, 0.9};
  double decay_factor = 0.1;
  std::uint64_t seed = 1;

  int finetune_epochs = 10;
  double head_lr = 1e-3;
  double backbone_lr = 1e-4;
  double finetune_weight_decay = 1e-5;

  void validate() const;
};

struct LinearHead {
  Matrix weight;  // d x C
  RowVector bias;  // 1 x C

  Matrix logits(const Matrix& features) const;
  std::vector<int> predict(const Matrix& features) const;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the test set
  std::vector<Index> class_counts;
  LinearHead head;
  std::vector<double> curve;  // mean training loss per epoch
};

int count_classes(const std::vector<int>& labels);

// Softmax classifier on L2-normalized frozen features; accuracy on the held-out set.
ProbeResult train_probe(const Matrix& train_features, const std::vector<int>& train_labels,
                        const Matrix& test_features, const std::vector<int>& test_labels, int num_classes,
                        const ProbeConfig& config);

// Starts from a frozen probe, then trains head and encoder jointly at
// head_lr / backbone_lr. params is updated in place.
ProbeResult finetune(const models::Model& model, ParamStore& params, const Matrix& train_x,
                     const std::vector<int>& train_labels, const Matrix& test_x, const std::vector<int>& test_labels,
                     int num_classes, const ProbeConfig& config);

// Probe logits for raw inputs (representation -> L2 normalization -> head).
Matrix probe_logits(const models::Model& model, ParamStore& params, const LinearHead& head, const Matrix& x);

void score(ProbeResult& result, const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);

struct SigmaRow {
  Index sample = 0;
  double mean_sigma = 0.0;
  int label = 0;
  int prediction = 0;
  bool correct = false;
};

struct SigmaPartition {
  std::optional<double> mean_correct;  // empty when the partition is empty
  std::optional<double> mean_incorrect;
  Index count_correct = 0;
  Index count_incorrect = 0;
  std::vector<SigmaRow> table;
};

SigmaPartition sigma_by_correctness(const Matrix& sigma, const std::vector<int>& predictions,
                                    const std::vector<int>& labels);

}  // namespace pssl::eval
