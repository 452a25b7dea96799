#include "pssl/params.hpp"

namespace pssl {

Matrix to_float_grid(const Matrix& m) { return m.cast<float>().cast<double>(); }

Tensor& ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  require(!contains(name), "ParamStore: duplicate tensor name '" + name + "'");
  Tensor t;
  t.grad = Matrix::Zero(init.rows(), init.cols());
  t.value = to_float_grid(init);
  t.trainable = trainable;
  return tensors_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  require(it != tensors_.end(), "ParamStore: no tensor named '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  require(it != tensors_.end(), "ParamStore: no tensor named '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : tensors_) t.grad.setZero();
}

void ParamStore::quantize() {
  for (auto& [_, t] : tensors_) t.value = to_float_grid(t.value);
}

void ParamStore::assign(const std::string& name, const Matrix& value) {
  Tensor& t = at(name);
  require(t.value.rows() == value.rows() && t.value.cols() == value.cols(),
          "ParamStore: shape mismatch assigning '" + name + "'");
  t.value = value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [k, _] : tensors_) out.push_back(k);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

}  // namespace pssl
