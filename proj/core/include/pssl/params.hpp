#pragma once

#include "pssl/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace pssl {

// One named parameter (or buffer) with its gradient slot.
struct Tensor {
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

// Ordered name -> tensor map. Shapes are fixed once a tensor is added.
// Parameter values live on the float32 grid (see quantize()) so checkpoints,
// which store f32, round-trip exactly.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Matrix init, bool trainable = true);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  void zero_grad();
  // Rounds every value to the nearest float32.
  void quantize();
  // Overwrites a value in place; the shape must match.
  void assign(const std::string& name, const Matrix& value);

  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

Matrix to_float_grid(const Matrix& m);

}  // namespace pssl
