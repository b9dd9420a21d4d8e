#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace coc {

int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Dense row-major tensor of 64-bit floats. Rank 1 or 2 covers everything in
/// this codebase; scalars are shape {1}. `grad` is kept the same length as
/// `values` whenever `requires_grad` is set and is accumulated into by
/// Tape::backward.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> vals, bool requires_grad = false);

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;

  double& at(int r, int c);
  double at(int r, int c) const;

  void set_requires_grad(bool rg);
  void zero_grad();
  bool all_finite() const;
};

/// Named, deterministically ordered collection of trainable tensors. The map
/// keeps addresses stable, so Tape leaves can hold Tensor pointers across a
/// training step.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::map<std::string, Tensor>& items() { return params_; }
  const std::map<std::string, Tensor>& items() const { return params_; }

  size_t size() const { return params_.size(); }
  int64_t total_values() const;
  void zero_grads();
  bool all_finite() const;

 private:
  std::map<std::string, Tensor> params_;
};

// Versioned JSON checkpoint. Values survive the round trip exactly
// (shortest-round-trip decimal printing).
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace coc
