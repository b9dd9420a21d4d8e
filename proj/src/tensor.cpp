#include "coc/tensor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "coc/errors.hpp"
#include "json.hpp"

namespace coc {

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor shape must have positive dims, got " + shape_str(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.values.assign(static_cast<size_t>(numel_of(t.shape)), v);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> vals, bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(vals.size())) {
    throw DimensionError("tensor value count " + std::to_string(vals.size()) +
                         " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.values = std::move(vals);
  t.set_requires_grad(requires_grad);
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

void Tensor::set_requires_grad(bool rg) {
  requires_grad = rg;
  if (rg) {
    grad.assign(values.size(), 0.0);
  } else {
    grad.clear();
  }
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(values.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw ContractError("parameter '" + name + "' already registered");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) > 0; }

int64_t ParamStore::total_values() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

bool ParamStore::all_finite() const {
  for (const auto& [name, t] : params_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : store.items()) {
    params[name] = {{"shape", t.shape}, {"values", t.values}};
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("format_version")) throw ConfigError("checkpoint missing format_version: " + path);
  const int ver = j["format_version"].get<int>();
  if (ver != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint format_version " + std::to_string(ver) + " in " + path);
  }
  ParamStore store;
  for (const auto& [name, entry] : j.at("params").items()) {
    auto shape = entry.at("shape").get<std::vector<int>>();
    auto values = entry.at("values").get<std::vector<double>>();
    store.add(name, Tensor::from(std::move(shape), std::move(values), true));
  }
  return store;
}

}  // namespace coc
