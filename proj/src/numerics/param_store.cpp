#include "numerics/param_store.hpp"

#include <cmath>

#include "common/error.hpp"

namespace elcorec::nn {

Tensor& ParamStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw InvalidArgumentError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  Entry e{std::move(tensor), {}, {}};
  auto [it, _] = entries_.emplace(name, std::move(e));
  return it->second.tensor;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor& ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.tensor.zero_grad();
}

void ParamStore::set_trainable(bool on) {
  for (auto& [_, e] : entries_) e.tensor.set_requires_grad(on);
}

std::map<std::string, std::vector<double>> ParamStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [k, e] : entries_) out[k].assign(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParamStore::restore(const std::map<std::string, std::vector<double>>& values) {
  for (auto& [k, e] : entries_) {
    auto it = values.find(k);
    if (it == values.end()) throw LookupError("snapshot lacks parameter '" + k + "'");
    if (it->second.size() != e.tensor.size()) throw DimensionError("snapshot size mismatch for '" + k + "'");
    std::copy(it->second.begin(), it->second.end(), e.tensor.mutable_values().begin());
  }
}

void AdamW::step(ParamStore& params) const {
  ++params.steps_;
  const double t = static_cast<double>(params.steps_);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (auto& [_, e] : params.entries_) {
    Tensor& p = e.tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    if (e.m.size() != p.size()) {
      e.m.assign(p.size(), 0.0);
      e.v.assign(p.size(), 0.0);
    }
    auto w = p.mutable_values();
    const auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g[i];
      e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
  }
}

}  // namespace elcorec::nn
