#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "numerics/tensor.hpp"

namespace elcorec::nn {

/// Named trainable parameters plus the AdamW moment buffers that go with them.
class ParamStore {
 public:
  struct Entry {
    Tensor tensor;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
  };

  /// Registers a parameter initialised uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor& add_constant(const std::string& name, Shape shape, double value);
  Tensor& add(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::uint64_t step_count() const { return steps_; }

  void zero_grad();
  /// Marks every parameter (non-)trainable. Frozen parameters get no gradient.
  void set_trainable(bool on);

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Deep copy of the current values, used for best-epoch snapshots.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& values);

 private:
  friend struct AdamW;
  std::map<std::string, Entry> entries_;
  std::uint64_t steps_ = 0;
};

/// Decoupled-weight-decay Adam.
struct AdamW {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(ParamStore& params) const;
};

}  // namespace elcorec::nn
