#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "numerics/param_store.hpp"

namespace elcorec::nn {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Tensor container shared by model checkpoints, the knowledge base and
/// embedding dumps.
///
/// Layout: the 8 magic bytes "ELCCKPT1", a little-endian uint64 header length,
/// a JSON header {"tensors": {name: {shape, dtype, offset}}, "meta": {...}},
/// then the raw little-endian float64 payloads. Offsets count bytes from the
/// start of the payload block.
struct Checkpoint {
  std::vector<NamedArray> arrays;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  const NamedArray& find(const std::string& name) const;
  bool contains(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<double> values);
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Appends every parameter of the store, names prefixed with `prefix`.
void append_params(Checkpoint& ckpt, const ParamStore& params, const std::string& prefix = "");
/// Copies values for every parameter of the store from `prefix`+name.
void load_params(const Checkpoint& ckpt, ParamStore& params, const std::string& prefix = "");

}  // namespace elcorec::nn
