#include "numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace elcorec::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'E', 'L', 'C', 'C', 'K', 'P', 'T', '1'};
}

const NamedArray& Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw LookupError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<double> values) {
  if (contains(name)) throw InvalidArgumentError("duplicate checkpoint tensor '" + name + "'");
  if (shape_size(shape) != values.size()) throw DimensionError("checkpoint tensor '" + name + "' shape mismatch");
  arrays.push_back({std::move(name), std::move(shape), std::move(values)});
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["tensors"] = nlohmann::ordered_json::object();
  std::uint64_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    header["tensors"][a.name] = {{"shape", a.shape}, {"dtype", "f64"}, {"offset", offset}};
    offset += a.values.size() * sizeof(double);
  }
  header["meta"] = ckpt.meta;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : ckpt.arrays)
    out.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  if (!out) throw IoError("write failed for '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError("'" + path + "' is not a tensor container");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated header in '" + path + "'");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad header in '" + path + "': " + e.what());
  }
  const auto payload_start = in.tellg();
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::ordered_json::object());
  for (const auto& [name, info] : header.at("tensors").items()) {
    if (info.at("dtype") != "f64") throw FormatError("unsupported dtype for '" + name + "'");
    Shape shape = info.at("shape").get<Shape>();
    std::vector<double> values(shape_size(shape));
    in.seekg(payload_start + static_cast<std::streamoff>(info.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw FormatError("truncated payload for '" + name + "' in '" + path + "'");
    ckpt.arrays.push_back({name, std::move(shape), std::move(values)});
  }
  return ckpt;
}

void append_params(Checkpoint& ckpt, const ParamStore& params, const std::string& prefix) {
  for (const auto& [name, e] : params.entries()) {
    ckpt.add(prefix + name, e.tensor.shape(), {e.tensor.values().begin(), e.tensor.values().end()});
  }
}

void load_params(const Checkpoint& ckpt, ParamStore& params, const std::string& prefix) {
  for (auto& [name, e] : params.entries()) {
    const auto& a = ckpt.find(prefix + name);
    if (a.shape != e.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + prefix + name + "' has shape " + shape_string(a.shape) +
                           ", model expects " + shape_string(e.tensor.shape()));
    }
    std::copy(a.values.begin(), a.values.end(), e.tensor.mutable_values().begin());
  }
}

}  // namespace elcorec::nn
