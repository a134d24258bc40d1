#include "cat/nn/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace cat::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kMaxDims = 8;

static_assert(sizeof(float) == 4);

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap32(v);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    bytes(&v, 4, what);
    return to_le(v);
  }

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError(fmt::format("{}: truncated while reading {}", path_.string(), what));
  }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(fmt::format("cannot open {} for writing", path.string()));
  out.write(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : t.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw CheckpointError(fmt::format("write to {} failed", path.string()));
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("cannot open {}", path.string()));
  Reader r(in, path);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(fmt::format("{}: not a checkpoint", path.string()));
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t len = r.u32("name length");
    if (len > 4096) throw CheckpointError(fmt::format("{}: tensor {} has an implausible name length", path.string(), i));
    t.name.resize(len);
    r.bytes(t.name.data(), len, "name");
    const std::uint32_t ndim = r.u32("rank");
    if (ndim > kMaxDims) throw CheckpointError(fmt::format("{}: tensor {} has rank {}", path.string(), t.name, ndim));
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(r.u32("dimension"));
      n *= shape.back();
      if (n > (std::uint64_t{1} << 32))
        throw CheckpointError(fmt::format("{}: tensor {} is implausibly large", path.string(), t.name));
    }
    std::vector<float> data(static_cast<std::size_t>(n));
    for (auto& f : data) f = std::bit_cast<float>(r.u32("tensor data"));
    t.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyValueNet<float>& model) {
  const auto& a = model.architecture();
  std::vector<float> arch = {float(a.input_rows),     float(a.input_cols), float(a.input_channels),
                             float(a.conv1_channels), float(a.conv2_channels), float(a.fc1_units),
                             float(a.fc2_units),      float(a.actor_hidden_units)};
  for (int v : a.logit_arities) arch.push_back(float(v));
  std::vector<NamedTensor> tensors;
  tensors.push_back({"arch", Tensor<float>({arch.size()}, arch)});
  for (std::size_t i = 0; i < model.parameter_count(); ++i)
    tensors.push_back({model.parameter_names()[i], model.parameters()[i]});
  write_tensors(path, tensors);
}

PolicyValueNet<float> load_checkpoint(const std::filesystem::path& path) {
  auto tensors = read_tensors(path);
  if (tensors.empty() || tensors[0].name != "arch" || tensors[0].value.size() < 9)
    throw CheckpointError(fmt::format("{}: missing architecture record", path.string()));
  const auto& v = tensors[0].value;
  Architecture a;
  a.input_rows = int(v[0]);
  a.input_cols = int(v[1]);
  a.input_channels = int(v[2]);
  a.conv1_channels = int(v[3]);
  a.conv2_channels = int(v[4]);
  a.fc1_units = int(v[5]);
  a.fc2_units = int(v[6]);
  a.actor_hidden_units = int(v[7]);
  for (std::size_t i = 8; i < v.size(); ++i) a.logit_arities.push_back(int(v[i]));
  PolicyValueNet<float> model(a, 0);
  std::vector<std::string> names;
  std::vector<Tensor<float>> values;
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    names.push_back(std::move(tensors[i].name));
    values.push_back(std::move(tensors[i].value));
  }
  try {
    model.load(names, std::move(values));
  } catch (const ShapeError& e) {
    throw CheckpointError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return model;
}

}  // namespace cat::nn
