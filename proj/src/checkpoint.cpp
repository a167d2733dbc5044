#include "mcevit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mcevit/errors.hpp"

namespace mcevit {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw IoError("truncated checkpoint " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("MCEW", 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto e : t.shape()) write_u32(out, static_cast<std::uint32_t>(e));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * 4));
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCEW", 4) != 0) throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  const std::uint32_t count = read_u32(in, path);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(read_u32(in, path));
    std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    if (!in) throw IoError("truncated checkpoint " + path);
    out.emplace_back(std::move(name), Tensor::from_vector(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace mcevit
