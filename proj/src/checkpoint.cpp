#include "dyad/checkpoint.hpp"

#include "dyad/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dyad::model {
namespace {

constexpr char kMagic[4] = {'D', 'Y', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::string get_bytes(std::istream& is, std::uint32_t n) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename S>
NamedTensor to_tensor(const std::string& name, const ad::Mat<S>& m) {
  NamedTensor t;
  t.name = name;
  t.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

template <typename S>
ad::Mat<S> from_tensor(const NamedTensor& t) {
  if (t.shape.size() != 2) throw DataError("tensor " + t.name + " is not two-dimensional");
  ad::Mat<S> m(t.shape[0], t.shape[1]);
  if (t.data.size() != static_cast<std::size_t>(m.size())) throw DataError("tensor " + t.name + " has wrong size");
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(t.data[i++]);
  return m;
}

template <typename S>
Checkpoint make_checkpoint(const DyadModel<S>& model, nlohmann::json metadata) {
  Checkpoint ck;
  ck.config = model.config();
  ck.metadata = std::move(metadata);
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.push_back(to_tensor<S>(params[i].name, params[i].value));
  return ck;
}

template <typename S>
void load_checkpoint_into(DyadModel<S>& model, const Checkpoint& ck) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const NamedTensor* t = ck.find(p.name);
    if (!t) throw DataError("checkpoint lacks parameter " + p.name);
    ad::Mat<S> m = from_tensor<S>(*t);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw DataError("checkpoint parameter " + p.name + " has a different shape");
    p.value = std::move(m);
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  static_assert(std::endian::native == std::endian::little, "float payload assumes little-endian host");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", ck.config}, {"metadata", ck.metadata}}.dump();
  put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  if (get_bytes(is, 4) != std::string(kMagic, 4)) throw DataError(path.string() + " is not a checkpoint");
  const auto version = get_u32(is);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(get_bytes(is, get_u32(is)));
    ck.config = header.at("config").get<ModelConfig>();
    ck.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_bytes(is, get_u32(is));
    const auto ndim = get_u32(is);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(get_u32(is));
      n *= t.shape.back();
    }
    t.data.resize(n);
    if (n && !is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * 4)))
      throw DataError("checkpoint truncated in tensor " + t.name);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template NamedTensor to_tensor<float>(const std::string&, const ad::Mat<float>&);
template NamedTensor to_tensor<double>(const std::string&, const ad::Mat<double>&);
template ad::Mat<float> from_tensor<float>(const NamedTensor&);
template ad::Mat<double> from_tensor<double>(const NamedTensor&);
template Checkpoint make_checkpoint<float>(const DyadModel<float>&, nlohmann::json);
template Checkpoint make_checkpoint<double>(const DyadModel<double>&, nlohmann::json);
template void load_checkpoint_into<float>(DyadModel<float>&, const Checkpoint&);
template void load_checkpoint_into<double>(DyadModel<double>&, const Checkpoint&);

}  // namespace dyad::model
