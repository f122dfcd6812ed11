#include "cfaug/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>
#include <vector>

namespace cfaug {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'A', 'U', 'G', 'C', 'K', '1'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

template <typename Scalar>
constexpr const char* scalar_name() {
  return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

template <typename From, typename To>
void read_tensor(const char* src, nn::Mat<To>& dst) {
  for (Eigen::Index k = 0; k < dst.size(); ++k) {
    From v;
    std::memcpy(&v, src + k * sizeof(From), sizeof(From));
    dst.data()[k] = static_cast<To>(v);
  }
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const DisAEModel<Scalar>& model,
                     const Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size)
    throw CheckpointError("vocabulary size does not match model config");
  nlohmann::json tensors = nlohmann::json::array();
  std::string data;
  model.params().visit([&](const std::string& name, const nn::Mat<Scalar>& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    data.append(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(Scalar));
  });
  nlohmann::json header = {{"format", "cfaug-disae"},
                           {"version", 1},
                           {"scalar", scalar_name<Scalar>()},
                           {"config", model.config().to_json()},
                           {"vocabulary", vocab.to_json()},
                           {"tensors", tensors}};
  const std::string header_text = header.dump();
  std::string buf(kMagic, sizeof(kMagic));
  put_u64(buf, header_text.size());
  buf += header_text;
  buf += data;
  put_u64(buf, fnv1a(buf.data(), buf.size()));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());
  const std::uint64_t stored = get_u64(buf.data() + buf.size() - 8);
  if (fnv1a(buf.data(), buf.size() - 8) != stored)
    throw CheckpointError("checkpoint checksum mismatch (truncated or corrupt): " + path.string());
  const std::uint64_t header_len = get_u64(buf.data() + sizeof(kMagic));
  const std::size_t header_at = sizeof(kMagic) + 8;
  if (header_len > buf.size() - header_at - 8) throw CheckpointError("bad header length");

  nlohmann::json header;
  DisAEConfig config;
  Vocabulary vocab;
  try {
    header = nlohmann::json::parse(buf.substr(header_at, header_len));
    config = DisAEConfig::from_json(header.at("config"));
    vocab = Vocabulary::from_json(header.at("vocabulary"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  const std::string scalar = header.value("scalar", "");
  const std::size_t width = scalar == "float32" ? 4 : scalar == "float64" ? 8 : 0;
  if (width == 0) throw CheckpointError("unknown scalar type '" + scalar + "'");

  DisAEParams<Scalar> params;
  const auto& index = header.at("tensors");
  std::size_t k = 0;
  std::size_t offset = header_at + header_len;
  const std::size_t data_end = buf.size() - 8;
  params.visit([&](const std::string& name, nn::Mat<Scalar>& m) {
    if (k >= index.size() || index[k].at("name").get<std::string>() != name)
      throw CheckpointError("tensor index mismatch at '" + name + "'");
    const auto rows = index[k].at("rows").get<Eigen::Index>();
    const auto cols = index[k].at("cols").get<Eigen::Index>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * width;
    if (offset + bytes > data_end) throw CheckpointError("tensor data truncated at '" + name + "'");
    m.resize(rows, cols);
    if (width == 4)
      read_tensor<float>(buf.data() + offset, m);
    else
      read_tensor<double>(buf.data() + offset, m);
    offset += bytes;
    ++k;
  });
  if (k != index.size() || offset != data_end) throw CheckpointError("trailing tensor data");
  try {
    return Checkpoint<Scalar>{DisAEModel<Scalar>(config, std::move(params)), std::move(vocab)};
  } catch (const ModelError& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const DisAEModel<float>&,
                                     const Vocabulary&);
template void save_checkpoint<double>(const std::filesystem::path&, const DisAEModel<double>&,
                                      const Vocabulary&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace cfaug
