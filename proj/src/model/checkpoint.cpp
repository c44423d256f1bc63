#include "mmtraj/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mmtraj/errors.hpp"

namespace mmtraj {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'R', 'J', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelConfig& config, const ModelParams& params) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(config).dump();
  put<std::uint64_t>(out, cfg.size());
  out += cfg;
  std::uint64_t count = 0;
  params.for_each([&](const std::string&, const Tensor&) { ++count; });
  put<std::uint64_t>(out, count);
  params.for_each([&](const std::string& name, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  });
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a checkpoint file");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto cfg_len = in.get<std::uint64_t>();
  try {
    ck.config = nlohmann::json::parse(in.take(cfg_len)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  const auto count = in.get<std::uint64_t>();
  std::map<std::string, Tensor> stored;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.take(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    std::vector<double> data(numel(shape));
    for (double& v : data) v = in.get<double>();
    stored.emplace(name, Tensor(shape, std::move(data)));
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint tensors");

  ck.params = ModelParams::init(ck.config);
  std::size_t matched = 0;
  ck.params.visit([&](const std::string& name, Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw ParseError("checkpoint is missing tensor " + name);
    if (it->second.shape() != t.shape()) {
      throw DimensionError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape()) +
                           ", config expects " + shape_str(t.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), t.mutable_data().begin());
    ++matched;
  });
  if (matched != stored.size()) throw ParseError("checkpoint has tensors the config does not define");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(config, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace mmtraj
