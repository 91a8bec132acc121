#include "scorl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "scorl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace scorl {
namespace {

constexpr char kMagic[8] = {'S', 'C', 'O', 'R', 'L', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

struct ByteSink {
  std::vector<char> bytes;
  template <typename T>
  void put(const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_raw(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
};

struct ByteSource {
  const char* p;
  const char* end;
  template <typename T>
  T get() {
    if (p + sizeof(T) > end) throw ConfigError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
  }
};

std::vector<char> serialize_payload(const Checkpoint& ckpt) {
  ByteSink s;
  s.put_raw(kMagic, sizeof(kMagic));
  s.put(kVersion);
  s.put(static_cast<uint32_t>(ckpt.role));
  const MLPSpec& sp = ckpt.spec;
  s.put(static_cast<int32_t>(sp.x_dim));
  s.put(static_cast<int32_t>(sp.out_dim));
  s.put(static_cast<uint32_t>(sp.hidden.size()));
  for (int hdim : sp.hidden) s.put(static_cast<int32_t>(hdim));
  s.put(static_cast<uint32_t>(sp.act));
  s.put(static_cast<int32_t>(sp.time_freqs));
  s.put(static_cast<int32_t>(sp.n_contexts));
  s.put(sp.t_scale);
  s.put(ckpt.denoiser_checksum);
  s.put(static_cast<uint64_t>(ckpt.params.size()));
  for (int i = 0; i < ckpt.params.size(); ++i) s.put(static_cast<float>(ckpt.params[i]));
  return s.bytes;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t checkpoint_checksum(const Checkpoint& ckpt) {
  const auto payload = serialize_payload(ckpt);
  return fnv1a64(payload.data(), payload.size());
}

uint64_t params_checksum(const Eigen::VectorXd& params) {
  std::vector<float> f(params.size());
  for (int i = 0; i < params.size(); ++i) f[i] = static_cast<float>(params[i]);
  return fnv1a64(f.data(), f.size() * sizeof(float));
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  auto payload = serialize_payload(ckpt);
  const uint64_t sum = fnv1a64(payload.data(), payload.size());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("checkpoint: cannot open for writing: " + path);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  os.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  if (!os) throw ConfigError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(uint64_t)) throw ConfigError("checkpoint: truncated file");

  const size_t payload_n = bytes.size() - sizeof(uint64_t);
  uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + payload_n, sizeof(stored_sum));
  if (fnv1a64(bytes.data(), payload_n) != stored_sum)
    throw ConfigError("checkpoint: checksum mismatch: " + path);

  ByteSource src{bytes.data(), bytes.data() + payload_n};
  char magic[8];
  for (char& ch : magic) ch = src.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: bad magic: " + path);
  const uint32_t version = src.get<uint32_t>();
  if (version != kVersion) throw ConfigError("checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.role = static_cast<CkptRole>(src.get<uint32_t>());
  ckpt.spec.x_dim = src.get<int32_t>();
  ckpt.spec.out_dim = src.get<int32_t>();
  const uint32_t nh = src.get<uint32_t>();
  if (nh > 64) throw ConfigError("checkpoint: implausible layer count");
  ckpt.spec.hidden.resize(nh);
  for (uint32_t i = 0; i < nh; ++i) ckpt.spec.hidden[i] = src.get<int32_t>();
  ckpt.spec.act = static_cast<Activation>(src.get<uint32_t>());
  ckpt.spec.time_freqs = src.get<int32_t>();
  ckpt.spec.n_contexts = src.get<int32_t>();
  ckpt.spec.t_scale = src.get<double>();
  ckpt.denoiser_checksum = src.get<uint64_t>();
  const uint64_t n = src.get<uint64_t>();
  if (n != static_cast<uint64_t>(ckpt.spec.n_params()))
    throw ConfigError("checkpoint: parameter count does not match spec");
  ckpt.params.resize(static_cast<int>(n));
  for (uint64_t i = 0; i < n; ++i) ckpt.params[static_cast<int>(i)] = src.get<float>();
  return ckpt;
}

}  // namespace scorl
