#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cocolor/adam.hpp"
#include "cocolor/common.hpp"
#include "cocolor/digest.hpp"
#include "cocolor/nets.hpp"

// Versioned binary snapshot of a full training run: every network, every
// optimizer state, the batching rng, and enough identity to refuse mixups.
namespace cocolor {

struct Checkpoint {
  int phase = 0;        // last completed phase (0 = initialization only)
  std::int64_t epoch = 0;  // epochs completed within that phase
  std::uint64_t config_digest = 0;
  std::string rng_state;
  ModelBundle bundle;
  std::array<AdamState, ModelBundle::kNetCount> opt;
};

namespace detail {

constexpr char kCkptMagic[8] = {'C', 'C', 'L', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_value(std::string& out, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(out, &v, sizeof v);
}

inline void put_string(std::string& out, const std::string& s) {
  put_value<std::uint64_t>(out, s.size());
  put_bytes(out, s.data(), s.size());
}

inline void put_tensor(std::string& out, const Tensor<double>& t) {
  put_value<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
  for (int d : t.shape()) put_value<std::int64_t>(out, d);
  put_bytes(out, t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void take(void* p, std::size_t n) {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint file truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  template <typename T>
  T value() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  std::string str() {
    auto n = value<std::uint64_t>();
    if (n > buf.size() - pos) throw CheckpointError("checkpoint file truncated");
    std::string s(buf.data() + pos, static_cast<std::size_t>(n));
    pos += static_cast<std::size_t>(n);
    return s;
  }
  Tensor<double> tensor() {
    auto rank = value<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint tensor rank is implausible");
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      auto d = value<std::int64_t>();
      if (d < 1 || d > (1 << 30)) throw CheckpointError("checkpoint tensor dim is implausible");
      shape.push_back(static_cast<int>(d));
    }
    Tensor<double> t(shape);
    take(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
    return t;
  }
};

inline void put_params(std::string& out, const Params& p) {
  put_value<std::uint64_t>(out, p.entries.size());
  for (const auto& [name, t] : p.entries) {
    put_string(out, name);
    put_tensor(out, t);
  }
}

inline Params read_params(ByteReader& r) {
  Params p;
  auto n = r.value<std::uint64_t>();
  if (n > 10000) throw CheckpointError("checkpoint parameter count is implausible");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    p.entries.emplace_back(std::move(name), r.tensor());
  }
  return p;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  using namespace detail;
  std::string body;
  put_bytes(body, kCkptMagic, sizeof kCkptMagic);
  put_value<std::uint32_t>(body, kCkptVersion);
  put_value<std::uint32_t>(body, sizeof(double));
  put_value<std::int32_t>(body, ckpt.phase);
  put_value<std::int64_t>(body, ckpt.epoch);
  put_value<std::uint64_t>(body, ckpt.config_digest);
  put_string(body, ckpt.rng_state);
  put_value<std::int32_t>(body, ckpt.bundle.image_size());
  put_value<std::int32_t>(body, ckpt.bundle.base_channels());
  for (int i = 0; i < ModelBundle::kNetCount; ++i) {
    put_string(body, ModelBundle::net_name(i));
    put_params(body, ckpt.bundle.net(i));
    put_value<std::int64_t>(body, ckpt.opt[i].t);
    put_value<std::uint64_t>(body, ckpt.opt[i].m.size());
    for (std::size_t j = 0; j < ckpt.opt[i].m.size(); ++j) {
      put_tensor(body, ckpt.opt[i].m[j]);
      put_tensor(body, ckpt.opt[i].v[j]);
    }
  }
  std::uint64_t digest = fnv1a64(body.data(), body.size());
  put_value<std::uint64_t>(body, digest);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw IoError("short write to checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using namespace detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  std::string body = ss.str();
  if (body.size() < sizeof kCkptMagic + 2 * sizeof(std::uint32_t) + sizeof(std::uint64_t))
    throw CheckpointError("checkpoint file truncated");

  std::uint64_t stored;
  std::memcpy(&stored, body.data() + body.size() - sizeof stored, sizeof stored);
  body.resize(body.size() - sizeof stored);
  if (fnv1a64(body.data(), body.size()) != stored)
    throw CheckpointError("checkpoint integrity digest mismatch");

  ByteReader r{body};
  char magic[8];
  r.take(magic, sizeof magic);
  if (std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw CheckpointError("not a checkpoint file");
  if (r.value<std::uint32_t>() != kCkptVersion)
    throw CheckpointError("unsupported checkpoint version");
  if (r.value<std::uint32_t>() != sizeof(double))
    throw CheckpointError("checkpoint scalar width mismatch");

  Checkpoint ckpt;
  ckpt.phase = r.value<std::int32_t>();
  ckpt.epoch = r.value<std::int64_t>();
  ckpt.config_digest = r.value<std::uint64_t>();
  ckpt.rng_state = r.str();
  int image_size = r.value<std::int32_t>();
  int base_channels = r.value<std::int32_t>();
  ckpt.bundle = ModelBundle::shape_only(image_size, base_channels);
  for (int i = 0; i < ModelBundle::kNetCount; ++i) {
    std::string name = r.str();
    if (name != ModelBundle::net_name(i))
      throw CheckpointError("checkpoint network order mismatch at " + name);
    ckpt.bundle.net(i) = read_params(r);
    ckpt.opt[i].t = r.value<std::int64_t>();
    auto n = r.value<std::uint64_t>();
    if (n != ckpt.bundle.net(i).entries.size())
      throw CheckpointError("optimizer state does not match parameters");
    ckpt.opt[i].m.clear();
    ckpt.opt[i].v.clear();
    for (std::uint64_t j = 0; j < n; ++j) {
      ckpt.opt[i].m.push_back(r.tensor());
      ckpt.opt[i].v.push_back(r.tensor());
    }
  }
  if (r.pos != body.size()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

}  // namespace cocolor
