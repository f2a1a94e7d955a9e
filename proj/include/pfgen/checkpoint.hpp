#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pfgen/errors.hpp"
#include "pfgen/geometry.hpp"
#include "pfgen/pointnet.hpp"
#include "pfgen/synthetic.hpp"

namespace pfgen {

inline constexpr std::array<char, 5> kCheckpointMagic{'P', 'F', 'G', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Reflected CRC-32 (polynomial 0xEDB88320), the common PKZIP variant.
inline std::uint32_t crc32(const void* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ b[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

struct LoadedModel {
  ModelParams params;
  NormStats stats;
  FlowConfig flow;
};

namespace detail {

template <typename T>
void put_bytes(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_tensor(std::string& buf, const Tensor& t) {
  buf.append(reinterpret_cast<const char*>(t.data()),
             static_cast<std::size_t>(t.size()) * sizeof(float));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  template <typename T>
  T take() {
    require(pos + sizeof(T) <= buf.size(), ErrorCategory::io, "checkpoint truncated");
    T v{};
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  void take_tensor(Tensor& t) {
    std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(float);
    require(pos + bytes <= buf.size(), ErrorCategory::io, "checkpoint truncated");
    std::memcpy(t.data(), buf.data() + pos, bytes);
    pos += bytes;
  }
};

}  // namespace detail

// Layout: magic, version u32, kind u32, d u32, d_emb u32, n_cfd u32,
// norm stats (10 f64), flow constants (4 f64), block count u32, per block
// {c_in u32, c_out u32, has_bn u8}, float32 payload (per block: weight,
// bias, then scale, shift, running mean, running var when has_bn), and a
// trailing CRC-32 of the payload bytes alone.
inline void save_checkpoint(const ModelParams& params, const NormStats& stats,
                            const FlowConfig& flow, const std::filesystem::path& path) {
  std::string head;
  head.append(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_bytes(head, kCheckpointVersion);
  detail::put_bytes(head, static_cast<std::uint32_t>(params.kind));
  detail::put_bytes(head, static_cast<std::uint32_t>(params.d));
  detail::put_bytes(head, static_cast<std::uint32_t>(params.d_emb));
  detail::put_bytes(head, static_cast<std::uint32_t>(params.n_cfd));
  for (double v : {stats.x.lo, stats.x.hi, stats.y.lo, stats.y.hi, stats.u.lo, stats.u.hi,
                   stats.v.lo, stats.v.hi, stats.p.lo, stats.p.hi})
    detail::put_bytes(head, v);
  for (double v : {flow.rho, flow.mu, flow.u_inf, flow.p0}) detail::put_bytes(head, v);
  detail::put_bytes(head, static_cast<std::uint32_t>(params.blocks.size()));
  for (const LayerBlock& b : params.blocks) {
    detail::put_bytes(head, static_cast<std::uint32_t>(b.c_in()));
    detail::put_bytes(head, static_cast<std::uint32_t>(b.c_out()));
    detail::put_bytes(head, static_cast<std::uint8_t>(b.has_bn ? 1 : 0));
  }

  std::string payload;
  for (const LayerBlock& b : params.blocks) {
    detail::put_tensor(payload, b.weight);
    detail::put_tensor(payload, b.bias);
    if (b.has_bn) {
      detail::put_tensor(payload, b.bn_scale);
      detail::put_tensor(payload, b.bn_shift);
      detail::put_tensor(payload, b.bn_mean);
      detail::put_tensor(payload, b.bn_var);
    }
  }
  std::uint32_t crc = crc32(payload.data(), payload.size());

  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot open checkpoint for writing: " + path.string());
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  os.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  require(os.good(), ErrorCategory::io, "checkpoint write failed: " + path.string());
}

inline LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  require(is.good() || is.eof(), ErrorCategory::io, "checkpoint read failed: " + path.string());

  detail::ByteReader r{buf};
  std::array<char, 5> magic{};
  for (char& c : magic) c = r.take<char>();
  require(magic == kCheckpointMagic, ErrorCategory::io, "not a checkpoint file");
  require(r.take<std::uint32_t>() == kCheckpointVersion, ErrorCategory::io,
          "unsupported checkpoint version");

  LoadedModel m;
  std::uint32_t kind = r.take<std::uint32_t>();
  require(kind <= 2, ErrorCategory::io, "checkpoint: bad model kind");
  m.params.kind = static_cast<ModelKind>(kind);
  m.params.d = static_cast<Index>(r.take<std::uint32_t>());
  m.params.d_emb = static_cast<Index>(r.take<std::uint32_t>());
  m.params.n_cfd = static_cast<Index>(r.take<std::uint32_t>());
  m.params.width_divisor = 1;  // informational only; shapes carry the truth
  double st[10];
  for (double& v : st) v = r.take<double>();
  m.stats = NormStats{{st[0], st[1]}, {st[2], st[3]}, {st[4], st[5]}, {st[6], st[7]},
                      {st[8], st[9]}};
  m.flow.rho = r.take<double>();
  m.flow.mu = r.take<double>();
  m.flow.u_inf = r.take<double>();
  m.flow.p0 = r.take<double>();

  std::uint32_t n_blocks = r.take<std::uint32_t>();
  require(n_blocks >= 1 && n_blocks <= 64, ErrorCategory::io, "checkpoint: bad block count");
  struct Shape {
    Index c_in, c_out;
    bool has_bn;
  };
  std::vector<Shape> shapes;
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    auto c_in = r.take<std::uint32_t>();
    auto c_out = r.take<std::uint32_t>();
    auto bn = r.take<std::uint8_t>();
    require(c_in >= 1 && c_out >= 1 && bn <= 1, ErrorCategory::io,
            "checkpoint: bad block shape");
    shapes.push_back({static_cast<Index>(c_in), static_cast<Index>(c_out), bn == 1});
  }

  std::size_t payload_start = r.pos;
  require(buf.size() >= payload_start + sizeof(std::uint32_t), ErrorCategory::io,
          "checkpoint truncated");
  std::size_t payload_len = buf.size() - payload_start - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - sizeof(std::uint32_t), sizeof(stored_crc));
  require(crc32(buf.data() + payload_start, payload_len) == stored_crc, ErrorCategory::io,
          "checkpoint payload CRC mismatch");

  for (const Shape& s : shapes) {
    LayerBlock b;
    b.weight = Tensor({s.c_in, s.c_out});
    b.bias = Tensor({s.c_out});
    b.has_bn = s.has_bn;
    r.take_tensor(b.weight);
    r.take_tensor(b.bias);
    if (s.has_bn) {
      b.bn_scale = Tensor({s.c_out});
      b.bn_shift = Tensor({s.c_out});
      b.bn_mean = Tensor({s.c_out});
      b.bn_var = Tensor({s.c_out});
      r.take_tensor(b.bn_scale);
      r.take_tensor(b.bn_shift);
      r.take_tensor(b.bn_mean);
      r.take_tensor(b.bn_var);
    }
    m.params.blocks.push_back(std::move(b));
  }
  require(r.pos == payload_start + payload_len, ErrorCategory::io,
          "checkpoint: payload length does not match declared shapes");
  return m;
}

}  // namespace pfgen
