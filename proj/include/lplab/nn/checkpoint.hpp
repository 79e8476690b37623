#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "lplab/core/binary_io.hpp"
#include "lplab/nn/dense_net.hpp"

// LPLB checkpoint layout (little-endian):
//   "LPLB" u32 version=1 u32 layer_count
//   per layer: u32 in_dim u32 out_dim u8 activation u8 batch_norm
//   per layer: f64 weight[out*in] (row-major) f64 bias[out]
//              and if batch_norm: f64 scale[out] shift[out] running_mean[out] running_var[out]
namespace lplab::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void write_vec(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) binio::write_f64(out, v(i));
}
inline Vector read_vec(std::istream& in, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = binio::read_f64(in);
  return v;
}
}  // namespace detail

inline void write_checkpoint(std::ostream& out, const DenseNet& net) {
  binio::write_magic(out, "LPLB");
  binio::write_le<std::uint32_t>(out, kCheckpointVersion);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    binio::write_u8(out, static_cast<std::uint8_t>(l.activation));
    binio::write_u8(out, l.batch_norm ? 1 : 0);
  }
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) binio::write_f64(out, l.weight(r, c));
    detail::write_vec(out, l.bias);
    if (l.batch_norm) {
      detail::write_vec(out, l.batch_norm->scale);
      detail::write_vec(out, l.batch_norm->shift);
      detail::write_vec(out, l.batch_norm->running_mean);
      detail::write_vec(out, l.batch_norm->running_var);
    }
  }
  if (!out) throw IoError("failed writing checkpoint");
}

inline DenseNet read_checkpoint(std::istream& in) {
  binio::expect_magic(in, "LPLB");
  const auto version = binio::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = binio::read_le<std::uint32_t>(in);
  struct Header {
    std::uint32_t in, out;
    std::uint8_t act, bn;
  };
  std::vector<Header> headers(count);
  for (auto& h : headers) {
    h.in = binio::read_le<std::uint32_t>(in);
    h.out = binio::read_le<std::uint32_t>(in);
    h.act = binio::read_u8(in);
    h.bn = binio::read_u8(in);
    if (h.act > static_cast<std::uint8_t>(Activation::tanh)) throw IoError("unknown activation tag");
    if (h.in == 0 || h.out == 0 || h.in > (1u << 20) || h.out > (1u << 20)) throw IoError("implausible layer size");
  }
  std::vector<DenseLayer> layers;
  for (const auto& h : headers) {
    DenseLayer l;
    l.weight = Matrix(h.out, h.in);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = binio::read_f64(in);
    l.bias = detail::read_vec(in, h.out);
    l.activation = static_cast<Activation>(h.act);
    if (h.bn) {
      BatchNorm bn;
      bn.scale = detail::read_vec(in, h.out);
      bn.shift = detail::read_vec(in, h.out);
      bn.running_mean = detail::read_vec(in, h.out);
      bn.running_var = detail::read_vec(in, h.out);
      l.batch_norm = std::move(bn);
    }
    layers.push_back(std::move(l));
  }
  DenseNet net(std::move(layers));
  net.set_mode(Mode::eval);
  return net;
}

inline void save_checkpoint(const std::string& path, const DenseNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(out, net);
}

inline DenseNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace lplab::nn
