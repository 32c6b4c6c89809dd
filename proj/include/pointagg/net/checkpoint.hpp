#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pointagg/core/layers.hpp"

namespace pointagg {

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "PAGG" | version u32 | count u64 | entries of
// (name_len u32, name bytes, rank u32, dims u64..., values f64...)
inline void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("save_checkpoint: cannot open " + path);
  out.write("PAGG", 4);
  detail::write_u32(out, kCheckpointVersion);
  detail::write_u64(out, params.entries().size());
  for (const auto& e : params.entries()) {
    detail::write_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_u32(out, 2);
    detail::write_u64(out, static_cast<std::uint64_t>(e.tensor->rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(e.tensor->cols()));
    for (Index i = 0; i < e.tensor->size(); ++i)
      detail::write_f64(out, static_cast<double>((*e.tensor)[i]));
  }
  if (!out) throw ValidationError("save_checkpoint: write failed for " + path);
}

// Fills the tensors already registered in `params`; every stored blob must
// match a registered name and shape exactly, with nothing missing or extra.
inline void load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PAGG", 4) != 0)
    throw ValidationError("load_checkpoint: not a checkpoint file");
  const std::uint32_t version = detail::read_u32(in);
  if (version != kCheckpointVersion)
    throw ValidationError("load_checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t count = detail::read_u64(in);
  if (count != params.entries().size())
    throw ValidationError("load_checkpoint: parameter count mismatch");

  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < params.entries().size(); ++i)
    by_name.emplace(params.entries()[i].name, i);
  std::vector<bool> seen(params.entries().size(), false);

  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(in);
    if (!in || rank != 2) throw ValidationError("load_checkpoint: malformed entry " + name);
    const auto rows = static_cast<Index>(detail::read_u64(in));
    const auto cols = static_cast<Index>(detail::read_u64(in));
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("load_checkpoint: unknown parameter " + name);
    if (seen[it->second]) throw ValidationError("load_checkpoint: duplicate parameter " + name);
    seen[it->second] = true;
    Tensor& t = *params.entries()[it->second].tensor;
    if (t.rows() != rows || t.cols() != cols)
      throw ValidationError("load_checkpoint: shape mismatch for " + name);
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(detail::read_f64(in));
    if (!in) throw ValidationError("load_checkpoint: truncated file at " + name);
  }
}

}  // namespace pointagg
