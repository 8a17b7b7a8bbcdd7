#pragma once

// Binary model file (little-endian):
//
//   magic "SWRMODEL" | u8 version | u8 scalar bytes (4 or 8) | u8 loss
//   (0 bernoulli, 1 multinomial) | u8 activation (0 sigmoid) | u32 depth
//   u32 lineage count, u64 seeds[...] | u32 manifest id length, bytes
//   per layer:
//     u64 in, u64 K, u64 R (0 when rows differ in degree)
//     u8 decoder_is_transpose
//     encoder pattern: u64 nnz, u64 row_ptr[in + 1], u32 col[nnz]
//     decoder pattern (only if not the transpose): same layout
//     scalars W[enc nnz], W'[dec nnz], b[K], b'[in]

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "swrec/core.hpp"
#include "swrec/dataset.hpp"
#include "swrec/structure.hpp"
#include "swrec/swdae.hpp"

namespace swrec {

inline constexpr char kModelMagic[8] = {'S', 'W', 'R', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint8_t kModelVersion = 1;

namespace detail {

inline void put_pattern(std::ostream& out, const BipartitePattern& p) {
  io::put<std::uint64_t>(out, p.nnz());
  io::put_array(out, p.row_ptr());
  io::put_array(out, p.col());
}

inline BipartitePattern get_pattern(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  const auto nnz = io::get<std::uint64_t>(in, "pattern nnz");
  auto rp = io::get_array<std::uint64_t>(in, rows + 1, "pattern row pointers");
  auto col = io::get_array<index_t>(in, nnz, "pattern columns");
  return BipartitePattern::from_csr(rows, cols, std::move(rp), std::move(col));
}

}  // namespace detail

template <class T>
void write_model(std::ostream& out, const SwDae<T>& model) {
  out.write(kModelMagic, 8);
  io::put<std::uint8_t>(out, kModelVersion);
  io::put<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
  io::put<std::uint8_t>(out, model.loss == LossKind::bernoulli ? 0 : 1);
  io::put<std::uint8_t>(out, 0);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.depth()));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.seed_lineage.size()));
  io::put_array(out, model.seed_lineage);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.manifest_id.size()));
  out.write(model.manifest_id.data(), static_cast<std::streamsize>(model.manifest_id.size()));
  for (const auto& L : model.layers) {
    io::put<std::uint64_t>(out, L.in());
    io::put<std::uint64_t>(out, L.hidden());
    io::put<std::uint64_t>(out, L.regular_degree());
    const bool tied = L.decoder_is_transpose();
    io::put<std::uint8_t>(out, tied ? 1 : 0);
    detail::put_pattern(out, *L.encoder);
    if (!tied) detail::put_pattern(out, *L.decoder);
    io::put_array(out, L.W);
    io::put_array(out, L.W_prime);
    io::put_array(out, L.b);
    io::put_array(out, L.b_prime);
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed writing model");
}

template <class T>
SwDae<T> read_model(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, kModelMagic, 8) == 0, ErrorKind::parse, "not a model file (bad magic)");
  const auto version = io::get<std::uint8_t>(in, "version");
  require(version == kModelVersion, ErrorKind::parse, "unsupported model version " + std::to_string(version));
  const auto scalar = io::get<std::uint8_t>(in, "scalar size");
  require(scalar == sizeof(T), ErrorKind::parse,
          "model stores " + std::to_string(scalar * 8) + "-bit scalars; this build uses " +
              std::to_string(sizeof(T) * 8) + "-bit");
  SwDae<T> model;
  const auto loss = io::get<std::uint8_t>(in, "loss");
  require(loss <= 1, ErrorKind::parse, "unknown loss code");
  model.loss = loss == 0 ? LossKind::bernoulli : LossKind::multinomial;
  require(io::get<std::uint8_t>(in, "activation") == 0, ErrorKind::parse, "unknown activation code");
  const auto depth = io::get<std::uint32_t>(in, "depth");
  require(depth >= 1, ErrorKind::parse, "model has no layers");
  const auto lineage = io::get<std::uint32_t>(in, "lineage count");
  model.seed_lineage = io::get_array<std::uint64_t>(in, lineage, "seed lineage");
  const auto id_len = io::get<std::uint32_t>(in, "manifest id length");
  model.manifest_id.resize(id_len);
  in.read(model.manifest_id.data(), id_len);
  require(static_cast<bool>(in), ErrorKind::parse, "truncated manifest id");
  for (std::uint32_t l = 0; l < depth; ++l) {
    DaeLayer<T> L;
    const auto rows = io::get<std::uint64_t>(in, "layer inputs");
    const auto K = io::get<std::uint64_t>(in, "layer width");
    (void)io::get<std::uint64_t>(in, "layer degree");
    const bool tied = io::get<std::uint8_t>(in, "tied flag") != 0;
    L.encoder = std::make_shared<const BipartitePattern>(detail::get_pattern(in, rows, K));
    L.decoder = tied ? L.encoder : std::make_shared<const BipartitePattern>(detail::get_pattern(in, rows, K));
    L.W = io::get_array<T>(in, L.encoder->nnz(), "encoder weights");
    L.W_prime = io::get_array<T>(in, L.decoder->nnz(), "decoder weights");
    L.b = io::get_array<T>(in, K, "hidden biases");
    L.b_prime = io::get_array<T>(in, rows, "output biases");
    if (!model.layers.empty())
      require(model.layers.back().hidden() == rows, ErrorKind::integrity, "layer widths do not chain");
    model.layers.push_back(std::move(L));
  }
  return model;
}

template <class T>
void save_model(const std::filesystem::path& p, const SwDae<T>& model) {
  auto out = io::open_out(p, true);
  write_model(out, model);
}

template <class T = real_t>
SwDae<T> load_model(const std::filesystem::path& p) {
  auto in = io::open_in(p, true);
  return read_model<T>(in);
}

template <class T>
std::string model_bytes(const SwDae<T>& model) {
  std::ostringstream s(std::ios::binary);
  write_model(s, model);
  return s.str();
}

}  // namespace swrec
