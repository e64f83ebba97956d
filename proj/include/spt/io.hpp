#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "spt/mask.hpp"
#include "spt/tensor.hpp"

namespace spt {

// Binary tensor layout, all integers little-endian:
//   "SPT1" | u32 rank | rank x u32 extent | product(extents) x f64
void write_tensor_binary(std::ostream& out, const Tensor& t);
Tensor read_tensor_binary(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Row-major CSV with 17 significant digits. Rank >= 2 tensors become
/// product(leading extents) lines of `last extent` values.
std::string tensor_to_csv(const Tensor& t);
/// A non-empty `comment` is written first as a "# ..." line.
void save_tensor_csv(const std::filesystem::path& path, const Tensor& t, std::string_view comment = {});

/// Plain PBM (P1); 1 = kept connection.
void save_pbm(const std::filesystem::path& path, const AttentionMask& mask, std::string_view comment = {});
AttentionMask load_pbm(const std::filesystem::path& path);

/// Binary PGM (P5), 8-bit. `values` is [H x W] in [0, 1]; out-of-range values clamp.
void save_pgm(const std::filesystem::path& path, const Tensor& values, std::string_view comment = {});
/// Grey levels scaled to [0, 1], shaped [1 x H x W].
Tensor load_pgm(const std::filesystem::path& path);
/// Rescales [H x W] values to [0, 1] by min-max; a constant map becomes zeros.
Tensor min_max_normalize(const Tensor& values);

/// 64-bit FNV-1a; `seed` chains several buffers into one digest.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t digest);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace spt
