#include "spt/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "spt/errors.hpp"

namespace spt {
namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  if (!in) throw ValidationError("truncated binary tensor");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

// Next whitespace-delimited netpbm header token, skipping "#" comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

void write_comment(std::ostream& out, std::string_view comment) {
  if (comment.empty()) return;
  std::istringstream lines{std::string(comment)};
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
}

}  // namespace

void write_tensor_binary(std::ostream& out, const Tensor& t) {
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put_f64(out, v);
}

Tensor read_tensor_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw ValidationError("not an SPT1 tensor stream");
  const auto rank = static_cast<std::size_t>(get_le(in, 4));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get_le(in, 4));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<double>(get_le(in, 8));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  auto out = open_out(path, true);
  write_tensor_binary(out, t);
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  try {
    return read_tensor_binary(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string tensor_to_csv(const Tensor& t) {
  const std::size_t cols = t.rank() == 0 ? 1 : t.shape().back();
  std::string out;
  std::array<char, 40> buf{};
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf.data(), buf.size(), "%.17g", t[i]);
    out += buf.data();
    out += (i + 1) % cols == 0 ? '\n' : ',';
  }
  return out;
}

void save_tensor_csv(const std::filesystem::path& path, const Tensor& t, std::string_view comment) {
  auto out = open_out(path, false);
  write_comment(out, comment);
  out << tensor_to_csv(t);
  if (!out) throw IoError("failed writing " + path.string());
}

void save_pbm(const std::filesystem::path& path, const AttentionMask& mask, std::string_view comment) {
  auto out = open_out(path, false);
  out << "P1\n";
  write_comment(out, comment);
  out << mask.cols() << ' ' << mask.rows() << '\n';
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      if (c) out << ' ';
      out << (mask.at(r, c) ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

AttentionMask load_pbm(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  if (next_token(in) != "P1") throw ValidationError(path.string() + ": not a plain PBM file");
  const auto cols = std::stoul(next_token(in));
  const auto rows = std::stoul(next_token(in));
  std::vector<std::uint8_t> bits;
  bits.reserve(rows * cols);
  int ch = 0;
  while (bits.size() < rows * cols && (ch = in.get()) != EOF) {
    if (ch == '0' || ch == '1') bits.push_back(static_cast<std::uint8_t>(ch - '0'));
  }
  if (bits.size() != rows * cols) throw ValidationError(path.string() + ": truncated PBM payload");
  return AttentionMask::from_bits(rows, cols, std::move(bits));
}

void save_pgm(const std::filesystem::path& path, const Tensor& values, std::string_view comment) {
  if (values.rank() != 2) throw DimensionError("save_pgm: expected [H x W], got " + shape_to_string(values.shape()));
  auto out = open_out(path, true);
  out << "P5\n";
  write_comment(out, comment);
  out << values.dim(1) << ' ' << values.dim(0) << "\n255\n";
  std::vector<char> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  if (next_token(in) != "P5") throw ValidationError(path.string() + ": not a binary PGM file");
  const auto width = std::stoul(next_token(in));
  const auto height = std::stoul(next_token(in));
  const auto maxval = std::stoul(next_token(in));
  if (maxval == 0 || maxval > 255) throw ValidationError(path.string() + ": unsupported PGM maxval");
  std::vector<unsigned char> bytes(width * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ValidationError(path.string() + ": truncated PGM payload");
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / static_cast<double>(maxval);
  return Tensor({1, height, width}, std::move(data));
}

Tensor min_max_normalize(const Tensor& values) {
  const auto [lo, hi] = std::minmax_element(values.data().begin(), values.data().end());
  const double low = *lo, range = *hi - *lo;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - low) / range;
  }
  return Tensor(values.shape(), std::move(out));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed) {
  return fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                 seed);
}

std::string hex_digest(std::uint64_t digest) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(digest));
  return buf.data();
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path, true);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace spt
