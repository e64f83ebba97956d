#include "spt/mask.hpp"

#include <numeric>
#include <string>

#include "spt/errors.hpp"

namespace spt {

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)), row_support_(rows, 0) {
  for (std::size_t r = 0; r < rows_; ++r) {
    std::size_t support = 0;
    for (std::size_t c = 0; c < cols_; ++c) {
      auto& b = bits_[r * cols_ + c];
      b = b != 0 ? 1 : 0;
      support += b;
    }
    if (support == 0) {
      throw DegenerateRowError("attention mask row " + std::to_string(r) + " has no support");
    }
    row_support_[r] = support;
  }
}

AttentionMask AttentionMask::ones(std::size_t rows, std::size_t cols) {
  return AttentionMask(rows, cols, std::vector<std::uint8_t>(rows * cols, 1));
}

AttentionMask AttentionMask::identity(std::size_t n) {
  std::vector<std::uint8_t> bits(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) bits[i * n + i] = 1;
  return AttentionMask(n, n, std::move(bits));
}

AttentionMask AttentionMask::from_bits(std::size_t rows, std::size_t cols,
                                       std::vector<std::uint8_t> bits) {
  if (bits.size() != rows * cols) {
    throw DimensionError("mask bits length " + std::to_string(bits.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return AttentionMask(rows, cols, std::move(bits));
}

std::size_t AttentionMask::total_support() const noexcept {
  return std::accumulate(row_support_.begin(), row_support_.end(), std::size_t{0});
}

bool AttentionMask::all_ones() const noexcept { return total_support() == rows_ * cols_; }

bool AttentionMask::is_subset_of(const AttentionMask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

AttentionMask AttentionMask::with_block(std::size_t offset, const AttentionMask& block) const {
  if (block.rows_ != block.cols_ || offset + block.rows_ > rows_ || offset + block.cols_ > cols_) {
    throw DimensionError("mask block of " + std::to_string(block.rows_) + "x" +
                         std::to_string(block.cols_) + " at offset " + std::to_string(offset) +
                         " does not fit a " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " mask");
  }
  auto bits = bits_;
  for (std::size_t r = 0; r < block.rows_; ++r) {
    for (std::size_t c = 0; c < block.cols_; ++c) {
      bits[(offset + r) * cols_ + offset + c] = block.bits_[r * block.cols_ + c];
    }
  }
  return AttentionMask(rows_, cols_, std::move(bits));
}

AttentionMask AttentionMask::block(std::size_t offset, std::size_t size) const {
  if (offset + size > rows_ || offset + size > cols_) {
    throw DimensionError("mask block out of range");
  }
  std::vector<std::uint8_t> bits(size * size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      bits[r * size + c] = bits_[(offset + r) * cols_ + offset + c];
    }
  }
  return AttentionMask(size, size, std::move(bits));
}

}  // namespace spt
