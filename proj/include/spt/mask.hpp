#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spt {

/// Binary rows x cols matrix gating attention connections.
///
/// Every row keeps at least one connection; construction rejects a mask
/// that would leave a softmax row without support.
class AttentionMask {
 public:
  AttentionMask() = default;

  static AttentionMask ones(std::size_t rows, std::size_t cols);
  static AttentionMask identity(std::size_t n);
  /// Throws DimensionError on a size mismatch, DegenerateRowError on an empty row.
  static AttentionMask from_bits(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool at(std::size_t row, std::size_t col) const { return bits_[row * cols_ + col] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return std::span<const std::uint8_t>(bits_).subspan(r * cols_, cols_);
  }
  std::size_t row_support(std::size_t r) const { return row_support_[r]; }
  std::span<const std::size_t> row_supports() const noexcept { return row_support_; }
  std::size_t total_support() const noexcept;
  bool all_ones() const noexcept;

  /// True when every set bit here is also set in `other`.
  bool is_subset_of(const AttentionMask& other) const;

  /// Copy with the square block starting at (offset, offset) replaced by `block`.
  AttentionMask with_block(std::size_t offset, const AttentionMask& block) const;
  /// The square block of extent `size` starting at (offset, offset).
  AttentionMask block(std::size_t offset, std::size_t size) const;

  friend bool operator==(const AttentionMask& a, const AttentionMask& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.bits_ == b.bits_;
  }

 private:
  AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> row_support_;
};

}  // namespace spt
