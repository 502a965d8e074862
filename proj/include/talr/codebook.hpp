// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "talr/common.hpp"

namespace talr {

/// Packed binary codes, one row per item. Bit value 1 encodes code element +1
/// and bit value 0 encodes -1. Packing is little-endian within 64-bit words,
/// row-major; unused tail bits of the last word of a row are zero.
struct BinaryCodebook {
  std::size_t num_items = 0;
  std::size_t num_bits = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> words;

  BinaryCodebook() = default;
  BinaryCodebook(std::size_t items, std::size_t bits);

  std::span<const std::uint64_t> row(std::size_t i) const {
    return {words.data() + i * words_per_row, words_per_row};
  }
  std::span<std::uint64_t> row(std::size_t i) {
    return {words.data() + i * words_per_row, words_per_row};
  }

  int bit(std::size_t item, std::size_t j) const {
    return static_cast<int>((words[item * words_per_row + j / 64] >> (j % 64)) & 1u);
  }
  void set_bit(std::size_t item, std::size_t j) {
    words[item * words_per_row + j / 64] |= std::uint64_t{1} << (j % 64);
  }

  /// Row as a +/-1 vector.
  std::vector<double> unpack_row(std::size_t i) const;
};

/// Thresholds activations at zero and packs the signs. sgn(0) := -1 so that
/// repeated runs binarize identically. Rejects non-finite inputs.
BinaryCodebook binarize_and_pack(const Matrix& activations);

/// Packs an explicit +/-1 matrix (entries must be exactly +1 or -1).
BinaryCodebook pack_sign_matrix(const Matrix& signs);

/// Hamming distance between two packed rows of equal width.
unsigned hamming_distance(std::span<const std::uint64_t> a,
                          std::span<const std::uint64_t> b,
                          std::size_t num_bits_a, std::size_t num_bits_b);

inline unsigned hamming_distance(const BinaryCodebook& a, std::size_t i,
                                 const BinaryCodebook& b, std::size_t j) {
  return hamming_distance(a.row(i), b.row(j), a.num_bits, b.num_bits);
}

/// The ranking of a database against one query, bucketed into the b+1 ties.
/// groups[d] holds the database indices at Hamming distance exactly d, in
/// ascending index order.
struct TieGroupedRanking {
  std::vector<std::vector<std::uint32_t>> groups;
  std::size_t total = 0;

  std::size_t num_bins() const { return groups.size(); }
};

/// Counting sort of the database by Hamming distance to the query; O(bN).
/// skip_index (when given) leaves that database row out of the ranking, which
/// is the in-batch retrieval convention where an item never queries itself.
TieGroupedRanking counting_sort_rank(std::span<const std::uint64_t> query,
                                     std::size_t query_bits,
                                     const BinaryCodebook& database,
                                     std::size_t skip_index = kNoSkip);

/// Codebook file io. Format: magic "TALRCODE", u32 version=1, u32 num_items,
/// u32 num_bits, then little-endian u64 words row-major.
void save_codebook(const BinaryCodebook& cb, const std::string& path);
BinaryCodebook load_codebook(const std::string& path);

}  // namespace talr
