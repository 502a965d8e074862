// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/codebook.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace talr {

namespace {

constexpr char kCodebookMagic[8] = {'T', 'A', 'L', 'R', 'C', 'O', 'D', 'E'};
constexpr std::uint32_t kCodebookVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path,
                       const char* field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw data_error(path + ": truncated while reading " + field + " at byte " +
                     std::to_string(static_cast<long long>(in.tellg())));
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

BinaryCodebook::BinaryCodebook(std::size_t items, std::size_t bits)
    : num_items(items), num_bits(bits), words_per_row((bits + 63) / 64),
      words(items * ((bits + 63) / 64), 0) {
  if (bits == 0) throw std::invalid_argument("BinaryCodebook: num_bits must be >= 1");
}

std::vector<double> BinaryCodebook::unpack_row(std::size_t i) const {
  std::vector<double> out(num_bits);
  for (std::size_t j = 0; j < num_bits; ++j) out[j] = bit(i, j) ? 1.0 : -1.0;
  return out;
}

BinaryCodebook binarize_and_pack(const Matrix& activations) {
  BinaryCodebook cb(activations.rows, activations.cols);
  for (std::size_t i = 0; i < activations.rows; ++i) {
    for (std::size_t j = 0; j < activations.cols; ++j) {
      const double a = activations(i, j);
      if (!std::isfinite(a))
        throw std::invalid_argument("binarize_and_pack: non-finite activation at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
      if (a > 0.0) cb.set_bit(i, j);
    }
  }
  return cb;
}

BinaryCodebook pack_sign_matrix(const Matrix& signs) {
  BinaryCodebook cb(signs.rows, signs.cols);
  for (std::size_t i = 0; i < signs.rows; ++i)
    for (std::size_t j = 0; j < signs.cols; ++j) {
      const double s = signs(i, j);
      if (s != 1.0 && s != -1.0)
        throw std::invalid_argument("pack_sign_matrix: entries must be +/-1");
      if (s > 0.0) cb.set_bit(i, j);
    }
  return cb;
}

unsigned hamming_distance(std::span<const std::uint64_t> a,
                          std::span<const std::uint64_t> b,
                          std::size_t num_bits_a, std::size_t num_bits_b) {
  if (num_bits_a != num_bits_b || a.size() != b.size())
    throw std::invalid_argument("hamming_distance: mismatched bit widths");
  unsigned sum = 0;
  for (std::size_t w = 0; w < a.size(); ++w)
    sum += static_cast<unsigned>(std::popcount(a[w] ^ b[w]));
  return sum;
}

TieGroupedRanking counting_sort_rank(std::span<const std::uint64_t> query,
                                     std::size_t query_bits,
                                     const BinaryCodebook& database,
                                     std::size_t skip_index) {
  if (query_bits != database.num_bits)
    throw std::invalid_argument("counting_sort_rank: mismatched bit widths");
  TieGroupedRanking r;
  r.groups.resize(database.num_bits + 1);

  // First pass sizes the buckets so appends never reallocate.
  std::vector<std::uint32_t> dist(database.num_items);
  std::vector<std::size_t> bucket_size(database.num_bits + 1, 0);
  for (std::size_t i = 0; i < database.num_items; ++i) {
    if (i == skip_index) continue;
    unsigned d = 0;
    const std::uint64_t* rowp = database.words.data() + i * database.words_per_row;
    for (std::size_t w = 0; w < database.words_per_row; ++w)
      d += static_cast<unsigned>(std::popcount(query[w] ^ rowp[w]));
    dist[i] = d;
    ++bucket_size[d];
  }
  for (std::size_t d = 0; d <= database.num_bits; ++d)
    r.groups[d].reserve(bucket_size[d]);
  for (std::size_t i = 0; i < database.num_items; ++i) {
    if (i == skip_index) continue;
    r.groups[dist[i]].push_back(static_cast<std::uint32_t>(i));
    ++r.total;
  }
  instrument::touch(r.total);
  return r;
}

void save_codebook(const BinaryCodebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write(kCodebookMagic, 8);
  write_u32(out, kCodebookVersion);
  write_u32(out, static_cast<std::uint32_t>(cb.num_items));
  write_u32(out, static_cast<std::uint32_t>(cb.num_bits));
  for (std::uint64_t w : cb.words) write_u64(out, w);
  if (!out) throw data_error(path + ": write failed");
}

BinaryCodebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCodebookMagic, 8) != 0)
    throw data_error(path + ": bad magic, not a TALRCODE file");
  const std::uint32_t version = read_u32(in, path, "version");
  if (version != kCodebookVersion)
    throw data_error(path + ": unsupported codebook version " +
                     std::to_string(version));
  const std::uint32_t items = read_u32(in, path, "num_items");
  const std::uint32_t bits = read_u32(in, path, "num_bits");
  if (bits == 0) throw data_error(path + ": num_bits must be >= 1");
  BinaryCodebook cb(items, bits);
  for (std::size_t k = 0; k < cb.words.size(); ++k) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in)
      throw data_error(path + ": truncated code words at byte " +
                       std::to_string(20 + 8 * static_cast<long long>(k)));
    std::uint64_t w = 0;
    for (int i = 0; i < 8; ++i) w |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    cb.words[k] = w;
  }
  return cb;
}

}  // namespace talr
