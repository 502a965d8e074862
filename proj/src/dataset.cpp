// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace talr {

namespace {

constexpr char kFeatMagic[8] = {'T', 'A', 'L', 'R', 'F', 'E', 'A', 'T'};
constexpr char kLablMagic[8] = {'T', 'A', 'L', 'R', 'L', 'A', 'B', 'L'};
constexpr std::uint32_t kFeatVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
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

bool has_magic(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  char head[8] = {0};
  in.read(head, 8);
  return in && std::memcmp(head, magic, 8) == 0;
}

float to_float_le(const unsigned char* b) {
  std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                    (static_cast<std::uint32_t>(b[1]) << 8) |
                    (static_cast<std::uint32_t>(b[2]) << 16) |
                    (static_cast<std::uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

Matrix load_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t row_cols = 0;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p)
        throw data_error(path + ": malformed CSV number in row " +
                         std::to_string(rows + 1));
      if (!std::isfinite(v))
        throw data_error(path + ": non-finite feature in row " +
                         std::to_string(rows + 1));
      values.push_back(v);
      ++row_cols;
      while (*end == ' ' || *end == '\t') ++end;
      if (*end == ',') {
        p = end + 1;
      } else if (*end == '\0' || *end == '\r') {
        break;
      } else {
        throw data_error(path + ": unexpected character in row " +
                         std::to_string(rows + 1));
      }
    }
    if (cols == 0) cols = row_cols;
    if (row_cols != cols)
      throw data_error(path + ": ragged CSV row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) throw data_error(path + ": empty feature file");
  Matrix m(rows, cols);
  m.data = std::move(values);
  return m;
}

std::vector<std::vector<int>> load_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open");
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<int> row;
    std::string token;
    std::stringstream ss(line);
    while (std::getline(ss, token, ';')) {
      std::stringstream ts(token);
      long v;
      while (ts >> v) row.push_back(static_cast<int>(v));
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    out.push_back(std::move(row));
  }
  if (out.empty()) throw data_error(path + ": empty label file");
  return out;
}

}  // namespace

int Dataset::single_label(std::size_t i) const {
  if (label_sets.empty() || label_sets[i].empty())
    throw data_error("dataset item " + std::to_string(i) + " has no label");
  return label_sets[i].front();
}

Matrix load_features(const std::string& path) {
  if (!has_magic(path, kFeatMagic)) return load_features_csv(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(8);
  const std::uint32_t version = read_u32(in, path, "version");
  if (version != kFeatVersion)
    throw data_error(path + ": unsupported feature file version " +
                     std::to_string(version));
  const std::uint32_t rows = read_u32(in, path, "rows");
  const std::uint32_t dim = read_u32(in, path, "dim");
  if (rows == 0 || dim == 0) throw data_error(path + ": empty feature matrix");
  Matrix m(rows, dim);
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim) * 4);
  for (std::size_t i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<long>(buf.size()));
    if (!in)
      throw data_error(path + ": truncated features at byte " +
                       std::to_string(20 + static_cast<long long>(i) * dim * 4));
    for (std::size_t j = 0; j < dim; ++j) {
      const float f = to_float_le(buf.data() + j * 4);
      if (!std::isfinite(f))
        throw data_error(path + ": non-finite feature at row " + std::to_string(i));
      m(i, j) = static_cast<double>(f);
    }
  }
  return m;
}

void save_features(const Matrix& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write(kFeatMagic, 8);
  write_u32(out, kFeatVersion);
  write_u32(out, static_cast<std::uint32_t>(features.rows));
  write_u32(out, static_cast<std::uint32_t>(features.cols));
  for (double v : features.data) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    unsigned char b[4] = {static_cast<unsigned char>(u),
                          static_cast<unsigned char>(u >> 8),
                          static_cast<unsigned char>(u >> 16),
                          static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw data_error(path + ": write failed");
}

std::vector<std::vector<int>> load_labels(const std::string& path) {
  if (!has_magic(path, kLablMagic)) return load_labels_csv(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(8);
  const std::uint32_t rows = read_u32(in, path, "rows");
  const std::uint32_t max_labels = read_u32(in, path, "max_labels");
  std::vector<std::vector<int>> out(rows);
  for (std::uint32_t i = 0; i < rows; ++i) {
    const std::uint32_t count = read_u32(in, path, "label count");
    if (count > max_labels)
      throw data_error(path + ": row " + std::to_string(i) +
                       " label count exceeds max_labels");
    out[i].resize(count);
    for (std::uint32_t k = 0; k < count; ++k)
      out[i][k] = static_cast<int>(read_u32(in, path, "label id"));
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

void save_labels(const std::vector<std::vector<int>>& labels,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write(kLablMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(labels.size()));
  std::size_t max_labels = 0;
  for (const auto& set : labels) max_labels = std::max(max_labels, set.size());
  write_u32(out, static_cast<std::uint32_t>(max_labels));
  for (const auto& set : labels) {
    write_u32(out, static_cast<std::uint32_t>(set.size()));
    for (int v : set) write_u32(out, static_cast<std::uint32_t>(v));
  }
  if (!out) throw data_error(path + ": write failed");
}

Standardizer Standardizer::fit(const Matrix& features) {
  Standardizer s;
  const std::size_t n = features.rows, d = features.cols;
  s.mean.assign(d, 0.0);
  s.inv_std.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += features(i, j);
  for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = features(i, j) - s.mean[j];
      var[j] += delta * delta;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    s.inv_std[j] = 1.0 / std::max(sd, 1e-12);
  }
  return s;
}

void Standardizer::apply(Matrix& features) const {
  if (features.cols != mean.size())
    throw std::invalid_argument("Standardizer: dimension mismatch");
  for (std::size_t i = 0; i < features.rows; ++i)
    for (std::size_t j = 0; j < features.cols; ++j)
      features(i, j) = (features(i, j) - mean[j]) * inv_std[j];
}

namespace {

Dataset sample_cluster_split(const std::vector<std::vector<double>>& means,
                             const std::vector<std::vector<double>>& noise_frame,
                             std::size_t count, std::size_t dim, double sigma,
                             double noise_factor, Rng& rng) {
  const std::size_t classes = means.size();
  Dataset out;
  out.features = Matrix(count, dim);
  out.label_sets.resize(count);
  // Round-robin classes for exact balance, order shuffled.
  std::vector<std::uint32_t> cls(count);
  for (std::size_t i = 0; i < count; ++i)
    cls[i] = static_cast<std::uint32_t>(i % classes);
  rng.shuffle(cls);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& mu = means[cls[i]];
    for (std::size_t j = 0; j < dim; ++j)
      out.features(i, j) = mu[j] + sigma * rng.normal();
    for (const auto& axis : noise_frame) {
      const double shift = noise_factor * sigma * rng.normal();
      for (std::size_t j = 0; j < dim; ++j)
        out.features(i, j) += shift * axis[j];
    }
    out.label_sets[i] = {static_cast<int>(cls[i])};
  }
  return out;
}

}  // namespace

namespace {

std::vector<std::vector<double>> random_orthonormal_frame(std::size_t count,
                                                          std::size_t dim,
                                                          Rng& rng) {
  std::vector<std::vector<double>> frame(count, std::vector<double>(dim, 0.0));
  for (auto& axis : frame) {
    for (double& x : axis) x = rng.normal();
    // Gram-Schmidt against the previous axes.
    for (const auto& prev : frame) {
      if (&prev == &axis) break;
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j) proj += axis[j] * prev[j];
      for (std::size_t j = 0; j < dim; ++j) axis[j] -= proj * prev[j];
    }
    double norm = 0.0;
    for (double x : axis) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw numeric_error("synth: degenerate random frame");
    for (double& x : axis) x /= norm;
  }
  return frame;
}

}  // namespace

SynthData make_synthetic_clusters(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth: classes must be >= 2");
  if (cfg.dim < cfg.classes + cfg.noise_rank)
    throw std::invalid_argument("synth: dim must be >= classes + noise_rank");
  if (!(cfg.sigma > 0.0) || !(cfg.separation > 0.0))
    throw std::invalid_argument("synth: sigma and separation must be positive");
  Rng rng(cfg.seed);

  // Cluster means sit separation * sigma along mutually orthogonal random
  // directions; centering turns them into a regular simplex with pairwise
  // mean distance sqrt(2) * separation * sigma.
  const double scale = cfg.separation * cfg.sigma;
  const auto frame = random_orthonormal_frame(cfg.classes, cfg.dim, rng);
  std::vector<double> centroid(cfg.dim, 0.0);
  for (const auto& axis : frame)
    for (std::size_t j = 0; j < cfg.dim; ++j) centroid[j] += axis[j];
  for (double& x : centroid) x /= static_cast<double>(cfg.classes);
  std::vector<std::vector<double>> means(cfg.classes,
                                         std::vector<double>(cfg.dim, 0.0));
  for (std::size_t c = 0; c < cfg.classes; ++c)
    for (std::size_t j = 0; j < cfg.dim; ++j)
      means[c][j] = scale * (frame[c][j] - centroid[j]);

  // Shared correlated-noise directions (low effective dimension per cluster).
  const auto noise_frame =
      cfg.noise_rank > 0
          ? random_orthonormal_frame(cfg.noise_rank, cfg.dim, rng)
          : std::vector<std::vector<double>>{};

  SynthData data;
  data.train = sample_cluster_split(means, noise_frame, cfg.train, cfg.dim,
                                    cfg.sigma, cfg.noise_factor, rng);
  data.query = sample_cluster_split(means, noise_frame, cfg.query, cfg.dim,
                                    cfg.sigma, cfg.noise_factor, rng);
  data.database = sample_cluster_split(means, noise_frame, cfg.database,
                                       cfg.dim, cfg.sigma, cfg.noise_factor, rng);
  return data;
}

SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": invalid JSON: " + e.what());
  }
  SplitSpec s;
  auto read_list = [&](const char* key, std::vector<std::uint32_t>& target) {
    if (!j.contains(key)) return;
    for (const auto& v : j.at(key)) target.push_back(v.get<std::uint32_t>());
  };
  read_list("train", s.train);
  read_list("query", s.query);
  read_list("database", s.database);
  return s;
}

void validate_split(const SplitSpec& split, std::size_t num_items) {
  auto check_range = [&](const std::vector<std::uint32_t>& idx, const char* name) {
    for (std::uint32_t i : idx)
      if (i >= num_items)
        throw data_error(std::string("split ") + name + " index " +
                         std::to_string(i) + " out of range");
  };
  check_range(split.train, "train");
  check_range(split.query, "query");
  check_range(split.database, "database");
  std::vector<std::uint32_t> q = split.query, d = split.database;
  std::sort(q.begin(), q.end());
  std::sort(d.begin(), d.end());
  std::vector<std::uint32_t> both;
  std::set_intersection(q.begin(), q.end(), d.begin(), d.end(),
                        std::back_inserter(both));
  if (!both.empty())
    throw data_error("split: query and database sets overlap at index " +
                     std::to_string(both.front()));
}

Dataset take_subset(const Dataset& full, const std::vector<std::uint32_t>& idx) {
  Dataset out;
  out.features = Matrix(idx.size(), full.dim());
  if (full.has_labels()) out.label_sets.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto row = full.features.row(idx[k]);
    std::copy(row.begin(), row.end(), out.features.row(k).begin());
    if (full.has_labels()) out.label_sets[k] = full.label_sets[idx[k]];
  }
  return out;
}

}  // namespace talr
