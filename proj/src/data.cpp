#include "sparsegp/data.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#ifndef SPARSEGP_DEFAULT_DATA_DIR
#define SPARSEGP_DEFAULT_DATA_DIR "data"
#endif

namespace sparsegp {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string t = s.substr(b, e - b);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_missing(const std::string& cell) {
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan" || lower == "?";
}

int resolve(int col, int ncols) { return col < 0 ? ncols + col : col; }

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

std::string matrix_sha256(const Matrix& m) {
  std::string bytes(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  bytes += std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  return sha256_hex(bytes);
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string line;
  std::vector<std::vector<double>> rows;
  int ncols = -1;
  Index rejected = 0;
  Index lineno = 0;
  bool header_pending = schema.header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (header_pending) {
      header_pending = false;
      ncols = static_cast<int>(cells.size());
      continue;
    }
    if (ncols < 0) ncols = static_cast<int>(cells.size());
    if (static_cast<int>(cells.size()) != ncols) {
      throw DataError(path + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                      " columns, expected " + std::to_string(ncols));
    }
    std::vector<double> vals(cells.size());
    bool missing = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (is_missing(cells[c])) {
        missing = true;
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || !std::isfinite(v)) {
        throw DataError(path + ": cannot parse '" + cells[c] + "' at line " + std::to_string(lineno) +
                        ", column " + std::to_string(c + 1));
      }
      vals[c] = v;
    }
    if (missing) {
      ++rejected;
      continue;
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  const int target = schema.has_target ? resolve(schema.target_column, ncols) : -1;
  if (schema.has_target && (target < 0 || target >= ncols)) throw InputError("load_csv: target column out of range");
  std::vector<int> features;
  for (int c = 0; c < ncols; ++c) {
    if (c == target) continue;
    bool dropped = false;
    for (int d : schema.drop_columns) dropped = dropped || resolve(d, ncols) == c;
    if (!dropped) features.push_back(c);
  }

  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();
  ds.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(features.size()));
  ds.y.resize(static_cast<Index>(rows.size()), schema.has_target ? 1 : 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t f = 0; f < features.size(); ++f) ds.X(r, f) = rows[r][features[f]];
    if (schema.has_target) ds.y(r, 0) = rows[r][target];
  }
  ds.hash = sha256_hex(bytes);
  ds.rows_rejected = rejected;
  return ds;
}

Standardization standardize(Matrix& m) {
  Standardization s;
  s.applied = true;
  const double n = static_cast<double>(m.rows());
  s.x_mean = m.colwise().mean().transpose();
  s.x_scale.resize(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - s.x_mean(c)).square().sum() / n;
    s.x_scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
    m.col(c) = ((m.col(c).array() - s.x_mean(c)) / s.x_scale(c)).matrix();
  }
  return s;
}

Split split(const Dataset& ds, double test_fraction, std::uint64_t seed, const SplitOptions& opts) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("split: fraction must be in (0, 1)");
  const Index n = ds.size();
  const Index n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n) throw InputError("split: degenerate train/test sizes");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  Split out;
  auto take = [&](Index begin, Index count, Dataset& part, const std::string& suffix) {
    part.name = ds.name + suffix;
    part.hash = ds.hash;
    part.X.resize(count, ds.X.cols());
    part.y.resize(count, ds.y.cols());
    for (Index i = 0; i < count; ++i) {
      part.X.row(i) = ds.X.row(perm[begin + i]);
      part.y.row(i) = ds.y.row(perm[begin + i]);
    }
  };
  take(0, n - n_test, out.train, "/train");
  take(n - n_test, n_test, out.test, "/test");

  Standardization st;
  if (opts.standardize_x) {
    Standardization sx = standardize(out.train.X);
    st.applied = true;
    st.x_mean = sx.x_mean;
    st.x_scale = sx.x_scale;
    out.test.X = (out.test.X.rowwise() - st.x_mean.transpose()).array().rowwise() / st.x_scale.transpose().array();
  }
  if (opts.standardize_y) {
    Standardization sy = standardize(out.train.y);
    st.y_applied = true;
    st.y_mean = sy.x_mean;
    st.y_scale = sy.x_scale;
    out.test.y = (out.test.y.rowwise() - st.y_mean.transpose()).array().rowwise() / st.y_scale.transpose().array();
  }
  out.train.standardization = st;
  out.test.standardization = st;
  return out;
}

std::string data_dir() {
  if (const char* env = std::getenv("SPARSEGP_DATA_DIR"); env && *env) return env;
  return SPARSEGP_DEFAULT_DATA_DIR;
}

std::vector<ManifestEntry> load_manifest() {
  const std::string path = (std::filesystem::path(data_dir()) / "manifest.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "' is malformed: " + e.what());
  }
  std::vector<ManifestEntry> out;
  for (const auto& e : j.at("datasets")) {
    ManifestEntry m;
    m.name = e.at("name").get<std::string>();
    m.path = e.at("path").get<std::string>();
    m.n = e.at("n").get<Index>();
    m.d = e.at("d").get<Index>();
    m.sha256 = e.value("sha256", "");
    m.bundled = e.value("bundled", false);
    m.note = e.value("note", "");
    out.push_back(std::move(m));
  }
  return out;
}

std::optional<ManifestEntry> manifest_entry(const std::string& name) {
  for (auto& e : load_manifest())
    if (e.name == name) return e;
  return std::nullopt;
}

bool dataset_available(const std::string& name) {
  const auto e = manifest_entry(name);
  return e && std::filesystem::exists(std::filesystem::path(data_dir()) / e->path);
}

Dataset load_named(const std::string& name) {
  const auto e = manifest_entry(name);
  if (!e) throw DataError("dataset '" + name + "' is not in the manifest");
  const std::string path = (std::filesystem::path(data_dir()) / e->path).string();
  if (!std::filesystem::exists(path)) {
    throw DataError("dataset '" + name + "' expects a CSV at " + path + " (" + std::to_string(e->n) +
                    " rows, " + std::to_string(e->d) + " features + target)");
  }
  Dataset ds = load_csv(path);
  ds.name = name;
  if (!e->sha256.empty() && ds.hash != e->sha256) {
    throw DataError("dataset '" + name + "' hash " + ds.hash + " does not match the manifest");
  }
  if (ds.size() + ds.rows_rejected != e->n || ds.X.cols() != e->d) {
    throw DataError("dataset '" + name + "' has shape " + std::to_string(ds.size()) + "x" +
                    std::to_string(ds.X.cols()) + ", manifest expects " + std::to_string(e->n) + "x" +
                    std::to_string(e->d));
  }
  return ds;
}

bool snelson_is_canonical() { return dataset_available("snelson_canonical"); }

Dataset snelson() {
  if (snelson_is_canonical()) return load_named("snelson_canonical");
  return load_named("snelson");
}

Dataset snelson_standin(std::uint64_t seed) {
  // 200 inputs on roughly [0, 6] with a wiggly, amplitude-varying response.
  const Index n = 200;
  Dataset ds;
  ds.name = "snelson";
  ds.X.resize(n, 1);
  ds.y.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double x = 6.0 * counter_uniform(hash_key(seed, 1, static_cast<std::uint64_t>(i)));
    const double f = std::sin(2.2 * x) * (0.6 + 0.25 * x) * std::exp(-0.08 * x) + 0.35 * std::cos(0.9 * x) - 0.2;
    ds.X(i, 0) = x;
    ds.y(i, 0) = f + 0.33 * counter_normal(seed, 2, static_cast<std::uint64_t>(i));
  }
  ds.hash = matrix_sha256(ds.X) + matrix_sha256(ds.y);
  return ds;
}

Dataset synthetic_regression(Index n, Index d, std::uint64_t seed, double noise_sd) {
  Dataset ds;
  ds.name = "synthetic_regression";
  ds.X.resize(n, d);
  ds.y.resize(n, 1);
  Vector w(d);
  for (Index j = 0; j < d; ++j) w(j) = 0.5 + counter_uniform(hash_key(seed, 9, static_cast<std::uint64_t>(j)));
  for (Index i = 0; i < n; ++i) {
    double f = 0.0;
    for (Index j = 0; j < d; ++j) {
      ds.X(i, j) = 4.0 * counter_uniform(hash_key(seed, 1, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j))) - 2.0;
      f += std::sin(w(j) * 1.7 * ds.X(i, j) + static_cast<double>(j));
    }
    if (d > 1) f += 0.5 * ds.X(i, 0) * ds.X(i, 1);
    ds.y(i, 0) = f + noise_sd * counter_normal(seed, 2, static_cast<std::uint64_t>(i));
  }
  ds.hash = matrix_sha256(ds.X);
  return ds;
}

Dataset synthetic_classification(Index n, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw InputError("synthetic_classification: need at least two classes");
  Dataset ds;
  ds.name = "synthetic_classification";
  ds.X.resize(n, 2);
  ds.y.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double a = 6.0 * counter_uniform(hash_key(seed, 1, static_cast<std::uint64_t>(i), 0)) - 3.0;
    const double b = 6.0 * counter_uniform(hash_key(seed, 1, static_cast<std::uint64_t>(i), 1)) - 3.0;
    ds.X(i, 0) = a;
    ds.X(i, 1) = b;
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < num_classes; ++c) {
      const double angle = 2.0 * 3.14159265358979 * c / num_classes;
      const double score = std::sin(1.3 * a + angle) + std::cos(1.1 * b - angle) + 0.4 * (a * std::cos(angle) + b * std::sin(angle)) +
                           0.5 * counter_normal(seed, 3, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c));
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    ds.y(i, 0) = best;
  }
  ds.hash = matrix_sha256(ds.X) + matrix_sha256(ds.y);
  return ds;
}

Dataset oilflow_surrogate(Index n, Index p, std::uint64_t seed) {
  Dataset ds;
  ds.name = "oilflow_surrogate";
  ds.X.resize(n, p);
  ds.y.resize(n, 1);
  const double centers[3][2] = {{-1.5, -0.8}, {1.5, -0.8}, {0.0, 1.4}};
  Matrix w(2, p), phase(1, p);
  for (Index j = 0; j < p; ++j) {
    w(0, j) = counter_normal(seed, 11, static_cast<std::uint64_t>(j), 0);
    w(1, j) = counter_normal(seed, 11, static_cast<std::uint64_t>(j), 1);
    phase(0, j) = 6.283185307179586 * counter_uniform(hash_key(seed, 12, static_cast<std::uint64_t>(j)));
  }
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    const double z0 = centers[c][0] + 0.35 * counter_normal(seed, 13, static_cast<std::uint64_t>(i), 0);
    const double z1 = centers[c][1] + 0.35 * counter_normal(seed, 13, static_cast<std::uint64_t>(i), 1);
    for (Index j = 0; j < p; ++j) {
      const double lin = w(0, j) * z0 + w(1, j) * z1;
      ds.X(i, j) = std::tanh(0.8 * lin) + 0.3 * std::sin(lin + phase(0, j)) +
                   0.05 * counter_normal(seed, 14, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    }
    ds.y(i, 0) = c;
  }
  ds.hash = matrix_sha256(ds.X);
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (Index j = 0; j < ds.X.cols(); ++j) out << (j ? "," : "") << "x" << j;
  for (Index j = 0; j < ds.y.cols(); ++j) out << ",y" << j;
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.X.cols(); ++j) out << (j ? "," : "") << ds.X(i, j);
    for (Index j = 0; j < ds.y.cols(); ++j) out << ',' << ds.y(i, j);
    out << '\n';
  }
}

}  // namespace sparsegp
