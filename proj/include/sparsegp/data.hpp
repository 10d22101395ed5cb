#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparsegp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Per-column affine maps applied to a dataset, kept so predictions can be
/// mapped back to original units (original = standardized * scale + mean).
struct Standardization {
  bool applied = false;
  Vector x_mean, x_scale;
  bool y_applied = false;
  Vector y_mean, y_scale;
};

struct Dataset {
  std::string name;
  Matrix X;
  Matrix y;  // N x P; class indices for classification
  Standardization standardization;
  std::string hash;        // SHA-256 of the source bytes
  Index rows_rejected = 0;  // rows dropped for missing cells

  Index size() const { return X.rows(); }
};

struct CsvSchema {
  bool header = true;
  /// Target column; negative counts from the end (-1 = last).
  int target_column = -1;
  /// False for feature-only files; y is then N x 0.
  bool has_target = true;
  /// Columns ignored entirely (after resolving negatives).
  std::vector<int> drop_columns;
};

/// Comma-separated numeric file. Empty cells and NA/NaN/? count as missing
/// and reject their row; any other unparseable cell is an error naming the
/// row and column.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

struct SplitOptions {
  bool standardize_x = true;
  bool standardize_y = true;  // turn off for class labels
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Seeded permutation split; standardization is fit on the training rows
/// and applied to both halves.
Split split(const Dataset& ds, double test_fraction, std::uint64_t seed, const SplitOptions& opts = {});

/// Fits and applies column standardization in place (constant columns keep
/// scale 1).
Standardization standardize(Matrix& m);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::string& path);
/// Hash of the raw bytes of a matrix, for generated datasets.
std::string matrix_sha256(const Matrix& m);

/// Directory holding bundled data: $SPARSEGP_DATA_DIR or the build-time default.
std::string data_dir();

struct ManifestEntry {
  std::string name;
  std::string path;  // relative to data_dir()
  Index n = 0;
  Index d = 0;
  std::string sha256;  // empty = not pinned
  bool bundled = false;
  std::string note;
};

std::vector<ManifestEntry> load_manifest();
std::optional<ManifestEntry> manifest_entry(const std::string& name);
/// Loads a manifest dataset, checking its shape and (if pinned) its hash.
/// Throws DataError when the file is missing.
Dataset load_named(const std::string& name);
bool dataset_available(const std::string& name);

/// The bundled 1-D Snelson-style regression set. Loads snelson_canonical.csv
/// when a user has supplied it, otherwise the bundled stand-in.
Dataset snelson();
bool snelson_is_canonical();

/// Deterministic generator behind the bundled Snelson stand-in.
Dataset snelson_standin(std::uint64_t seed = 7);

/// Smooth nonlinear regression in D dimensions with Gaussian noise.
Dataset synthetic_regression(Index n, Index d, std::uint64_t seed, double noise_sd = 0.2);

/// 2-D inputs labelled by the argmax of C latent smooth functions plus noise.
Dataset synthetic_classification(Index n, int num_classes, std::uint64_t seed);

/// Three-cluster, P-dimensional observations generated from a 2-D latent
/// space through a nonlinear map (oil-flow stand-in). y holds cluster labels;
/// X holds the observations.
Dataset oilflow_surrogate(Index n, Index p, std::uint64_t seed);

/// Writes X and y as CSV with a header (x0.., y0..).
void save_csv(const std::string& path, const Dataset& ds);

}  // namespace sparsegp
