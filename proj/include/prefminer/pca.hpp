#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace prefminer {

// N x D matrix of per-item embeddings, row-aligned with item_ids.
struct FeatureMatrix {
  std::vector<std::string> item_ids;
  Eigen::MatrixXd matrix;

  std::size_t rows() const { return static_cast<std::size_t>(matrix.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }

  // Rows whose item_id is in `ids`, in the order of `ids`. Unknown ids throw DataError.
  FeatureMatrix select(const std::vector<std::string>& ids) const;
};

// features.tsv: header "item_id f_0 ... f_{D-1}"; other columns are ignored, so a catalog
// with feature columns reads as a feature file.
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(std::ostream& out, const FeatureMatrix& features);

struct PcaTarget {
  enum class Kind { kComponents, kVarianceFraction } kind = Kind::kComponents;
  std::size_t components = 0;
  double variance_fraction = 0.0;

  static PcaTarget k(std::size_t k) { return {Kind::kComponents, k, 0.0}; }
  static PcaTarget variance(double v) { return {Kind::kVarianceFraction, 0, v}; }
};

struct PcaModel {
  Eigen::VectorXd mean;                      // D
  Eigen::MatrixXd components;                // K x D, orthonormal rows
  Eigen::VectorXd explained_variance;        // K, non-increasing
  Eigen::VectorXd explained_variance_ratio;  // K
  double total_variance = 0.0;
  std::uint64_t n_samples = 0;
  bool whiten = false;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }
  double cumulative_ratio() const { return explained_variance_ratio.sum(); }
};

// Thin SVD of the mean-centred data. Variances use the N-1 denominator and ratios divide by the
// total variance of the centred data. Each component is signed so its largest-magnitude entry is
// positive.
PcaModel pca_fit(const FeatureMatrix& features, const PcaTarget& target, bool whiten = false);

// Rows become components * (x - mean), divided by sqrt(explained_variance) when whitening.
FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& features, unsigned threads = 1);

// Inverse of pca_transform (exact when K = D).
Eigen::MatrixXd pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& reduced);

// Little-endian binary: magic "PMPCA\0\0\1", u32 version, u32 flags, u64 D, u64 K, u64 N,
// f64 total_variance, f64 mean[D], f64 components[K*D] (row-major), f64 variance[K], f64 ratio[K].
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace prefminer
