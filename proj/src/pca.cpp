#include "prefminer/pca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "prefminer/binary_io.hpp"
#include "prefminer/error.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

constexpr char kPcaMagic[9] = "PMPCA\0\0\1";
constexpr std::uint32_t kPcaVersion = 1;
constexpr std::uint32_t kFlagWhiten = 1u;

}  // namespace

FeatureMatrix FeatureMatrix::select(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string_view, Eigen::Index> index;
  for (std::size_t i = 0; i < item_ids.size(); ++i) index.emplace(item_ids[i], static_cast<Eigen::Index>(i));
  FeatureMatrix out;
  out.item_ids = ids;
  out.matrix.resize(static_cast<Eigen::Index>(ids.size()), matrix.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto it = index.find(ids[r]);
    if (it == index.end()) throw DataError("no feature vector for item '" + ids[r] + "'");
    out.matrix.row(static_cast<Eigen::Index>(r)) = matrix.row(it->second);
  }
  return out;
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_item = table.require_column("item_id");
  std::vector<std::size_t> cols;
  for (std::size_t d = 0;; ++d) {
    auto c = table.column("f_" + std::to_string(d));
    if (!c) break;
    cols.push_back(*c);
  }
  if (cols.empty()) throw DataError("'" + path.string() + "' has no feature columns f_0..");
  FeatureMatrix fm;
  fm.matrix.resize(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(cols.size()));
  fm.item_ids.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    auto where = path.string() + ":" + std::to_string(table.line_number(r)) + ": ";
    if (row.size() != table.columns().size()) throw DataError(where + "wrong number of fields");
    fm.item_ids.push_back(row[c_item]);
    for (std::size_t d = 0; d < cols.size(); ++d) {
      auto v = parse_double(row[cols[d]]);
      if (!v || !std::isfinite(*v)) throw DataError(where + "non-finite feature value in f_" + std::to_string(d));
      fm.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = *v;
    }
  }
  return fm;
}

void write_features(std::ostream& out, const FeatureMatrix& features) {
  out << "item_id";
  for (std::size_t d = 0; d < features.dim(); ++d) out << "\tf_" << d;
  out << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    out << features.item_ids[r];
    for (std::size_t d = 0; d < features.dim(); ++d)
      out << '\t' << format_double(features.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)));
    out << '\n';
  }
}

PcaModel pca_fit(const FeatureMatrix& features, const PcaTarget& target, bool whiten) {
  const Eigen::Index n = features.matrix.rows();
  const Eigen::Index d = features.matrix.cols();
  if (n < 2) throw DataError("PCA needs at least 2 rows");
  if (d < 1) throw DataError("PCA needs at least 1 feature column");
  if (!features.matrix.allFinite()) throw DataError("feature matrix has non-finite entries");
  const Eigen::Index max_k = std::min(n - 1, d);

  PcaModel model;
  model.whiten = whiten;
  model.n_samples = static_cast<std::uint64_t>(n);
  model.mean = features.matrix.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.matrix.rowwise() - model.mean.transpose();
  model.total_variance = centered.squaredNorm() / static_cast<double>(n - 1);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd variance = svd.singularValues().array().square() / static_cast<double>(n - 1);

  Eigen::Index k = 0;
  if (target.kind == PcaTarget::Kind::kComponents) {
    k = static_cast<Eigen::Index>(target.components);
    if (k < 1 || k > max_k)
      throw ConfigError("PCA component count " + std::to_string(k) + " outside [1, " + std::to_string(max_k) + "]");
  } else {
    const double v = target.variance_fraction;
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("PCA variance fraction must lie in (0, 1]");
    if (!(model.total_variance > 0.0)) throw DataError("no variance to explain");
    double cumulative = 0.0;
    k = max_k;
    for (Eigen::Index i = 0; i < max_k; ++i) {
      cumulative += variance(i) / model.total_variance;
      if (cumulative >= v - 1e-12) {
        k = i + 1;
        break;
      }
    }
  }

  model.components = svd.matrixV().leftCols(k).transpose();
  for (Eigen::Index r = 0; r < k; ++r) {
    Eigen::Index arg = 0;
    model.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (model.components(r, arg) < 0.0) model.components.row(r) *= -1.0;
  }
  model.explained_variance = variance.head(k);
  model.explained_variance_ratio = model.total_variance > 0.0
                                       ? Eigen::VectorXd(model.explained_variance / model.total_variance)
                                       : Eigen::VectorXd::Zero(k);
  return model;
}

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& features, unsigned threads) {
  if (features.dim() != model.input_dim())
    throw DataError("feature dimension " + std::to_string(features.dim()) + " does not match PCA input dimension " +
                    std::to_string(model.input_dim()));
  FeatureMatrix out;
  out.item_ids = features.item_ids;
  const Eigen::Index n = features.matrix.rows();
  out.matrix.resize(n, model.components.rows());
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(model.components.rows());
  if (model.whiten)
    for (Eigen::Index j = 0; j < scale.size(); ++j)
      if (model.explained_variance(j) > 0.0) scale(j) = 1.0 / std::sqrt(model.explained_variance(j));

  const Eigen::MatrixXd basis = model.components.transpose();
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(n), threads));
  parallel_shards(shards, threads, [&](std::size_t s) {
    const Eigen::Index begin = n * static_cast<Eigen::Index>(s) / static_cast<Eigen::Index>(shards);
    const Eigen::Index end = n * static_cast<Eigen::Index>(s + 1) / static_cast<Eigen::Index>(shards);
    if (end <= begin) return;
    // Row by row, so the arithmetic does not depend on how rows are sharded.
    Eigen::VectorXd centered(model.mean.size());
    for (Eigen::Index r = begin; r < end; ++r) {
      centered = features.matrix.row(r).transpose() - model.mean;
      for (Eigen::Index j = 0; j < basis.cols(); ++j) out.matrix(r, j) = basis.col(j).dot(centered) * scale(j);
    }
  });
  return out;
}

Eigen::MatrixXd pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& reduced) {
  Eigen::MatrixXd z = reduced;
  if (model.whiten) z = z * model.explained_variance.cwiseSqrt().asDiagonal();
  Eigen::MatrixXd x = z * model.components;
  x.rowwise() += model.mean.transpose();
  return x;
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
  auto out = open_output(path);
  out.write(kPcaMagic, 8);
  binio::put<std::uint32_t>(out, kPcaVersion);
  binio::put<std::uint32_t>(out, model.whiten ? kFlagWhiten : 0u);
  binio::put<std::uint64_t>(out, model.input_dim());
  binio::put<std::uint64_t>(out, model.output_dim());
  binio::put<std::uint64_t>(out, model.n_samples);
  binio::put<double>(out, model.total_variance);
  binio::put_doubles(out, model.mean.data(), model.input_dim());
  // Eigen is column-major; write rows explicitly.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = model.components;
  binio::put_doubles(out, rows.data(), static_cast<std::size_t>(rows.size()));
  binio::put_doubles(out, model.explained_variance.data(), model.output_dim());
  binio::put_doubles(out, model.explained_variance_ratio.data(), model.output_dim());
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

PcaModel load_pca(const std::filesystem::path& path) {
  auto in = open_input(path);
  binio::expect_magic(in, kPcaMagic, "PCA model");
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kPcaVersion) throw DataError("unsupported PCA model version " + std::to_string(version));
  PcaModel model;
  model.whiten = (binio::get<std::uint32_t>(in) & kFlagWhiten) != 0;
  const auto d = binio::get<std::uint64_t>(in);
  const auto k = binio::get<std::uint64_t>(in);
  if (d == 0 || k == 0 || k > d || d > (1u << 24)) throw DataError("corrupt PCA model header");
  model.n_samples = binio::get<std::uint64_t>(in);
  model.total_variance = binio::get<double>(in);
  model.mean.resize(static_cast<Eigen::Index>(d));
  binio::get_doubles(in, model.mean.data(), d);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(static_cast<Eigen::Index>(k),
                                                                              static_cast<Eigen::Index>(d));
  binio::get_doubles(in, rows.data(), k * d);
  model.components = rows;
  model.explained_variance.resize(static_cast<Eigen::Index>(k));
  model.explained_variance_ratio.resize(static_cast<Eigen::Index>(k));
  binio::get_doubles(in, model.explained_variance.data(), k);
  binio::get_doubles(in, model.explained_variance_ratio.data(), k);
  return model;
}

}  // namespace prefminer
