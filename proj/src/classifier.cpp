#include "prefminer/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "prefminer/binary_io.hpp"
#include "prefminer/error.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/rng.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

constexpr char kModelMagic[9] = "PMCLF\0\0\1";
constexpr std::uint32_t kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void require_both_classes(const LabeledData& data, const std::string& what) {
  const auto pos = data.positives();
  if (pos == 0 || pos == data.size()) throw DataError(what + " needs at least one example of each class");
}

}  // namespace

// ---- data ---------------------------------------------------------------------------------

std::size_t LabeledData::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

LabeledData LabeledData::rows(const std::vector<std::size_t>& idx) const {
  LabeledData out;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.item_ids.push_back(item_ids[idx[r]]);
    out.labels.push_back(labels[idx[r]]);
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

LabeledData join_labels(const std::vector<LabeledExample>& labels, const FeatureMatrix& features) {
  std::vector<std::string> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) ids.push_back(l.item_id);
  auto selected = features.select(ids);
  LabeledData out;
  out.item_ids = std::move(selected.item_ids);
  out.features = std::move(selected.matrix);
  for (const auto& l : labels) out.labels.push_back(l.label == Label::kPositive ? 1 : 0);
  return out;
}

void write_labeled_features(std::ostream& out, const LabeledData& data) {
  out << "item_id\tlabel";
  for (Eigen::Index d = 0; d < data.features.cols(); ++d) out << "\tf_" << d;
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    out << data.item_ids[r] << '\t' << data.labels[r];
    for (Eigen::Index d = 0; d < data.features.cols(); ++d)
      out << '\t' << format_double(data.features(static_cast<Eigen::Index>(r), d));
    out << '\n';
  }
}

LabeledData read_labeled_features(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_label = table.require_column("label");
  table.require_column("item_id");
  auto fm = read_features(path);
  LabeledData out;
  out.item_ids = std::move(fm.item_ids);
  out.features = std::move(fm.matrix);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& v = table.row(r)[c_label];
    if (v != "0" && v != "1")
      throw DataError(path.string() + ":" + std::to_string(table.line_number(r)) + ": label must be 0 or 1");
    out.labels.push_back(v == "1" ? 1 : 0);
  }
  return out;
}

// ---- splitting ----------------------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
  if (f.train < 0.0 || f.validation < 0.0 || f.test < 0.0 || std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  const double dn = static_cast<double>(n);
  SplitSizes s;
  s.validation = static_cast<std::size_t>(std::floor(dn * f.validation + 1e-9));
  s.test = static_cast<std::size_t>(std::floor(dn * f.test + 1e-9));
  s.train = n - s.validation - s.test;
  return s;
}

LabeledData Dataset::subset(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == split) idx.push_back(i);
  return data.rows(idx);
}

SplitSizes Dataset::sizes() const {
  SplitSizes s;
  for (auto t : tags) ++(t == Split::kTrain ? s.train : t == Split::kValidation ? s.validation : s.test);
  return s;
}

Dataset split_dataset(LabeledData data, const SplitFractions& fractions, std::uint64_t seed) {
  const std::size_t n = data.size();
  const SplitSizes total = split_sizes(n, fractions);

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) {
    if (data.labels[i] != 0 && data.labels[i] != 1) throw DataError("labels must be 0 or 1");
    by_class[data.labels[i]].push_back(i);
  }

  // Largest-remainder apportionment of one split's size across the two classes.
  auto apportion = [&](std::size_t size) {
    std::array<std::size_t, 2> share{};
    std::array<double, 2> frac{};
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
      const double exact = static_cast<double>(size) * static_cast<double>(by_class[c].size()) / static_cast<double>(n);
      share[c] = static_cast<std::size_t>(std::floor(exact));
      frac[c] = exact - static_cast<double>(share[c]);
      assigned += share[c];
    }
    if (assigned < size) ++share[frac[1] > frac[0] ? 1 : 0];
    return share;
  };
  const auto val_share = n ? apportion(total.validation) : std::array<std::size_t, 2>{};
  const auto test_share = n ? apportion(total.test) : std::array<std::size_t, 2>{};

  Dataset ds;
  ds.fractions = fractions;
  ds.seed = seed;
  ds.tags.assign(n, Split::kTrain);
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    if (val_share[c] + test_share[c] > idx.size()) throw DataError("class too small for the requested split");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    for (std::size_t k = 0; k < val_share[c]; ++k) ds.tags[idx[k]] = Split::kValidation;
    for (std::size_t k = val_share[c]; k < val_share[c] + test_share[c]; ++k) ds.tags[idx[k]] = Split::kTest;
  }

  std::array<std::size_t, 3> pos{}, count{};
  for (std::size_t i = 0; i < n; ++i) {
    auto s = static_cast<std::size_t>(ds.tags[i]);
    ++count[s];
    pos[s] += static_cast<std::size_t>(data.labels[i]);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (pos[s] == 0 || pos[s] == count[s])
      throw DataError(std::string(to_string(static_cast<Split>(s))) + " split lacks examples of one class");
  }
  ds.data = std::move(data);
  return ds;
}

// ---- hyperparameters ----------------------------------------------------------------------

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kRandomForest: return "random-forest";
    case ModelKind::kMlp: return "mlp";
  }
  return "logreg";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  if (text == "logreg") return ModelKind::kLogReg;
  if (text == "random-forest") return ModelKind::kRandomForest;
  if (text == "mlp") return ModelKind::kMlp;
  return std::nullopt;
}

std::string hyperparameters_json(const Hyperparameters& hp) {
  nlohmann::ordered_json j;
  j["logreg"] = {{"l2", hp.logreg.l2},
                 {"max_epochs", hp.logreg.max_epochs},
                 {"gradient_tolerance", hp.logreg.gradient_tolerance},
                 {"standardize", hp.logreg.standardize}};
  j["random-forest"] = {{"n_trees", hp.forest.n_trees},
                        {"max_depth", hp.forest.max_depth},
                        {"min_samples_leaf", hp.forest.min_samples_leaf},
                        {"max_features", hp.forest.max_features}};
  j["mlp"] = {{"hidden", hp.mlp.hidden},         {"epochs", hp.mlp.epochs},
              {"batch_size", hp.mlp.batch_size}, {"learning_rate", hp.mlp.learning_rate},
              {"momentum", hp.mlp.momentum},     {"l2", hp.mlp.l2},
              {"standardize", hp.mlp.standardize}};
  return j.dump();
}

Hyperparameters hyperparameters_from_json(std::string_view json_text) {
  Hyperparameters hp;
  auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("hyperparameters must be a JSON object");
  try {
    if (auto it = j.find("logreg"); it != j.end()) {
      hp.logreg.l2 = it->value("l2", hp.logreg.l2);
      hp.logreg.max_epochs = it->value("max_epochs", hp.logreg.max_epochs);
      hp.logreg.gradient_tolerance = it->value("gradient_tolerance", hp.logreg.gradient_tolerance);
      hp.logreg.standardize = it->value("standardize", hp.logreg.standardize);
    }
    if (auto it = j.find("random-forest"); it != j.end()) {
      hp.forest.n_trees = it->value("n_trees", hp.forest.n_trees);
      hp.forest.max_depth = it->value("max_depth", hp.forest.max_depth);
      hp.forest.min_samples_leaf = it->value("min_samples_leaf", hp.forest.min_samples_leaf);
      hp.forest.max_features = it->value("max_features", hp.forest.max_features);
    }
    if (auto it = j.find("mlp"); it != j.end()) {
      hp.mlp.hidden = it->value("hidden", hp.mlp.hidden);
      hp.mlp.epochs = it->value("epochs", hp.mlp.epochs);
      hp.mlp.batch_size = it->value("batch_size", hp.mlp.batch_size);
      hp.mlp.learning_rate = it->value("learning_rate", hp.mlp.learning_rate);
      hp.mlp.momentum = it->value("momentum", hp.mlp.momentum);
      hp.mlp.l2 = it->value("l2", hp.mlp.l2);
      hp.mlp.standardize = it->value("standardize", hp.mlp.standardize);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperparameters: ") + e.what());
  }
  if (hp.logreg.l2 < 0.0 || hp.logreg.max_epochs < 1) throw ConfigError("invalid logreg hyperparameters");
  if (hp.forest.n_trees < 1 || hp.forest.max_depth < 0 || hp.forest.min_samples_leaf < 1 || hp.forest.max_features < 0)
    throw ConfigError("invalid random-forest hyperparameters");
  if (hp.mlp.hidden < 1 || hp.mlp.epochs < 1 || hp.mlp.batch_size < 1 || !(hp.mlp.learning_rate > 0.0))
    throw ConfigError("invalid mlp hyperparameters");
  return hp;
}

// ---- standardization ----------------------------------------------------------------------

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, x.rows()));
    s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (empty()) return x;
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

// ---- logistic regression ------------------------------------------------------------------

double logreg_objective(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& theta, double l2,
                        Eigen::VectorXd* gradient) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const auto w = theta.head(d);
  const double b = theta(d);
  const Eigen::VectorXd z = (x * w).array() + b;
  double loss = 0.0;
  Eigen::VectorXd residual(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    loss += softplus(z(i)) - static_cast<double>(y[static_cast<std::size_t>(i)]) * z(i);
    residual(i) = sigmoid(z(i)) - static_cast<double>(y[static_cast<std::size_t>(i)]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss = loss * inv_n + 0.5 * l2 * w.squaredNorm();
  if (gradient) {
    gradient->resize(d + 1);
    gradient->head(d) = x.transpose() * residual * inv_n + l2 * w;
    (*gradient)(d) = residual.sum() * inv_n;
  }
  return loss;
}

namespace {

LogRegModel train_logreg(const Eigen::MatrixXd& x, const std::vector<int>& y, const LogRegParams& p) {
  const Eigen::Index d = x.cols();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1), grad, cand_grad;
  double loss = logreg_objective(x, y, theta, p.l2, &grad);
  double step = 1.0;
  LogRegModel model;
  for (int epoch = 1; epoch <= p.max_epochs; ++epoch) {
    if (!std::isfinite(loss)) throw NumericError("logreg loss is non-finite at epoch " + std::to_string(epoch - 1));
    const double g2 = grad.squaredNorm();
    if (std::sqrt(g2) < p.gradient_tolerance) break;
    // Backtracking line search on the full-batch gradient step.
    while (true) {
      Eigen::VectorXd cand = theta - step * grad;
      const double cand_loss = logreg_objective(x, y, cand, p.l2, &cand_grad);
      if (std::isfinite(cand_loss) && cand_loss <= loss - 0.5 * step * g2) {
        theta.swap(cand);
        grad.swap(cand_grad);
        loss = cand_loss;
        step = std::min(step * 2.0, 1e6);
        break;
      }
      step *= 0.5;
      if (step < 1e-30) throw NumericError("logreg line search failed at epoch " + std::to_string(epoch));
    }
    model.epochs = epoch;
  }
  model.weights = theta.head(d);
  model.bias = theta(d);
  model.final_gradient_norm = grad.norm();
  return model;
}

// ---- random forest ------------------------------------------------------------------------

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const std::vector<int>& y;
  const ForestParams& params;
  int max_features;
  Rng rng;

  struct Work {
    int node;
    std::size_t begin, end;
    int depth;
  };

  DecisionTree build(std::vector<std::size_t> samples) {
    DecisionTree tree;
    tree.nodes.emplace_back();
    std::vector<Work> stack{{0, 0, samples.size(), 0}};
    std::vector<std::pair<double, int>> column;
    std::vector<int> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);

    while (!stack.empty()) {
      Work w = stack.back();
      stack.pop_back();
      const std::size_t m = w.end - w.begin;
      std::size_t pos = 0;
      for (std::size_t i = w.begin; i < w.end; ++i) pos += static_cast<std::size_t>(y[samples[i]]);
      const double p = static_cast<double>(pos) / static_cast<double>(m);
      tree.nodes[static_cast<std::size_t>(w.node)].probability = p;
      const auto min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
      if (w.depth >= params.max_depth || pos == 0 || pos == m || m < 2 * min_leaf) continue;

      const double parent_gini = 2.0 * p * (1.0 - p);
      double best_gain = 1e-12;
      int best_feature = -1;
      double best_threshold = 0.0;
      // Partial Fisher-Yates picks max_features distinct candidate features.
      for (int k = 0; k < max_features; ++k) {
        const auto j = static_cast<std::size_t>(k) + rng.below(features.size() - static_cast<std::size_t>(k));
        std::swap(features[static_cast<std::size_t>(k)], features[j]);
        const int f = features[static_cast<std::size_t>(k)];
        column.clear();
        for (std::size_t i = w.begin; i < w.end; ++i)
          column.emplace_back(x(static_cast<Eigen::Index>(samples[i]), f), y[samples[i]]);
        std::sort(column.begin(), column.end());
        std::size_t left_pos = 0;
        for (std::size_t i = 1; i < m; ++i) {
          left_pos += static_cast<std::size_t>(column[i - 1].second);
          if (!(column[i - 1].first < column[i].first)) continue;
          if (i < min_leaf || m - i < min_leaf) continue;
          const double nl = static_cast<double>(i), nr = static_cast<double>(m - i);
          const double pl = static_cast<double>(left_pos) / nl;
          const double pr = static_cast<double>(pos - left_pos) / nr;
          const double gini = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / static_cast<double>(m);
          const double gain = parent_gini - gini;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            double thr = column[i - 1].first + 0.5 * (column[i].first - column[i - 1].first);
            if (!(thr < column[i].first)) thr = column[i - 1].first;
            best_threshold = thr;
          }
        }
      }
      if (best_feature < 0) continue;

      auto mid = std::partition(samples.begin() + static_cast<std::ptrdiff_t>(w.begin),
                                samples.begin() + static_cast<std::ptrdiff_t>(w.end), [&](std::size_t s) {
                                  return x(static_cast<Eigen::Index>(s), best_feature) <= best_threshold;
                                });
      const auto split = static_cast<std::size_t>(mid - samples.begin());
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
      node.feature = best_feature;
      node.threshold = best_threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, split, w.end, w.depth + 1});
      stack.push_back({left, w.begin, split, w.depth + 1});
    }
    return tree;
  }
};

ForestModel train_forest(const Eigen::MatrixXd& x, const std::vector<int>& y, const ForestParams& p, std::uint64_t seed,
                         unsigned threads) {
  const auto n = static_cast<std::size_t>(x.rows());
  int mtry = p.max_features > 0 ? p.max_features
                                : static_cast<int>(std::floor(std::sqrt(static_cast<double>(x.cols()))));
  mtry = std::clamp(mtry, 1, static_cast<int>(x.cols()));
  ForestModel forest;
  forest.trees.resize(static_cast<std::size_t>(p.n_trees));
  parallel_shards(forest.trees.size(), threads, [&](std::size_t t) {
    TreeBuilder builder{x, y, p, mtry, Rng(derive_seed(seed, t))};
    std::vector<std::size_t> bootstrap(n);
    for (auto& s : bootstrap) s = builder.rng.below(n);
    forest.trees[t] = builder.build(std::move(bootstrap));
  });
  return forest;
}

// ---- multilayer perceptron ----------------------------------------------------------------

MlpModel train_mlp(const Eigen::MatrixXd& x, const std::vector<int>& y, const MlpParams& p, std::uint64_t seed) {
  const Eigen::Index n = x.rows(), d = x.cols(), h = p.hidden;
  Rng rng(derive_seed(seed, 0x4d4c50));
  MlpModel m;
  m.w1.resize(h, d);
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m.w1(i, j) = s1 * rng.normal();
  m.b1 = Eigen::VectorXd::Zero(h);
  m.w2.resize(h);
  const double s2 = std::sqrt(1.0 / static_cast<double>(h));
  for (Eigen::Index i = 0; i < h; ++i) m.w2(i) = s2 * rng.normal();
  m.b2 = 0.0;

  Eigen::MatrixXd v_w1 = Eigen::MatrixXd::Zero(h, d);
  Eigen::VectorXd v_b1 = Eigen::VectorXd::Zero(h), v_w2 = Eigen::VectorXd::Zero(h);
  double v_b2 = 0.0;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(p.batch_size);
  for (int epoch = 1; epoch <= p.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd xb(b, d);
      Eigen::VectorXd yb(b);
      for (Eigen::Index r = 0; r < b; ++r) {
        xb.row(r) = x.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
        yb(r) = y[order[start + static_cast<std::size_t>(r)]];
      }
      Eigen::MatrixXd pre = (xb * m.w1.transpose()).rowwise() + m.b1.transpose();
      Eigen::MatrixXd act = pre.cwiseMax(0.0);
      Eigen::VectorXd z = (act * m.w2).array() + m.b2;
      Eigen::VectorXd dz(b);
      for (Eigen::Index r = 0; r < b; ++r) {
        epoch_loss += softplus(z(r)) - yb(r) * z(r);
        dz(r) = (sigmoid(z(r)) - yb(r)) / static_cast<double>(b);
      }
      Eigen::VectorXd g_w2 = act.transpose() * dz + p.l2 * m.w2;
      const double g_b2 = dz.sum();
      Eigen::MatrixXd dh = (dz * m.w2.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
      Eigen::MatrixXd g_w1 = dh.transpose() * xb + p.l2 * m.w1;
      Eigen::VectorXd g_b1 = dh.colwise().sum().transpose();

      v_w1 = p.momentum * v_w1 - p.learning_rate * g_w1;
      v_b1 = p.momentum * v_b1 - p.learning_rate * g_b1;
      v_w2 = p.momentum * v_w2 - p.learning_rate * g_w2;
      v_b2 = p.momentum * v_b2 - p.learning_rate * g_b2;
      m.w1 += v_w1;
      m.b1 += v_b1;
      m.w2 += v_w2;
      m.b2 += v_b2;
    }
    if (!std::isfinite(epoch_loss)) throw NumericError("mlp loss is non-finite at epoch " + std::to_string(epoch));
  }
  return m;
}

}  // namespace

double DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) i = static_cast<std::size_t>(x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
  return nodes[i].probability;
}

Eigen::VectorXd TrainedModel::predict_proba(const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd x = standardizer.apply(raw);
  Eigen::VectorXd out(x.rows());
  if (const auto* lr = std::get_if<LogRegModel>(&params)) {
    if (lr->weights.size() != x.cols()) throw DataError("feature dimension does not match the model");
    const Eigen::VectorXd z = (x * lr->weights).array() + lr->bias;
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = sigmoid(z(i));
  } else if (const auto* rf = std::get_if<ForestModel>(&params)) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (const auto& t : rf->trees) s += t.predict(x.row(i));
      out(i) = s / static_cast<double>(rf->trees.size());
    }
  } else {
    const auto& m = std::get<MlpModel>(params);
    if (m.w1.cols() != x.cols()) throw DataError("feature dimension does not match the model");
    Eigen::MatrixXd act = ((x * m.w1.transpose()).rowwise() + m.b1.transpose()).cwiseMax(0.0);
    Eigen::VectorXd z = (act * m.w2).array() + m.b2;
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = sigmoid(z(i));
  }
  return out;
}

TrainedModel train(ModelKind kind, const LabeledData& data, const Hyperparameters& hp, std::uint64_t seed,
                   unsigned threads) {
  require_both_classes(data, "training");
  if (!data.features.allFinite()) throw DataError("training features contain non-finite values");
  TrainedModel model;
  model.kind = kind;
  model.seed = seed;
  model.hyperparameters = hp;
  switch (kind) {
    case ModelKind::kLogReg: {
      if (hp.logreg.standardize) model.standardizer = Standardizer::fit(data.features);
      model.params = train_logreg(model.standardizer.apply(data.features), data.labels, hp.logreg);
      break;
    }
    case ModelKind::kRandomForest:
      model.params = train_forest(data.features, data.labels, hp.forest, seed, threads);
      break;
    case ModelKind::kMlp: {
      if (hp.mlp.standardize) model.standardizer = Standardizer::fit(data.features);
      model.params = train_mlp(model.standardizer.apply(data.features), data.labels, hp.mlp, seed);
      break;
    }
  }
  return model;
}

// ---- model files --------------------------------------------------------------------------

namespace {

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  binio::put_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
}

Eigen::VectorXd get_vector(std::istream& in) {
  const auto n = binio::get<std::uint64_t>(in);
  if (n > (1u << 26)) throw DataError("corrupt model file (vector length)");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  binio::get_doubles(in, v.data(), n);
  return v;
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  auto out = open_output(path);
  out.write(kModelMagic, 8);
  binio::put<std::uint32_t>(out, kModelVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.kind));
  binio::put<std::uint64_t>(out, model.seed);
  binio::put_string(out, hyperparameters_json(model.hyperparameters));
  binio::put_string(out, model.snapshot_json);
  put_vector(out, model.standardizer.mean);
  put_vector(out, model.standardizer.scale);
  if (const auto* lr = std::get_if<LogRegModel>(&model.params)) {
    put_vector(out, lr->weights);
    binio::put<double>(out, lr->bias);
  } else if (const auto* rf = std::get_if<ForestModel>(&model.params)) {
    binio::put<std::uint64_t>(out, rf->trees.size());
    for (const auto& t : rf->trees) {
      binio::put<std::uint64_t>(out, t.nodes.size());
      for (const auto& nd : t.nodes) {
        binio::put<std::int32_t>(out, nd.feature);
        binio::put<double>(out, nd.threshold);
        binio::put<std::int32_t>(out, nd.left);
        binio::put<std::int32_t>(out, nd.right);
        binio::put<double>(out, nd.probability);
      }
    }
  } else {
    const auto& m = std::get<MlpModel>(model.params);
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.w1.rows()));
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.w1.cols()));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1 = m.w1;
    binio::put_doubles(out, w1.data(), static_cast<std::size_t>(w1.size()));
    put_vector(out, m.b1);
    put_vector(out, m.w2);
    binio::put<double>(out, m.b2);
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

TrainedModel load_model(const std::filesystem::path& path) {
  auto in = open_input(path);
  binio::expect_magic(in, kModelMagic, "classifier model");
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kModelVersion) throw DataError("unsupported model version " + std::to_string(version));
  TrainedModel model;
  const auto kind = binio::get<std::uint32_t>(in);
  if (kind > 2) throw DataError("unknown model kind " + std::to_string(kind));
  model.kind = static_cast<ModelKind>(kind);
  model.seed = binio::get<std::uint64_t>(in);
  model.hyperparameters = hyperparameters_from_json(binio::get_string(in));
  model.snapshot_json = binio::get_string(in);
  model.standardizer.mean = get_vector(in);
  model.standardizer.scale = get_vector(in);
  switch (model.kind) {
    case ModelKind::kLogReg: {
      LogRegModel lr;
      lr.weights = get_vector(in);
      lr.bias = binio::get<double>(in);
      model.params = std::move(lr);
      break;
    }
    case ModelKind::kRandomForest: {
      ForestModel rf;
      const auto n_trees = binio::get<std::uint64_t>(in);
      if (n_trees > (1u << 20)) throw DataError("corrupt model file (tree count)");
      rf.trees.resize(n_trees);
      for (auto& t : rf.trees) {
        const auto n_nodes = binio::get<std::uint64_t>(in);
        if (n_nodes == 0 || n_nodes > (1u << 26)) throw DataError("corrupt model file (node count)");
        t.nodes.resize(n_nodes);
        for (auto& nd : t.nodes) {
          nd.feature = binio::get<std::int32_t>(in);
          nd.threshold = binio::get<double>(in);
          nd.left = binio::get<std::int32_t>(in);
          nd.right = binio::get<std::int32_t>(in);
          nd.probability = binio::get<double>(in);
          const auto limit = static_cast<std::int32_t>(n_nodes);
          if (nd.feature >= 0 && (nd.left <= 0 || nd.right <= 0 || nd.left >= limit || nd.right >= limit))
            throw DataError("corrupt model file (tree links)");
        }
      }
      model.params = std::move(rf);
      break;
    }
    case ModelKind::kMlp: {
      MlpModel m;
      const auto h = binio::get<std::uint64_t>(in);
      const auto d = binio::get<std::uint64_t>(in);
      if (h == 0 || d == 0 || h * d > (1u << 26)) throw DataError("corrupt model file (mlp shape)");
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1(static_cast<Eigen::Index>(h),
                                                                                static_cast<Eigen::Index>(d));
      binio::get_doubles(in, w1.data(), h * d);
      m.w1 = w1;
      m.b1 = get_vector(in);
      m.w2 = get_vector(in);
      m.b2 = binio::get<double>(in);
      model.params = std::move(m);
      break;
    }
  }
  return model;
}

// ---- evaluation ---------------------------------------------------------------------------

std::optional<double> auc_rank_statistic(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t pos = 0;
  for (int l : labels) pos += l == 1 ? 1u : 0u;
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  // Twice the midrank is the integer (first + last) of the tie group, so the sum stays exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_midrank = (i + 1) + j;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) twice_rank_sum += twice_midrank;
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t pos = 0;
  for (int l : labels) pos += l == 1 ? 1u : 0u;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return {};
  std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    roc.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos),
                   scores[order[i]]});
    i = j;
  }
  return roc;
}

EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.empty() || scores.size() != labels.size()) throw DataError("evaluation needs a non-empty, aligned split");
  EvalReport r;
  r.n = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++r.confusion.tp;
    else if (predicted) ++r.confusion.fp;
    else if (actual) ++r.confusion.fn;
    else ++r.confusion.tn;
  }
  const auto& c = r.confusion;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n);
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.auc = auc_rank_statistic(scores, labels);
  r.roc = roc_curve(scores, labels);
  return r;
}

EvalReport evaluate(const TrainedModel& model, const LabeledData& split) {
  if (split.size() == 0) throw DataError("evaluation split is empty");
  Eigen::VectorXd proba = model.predict_proba(split.features);
  std::vector<double> scores(proba.data(), proba.data() + proba.size());
  return evaluate_scores(scores, split.labels);
}

std::string eval_report_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["accuracy"] = r.accuracy;
  j["auc"] = opt(r.auc);
  j["precision"] = opt(r.precision);
  j["recall"] = opt(r.recall);
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  j["roc_points"] = r.roc.size();
  return j.dump(2);
}

void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc) {
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc) out << format_double(p.fpr) << ',' << format_double(p.tpr) << ',' << format_double(p.threshold) << '\n';
}

std::string compare_models(const std::vector<NamedReport>& reports, const std::filesystem::path& roc_dir) {
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  std::ostringstream table;
  table << "model\tacc\tauc\tprec\trec\n";
  for (const auto& [name, r] : reports) {
    table << name << '\t' << format_double(r.accuracy) << '\t' << cell(r.auc) << '\t' << cell(r.precision) << '\t'
          << cell(r.recall) << '\n';
    if (!roc_dir.empty()) {
      auto out = open_output(roc_dir / ("roc_" + name + ".csv"));
      write_roc_csv(out, r.roc);
    }
  }
  // Reference row: implicit-feedback classifier on production t-shirt data.
  table << "# reference-implicit-feedback\t0.65\t0.66\t0.64\t0.47\n";
  return table.str();
}

}  // namespace prefminer
