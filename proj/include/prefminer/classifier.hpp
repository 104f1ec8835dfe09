#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "prefminer/pca.hpp"
#include "prefminer/ranker.hpp"

namespace prefminer {

// Feature rows with binary labels (1 = preferred).
struct LabeledData {
  std::vector<std::string> item_ids;
  Eigen::MatrixXd features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t positives() const;
  LabeledData rows(const std::vector<std::size_t>& idx) const;
};

// Joins labels to feature rows by item_id, in label order.
LabeledData join_labels(const std::vector<LabeledExample>& labels, const FeatureMatrix& features);

// labeled_features.tsv: header "item_id label f_0 ... f_{K-1}", label in {0, 1}.
void write_labeled_features(std::ostream& out, const LabeledData& data);
LabeledData read_labeled_features(const std::filesystem::path& path);

enum class Split { kTrain, kValidation, kTest };
std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct SplitFractions {
  double train = 0.75;
  double validation = 0.125;
  double test = 0.125;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Validation and test get floor(n * fraction); the remainder goes to train.
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions);

struct Dataset {
  LabeledData data;
  std::vector<Split> tags;  // row-aligned with data
  SplitFractions fractions;
  std::uint64_t seed = 0;

  LabeledData subset(Split split) const;
  SplitSizes sizes() const;
};

// Stratified by label: each class is shuffled with the seed and cut so the overall split sizes
// equal split_sizes(n). Throws DataError if any split lacks either class.
Dataset split_dataset(LabeledData data, const SplitFractions& fractions, std::uint64_t seed);

enum class ModelKind { kLogReg, kRandomForest, kMlp };
std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct LogRegParams {
  double l2 = 1e-4;
  int max_epochs = 5000;
  double gradient_tolerance = 1e-6;
  bool standardize = true;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 12;
  int min_samples_leaf = 1;
  int max_features = 0;  // 0 -> floor(sqrt(K))
};

struct MlpParams {
  int hidden = 64;
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double l2 = 1e-4;
  bool standardize = true;
};

struct Hyperparameters {
  LogRegParams logreg;
  ForestParams forest;
  MlpParams mlp;
};

std::string hyperparameters_json(const Hyperparameters& hp);
// Missing keys keep their defaults.
Hyperparameters hyperparameters_from_json(std::string_view json_text);

// Mean/scale fitted on the training rows.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  bool empty() const { return mean.size() == 0; }
};

struct LogRegModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  int epochs = 0;
  double final_gradient_norm = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double probability = 0.0;  // positive fraction at the node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
};

struct MlpModel {
  Eigen::MatrixXd w1;  // hidden x K
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;
};

struct TrainedModel {
  ModelKind kind = ModelKind::kLogReg;
  std::uint64_t seed = 0;
  Hyperparameters hyperparameters;
  Standardizer standardizer;  // empty when unused
  std::variant<LogRegModel, ForestModel, MlpModel> params;
  // Free-form provenance stored with the model (data path, split fractions, ...).
  std::string snapshot_json = "{}";

  // Probabilities in [0, 1], one per row.
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const;
};

// Mean logistic loss plus (l2 / 2) * |w|^2; theta = (w..., b). Fills `gradient` when non-null.
double logreg_objective(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& theta, double l2,
                        Eigen::VectorXd* gradient);

// Throws DataError without both classes and NumericError (naming the epoch) on a non-finite loss.
TrainedModel train(ModelKind kind, const LabeledData& train_split, const Hyperparameters& hp, std::uint64_t seed,
                   unsigned threads = 1);

// "PMCLF\0\0\1", u32 version, u32 kind, u64 seed, string hyperparameters, string snapshot,
// standardizer, then kind-specific parameters (all little-endian).
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the origin
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::optional<double> precision;  // undefined without predicted positives
  std::optional<double> recall;     // undefined without actual positives
  std::optional<double> auc;        // undefined for one-class splits
  std::vector<RocPoint> roc;
  Confusion confusion;
};

// Mann-Whitney statistic with midranks for ties; empty when either class is absent.
std::optional<double> auc_rank_statistic(const std::vector<double>& scores, const std::vector<int>& labels);

// Thresholds at every distinct score, descending; starts at (0,0) and ends at (1,1).
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);
EvalReport evaluate(const TrainedModel& model, const LabeledData& split);

std::string eval_report_json(const EvalReport& report);
void write_roc_csv(std::ostream& out, const std::vector<RocPoint>& roc);

struct NamedReport {
  std::string name;
  EvalReport report;
};

// Tab-separated table with columns model, acc, auc, prec, rec plus a reference row; also
// writes roc_<name>.csv per model into `roc_dir` when it is non-empty.
std::string compare_models(const std::vector<NamedReport>& reports, const std::filesystem::path& roc_dir = {});

}  // namespace prefminer
