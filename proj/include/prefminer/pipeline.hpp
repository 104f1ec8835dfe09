#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prefminer/classifier.hpp"
#include "prefminer/pair_miner.hpp"
#include "prefminer/pca.hpp"
#include "prefminer/ranker.hpp"

namespace prefminer {

struct PipelineConfig {
  std::filesystem::path events;
  std::filesystem::path catalog;
  std::filesystem::path features;
  std::optional<std::filesystem::path> ground_truth;
  std::filesystem::path output_dir;

  double gap_minutes = 30.0;
  MerchFilterConfig merch_filter;
  std::int64_t min_count = 40;
  RankOptions ranking;
  double label_top = 0.20;
  double label_bottom = 0.20;

  PcaTarget pca = PcaTarget::variance(0.88);
  bool pca_whiten = false;

  std::vector<ModelKind> classifiers{ModelKind::kLogReg, ModelKind::kRandomForest, ModelKind::kMlp};
  ModelKind primary = ModelKind::kRandomForest;
  Hyperparameters hyperparameters;
  SplitFractions split;

  std::uint64_t seed = 7;
  int threads = 0;  // 0 -> PREFMINER_THREADS or hardware concurrency
  unsigned shards = 8;

  // Normalized copy of the input document, written to config.json.
  std::string snapshot = "{}";
};

// Relative paths resolve against `base_dir`. Missing or unresolvable paths raise ConfigError
// naming the field.
PipelineConfig pipeline_config_from_json(std::string_view json_text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the output directory, '/'-separated
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct PipelineResult {
  std::filesystem::path output_dir;
  std::vector<ManifestEntry> manifest;
  std::optional<double> spearman;               // with a ground-truth file
  std::optional<double> positives_in_top_half;  // with a ground-truth file
  std::optional<double> primary_test_auc;
};

// ingest -> sessionize -> mine-pairs -> rank -> label -> report -> pca -> train -> evaluate -> manifest.
// A failing stage moves what was written so far under <output_dir>/failed/ together with
// reason.json and rethrows an error of the same kind whose message starts with the stage name.
PipelineResult run_pipeline(const PipelineConfig& config);

std::string sha256_file(const std::filesystem::path& path);
std::vector<ManifestEntry> build_manifest(const std::filesystem::path& dir);

}  // namespace prefminer
