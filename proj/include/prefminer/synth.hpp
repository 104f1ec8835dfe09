#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefminer/event.hpp"
#include "prefminer/pca.hpp"

namespace prefminer {

// Planted latent-utility world. Items carry a standard-normal utility; each query shows a
// random listing drawn from one of several overlapping item pools; a clicking user picks a
// displayed item with probability proportional to exp(utility / temperature).
struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t n_items = 1000;
  std::size_t n_users = 20000;
  std::size_t n_sessions = 200000;
  double temperature = 1.0;  // 0 -> always the best displayed item

  std::size_t n_pools = 100;
  std::size_t pools_per_item = 3;
  std::size_t listing_size = 16;
  std::size_t max_queries_per_session = 2;
  double click_probability = 0.7;

  // Share of clicking queries where the user is a deal hunter: when the deepest displayed
  // discount beats every other displayed discount by more than merch_standout_gap, that item
  // is clicked regardless of utility; otherwise the click follows utility as usual.
  double merch_click_share = 0.0;
  double merch_standout_gap = 0.10;

  // Clearance stock: this fraction of items, drawn from the below-median utilities, is
  // discounted uniformly in [clearance_discount_min, clearance_discount_max].
  double clearance_fraction = 0.0;
  double clearance_discount_min = 0.45;
  double clearance_discount_max = 0.75;

  // Funnel after a click: P = sigmoid(base + slope * utility).
  double cart_base = -1.0;
  double order_base = -2.0;
  double purchase_utility_slope = 1.0;

  std::size_t n_brands = 20;
  double base_price = 1000.0;
  double price_log_sd = 0.08;
  double max_discount = 0.5;
  std::string category = "men-tshirts";

  std::size_t feature_dim = 64;
  std::size_t latent_distractors = 7;
  double feature_noise = 0.5;

  std::int64_t start_ms = 1'700'000'000'000;
  std::int64_t observation_days = 30;

  void validate() const;
};

WorldConfig world_config_from_json(std::string_view json_text);
std::string world_config_json(const WorldConfig& cfg);

struct GroundTruth {
  std::string item_id;
  double utility = 0.0;
  std::int64_t planted_rank = 0;  // 1 = highest utility
};

struct World {
  std::vector<CatalogItem> catalog;
  FeatureMatrix features;
  std::vector<Event> events;
  std::vector<GroundTruth> truth;  // catalog order
  std::size_t emitted_events = 0;
};

// Deterministic in cfg (including seed); independent of `threads`.
World generate_world(const WorldConfig& cfg, unsigned threads = 1);

struct WorldFiles {
  std::filesystem::path catalog;
  std::filesystem::path features;
  std::filesystem::path events;
  std::filesystem::path ground_truth;
};

// Writes catalog.tsv, features.tsv, events.tsv and ground_truth.tsv into `dir`.
WorldFiles write_world(const World& world, const std::filesystem::path& dir);

// ground_truth.tsv: header "item_id utility planted_rank"
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

// Spearman correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace prefminer
