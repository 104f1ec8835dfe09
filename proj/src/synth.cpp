#include "prefminer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "prefminer/error.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/rng.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

std::string padded_id(const char* prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Index into `weights_log` drawn with probability proportional to exp(weights_log / temperature);
// temperature 0 picks the argmax (first on ties).
std::size_t softmax_pick(const std::vector<double>& values, double temperature, Rng& rng) {
  if (temperature <= 0.0) return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) total += w[i] = std::exp((values[i] - top) / temperature);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return i;
  }
  return w.size() - 1;
}

}  // namespace

void WorldConfig::validate() const {
  if (n_items < 2 || n_users < 1 || n_sessions < 1) throw ConfigError("world sizes must be positive (n_items >= 2)");
  if (temperature < 0.0 || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (n_pools < 1 || pools_per_item < 1 || pools_per_item > n_pools) throw ConfigError("invalid pool layout");
  if (listing_size < 2 || max_queries_per_session < 1) throw ConfigError("listing_size >= 2 and max_queries_per_session >= 1 required");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (merch_standout_gap < 0.0) throw ConfigError("merch_standout_gap must be >= 0");
  if (!unit(click_probability) || !unit(merch_click_share)) throw ConfigError("probabilities must lie in [0,1]");
  if (!(max_discount >= 0.0 && max_discount < 1.0)) throw ConfigError("max_discount must lie in [0,1)");
  if (!unit(clearance_fraction) || !(clearance_discount_min >= 0.0 && clearance_discount_min <= clearance_discount_max &&
                                     clearance_discount_max < 1.0))
    throw ConfigError("invalid clearance generator");
  if (!(base_price > 0.0) || price_log_sd < 0.0 || n_brands < 1) throw ConfigError("invalid merchandising generator");
  if (feature_dim < 1 || feature_noise < 0.0) throw ConfigError("invalid feature generator");
  if (observation_days < 1) throw ConfigError("observation_days must be >= 1");
}

WorldConfig world_config_from_json(std::string_view json_text) {
  auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("world config must be a JSON object");
  WorldConfig c;
  try {
#define PM_FIELD(name) c.name = j.value(#name, c.name)
    PM_FIELD(seed);
    PM_FIELD(n_items);
    PM_FIELD(n_users);
    PM_FIELD(n_sessions);
    PM_FIELD(temperature);
    PM_FIELD(n_pools);
    PM_FIELD(pools_per_item);
    PM_FIELD(listing_size);
    PM_FIELD(max_queries_per_session);
    PM_FIELD(click_probability);
    PM_FIELD(merch_click_share);
    PM_FIELD(merch_standout_gap);
  PM_FIELD(clearance_fraction);
  PM_FIELD(clearance_discount_min);
  PM_FIELD(clearance_discount_max);
    PM_FIELD(clearance_fraction);
    PM_FIELD(clearance_discount_min);
    PM_FIELD(clearance_discount_max);
    PM_FIELD(cart_base);
    PM_FIELD(order_base);
    PM_FIELD(purchase_utility_slope);
    PM_FIELD(n_brands);
    PM_FIELD(base_price);
    PM_FIELD(price_log_sd);
    PM_FIELD(max_discount);
    PM_FIELD(category);
    PM_FIELD(feature_dim);
    PM_FIELD(latent_distractors);
    PM_FIELD(feature_noise);
    PM_FIELD(start_ms);
    PM_FIELD(observation_days);
#undef PM_FIELD
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("world config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string world_config_json(const WorldConfig& c) {
  nlohmann::ordered_json j;
#define PM_FIELD(name) j[#name] = c.name
  PM_FIELD(seed);
  PM_FIELD(n_items);
  PM_FIELD(n_users);
  PM_FIELD(n_sessions);
  PM_FIELD(temperature);
  PM_FIELD(n_pools);
  PM_FIELD(pools_per_item);
  PM_FIELD(listing_size);
  PM_FIELD(max_queries_per_session);
  PM_FIELD(click_probability);
  PM_FIELD(merch_click_share);
  PM_FIELD(merch_standout_gap);
  PM_FIELD(clearance_fraction);
  PM_FIELD(clearance_discount_min);
  PM_FIELD(clearance_discount_max);
  PM_FIELD(cart_base);
  PM_FIELD(order_base);
  PM_FIELD(purchase_utility_slope);
  PM_FIELD(n_brands);
  PM_FIELD(base_price);
  PM_FIELD(price_log_sd);
  PM_FIELD(max_discount);
  PM_FIELD(category);
  PM_FIELD(feature_dim);
  PM_FIELD(latent_distractors);
  PM_FIELD(feature_noise);
  PM_FIELD(start_ms);
  PM_FIELD(observation_days);
#undef PM_FIELD
  return j.dump(2);
}

World generate_world(const WorldConfig& cfg, unsigned threads) {
  cfg.validate();
  World world;
  const std::size_t n = cfg.n_items;

  // Items, merchandising attributes and utilities.
  Rng item_rng(derive_seed(cfg.seed, 1));
  std::vector<double> utility(n);
  world.catalog.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& item = world.catalog[i];
    item.item_id = padded_id("item_", i, n);
    utility[i] = item_rng.normal();
    item.brand = padded_id("brand_", item_rng.below(cfg.n_brands), cfg.n_brands);
    item.list_price = std::round(cfg.base_price * std::exp(cfg.price_log_sd * item_rng.normal()) * 100.0) / 100.0;
    item.discount_fraction = std::round(item_rng.uniform(0.0, cfg.max_discount) * 1000.0) / 1000.0;
    item.category = cfg.category;
  }

  std::vector<std::size_t> by_utility(n);
  std::iota(by_utility.begin(), by_utility.end(), std::size_t{0});
  std::sort(by_utility.begin(), by_utility.end(), [&](std::size_t a, std::size_t b) {
    if (utility[a] != utility[b]) return utility[a] > utility[b];
    return a < b;
  });
  if (cfg.clearance_fraction > 0.0) {
    Rng sale_rng(derive_seed(cfg.seed, 4));
    std::vector<std::size_t> low(by_utility.begin() + static_cast<std::ptrdiff_t>(n - n / 2), by_utility.end());
    sale_rng.shuffle(low);
    const auto count = std::min(low.size(), static_cast<std::size_t>(std::llround(cfg.clearance_fraction * n)));
    for (std::size_t k = 0; k < count; ++k)
      world.catalog[low[k]].discount_fraction =
          std::round(sale_rng.uniform(cfg.clearance_discount_min, cfg.clearance_discount_max) * 1000.0) / 1000.0;
  }

  world.truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) world.truth[i] = {world.catalog[i].item_id, utility[i], 0};
  for (std::size_t r = 0; r < n; ++r) world.truth[by_utility[r]].planted_rank = static_cast<std::int64_t>(r + 1);

  // Features: fixed random linear map of (utility, distractors) plus isotropic noise.
  Rng feat_rng(derive_seed(cfg.seed, 2));
  const std::size_t latent = 1 + cfg.latent_distractors;
  Eigen::MatrixXd mixing(static_cast<Eigen::Index>(cfg.feature_dim), static_cast<Eigen::Index>(latent));
  for (Eigen::Index r = 0; r < mixing.rows(); ++r)
    for (Eigen::Index c = 0; c < mixing.cols(); ++c) mixing(r, c) = feat_rng.normal() / std::sqrt(static_cast<double>(latent));
  world.features.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.feature_dim));
  Eigen::VectorXd z(static_cast<Eigen::Index>(latent));
  for (std::size_t i = 0; i < n; ++i) {
    z(0) = utility[i];
    for (std::size_t k = 1; k < latent; ++k) z(static_cast<Eigen::Index>(k)) = feat_rng.normal();
    Eigen::VectorXd x = mixing * z;
    for (Eigen::Index d = 0; d < x.size(); ++d) x(d) += cfg.feature_noise * feat_rng.normal();
    world.features.matrix.row(static_cast<Eigen::Index>(i)) = x.transpose();
    world.features.item_ids.push_back(world.catalog[i].item_id);
  }

  // Overlapping listing pools: deal pools_per_item copies of every item round-robin.
  Rng pool_rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> slots;
  slots.reserve(n * cfg.pools_per_item);
  for (std::size_t k = 0; k < cfg.pools_per_item; ++k)
    for (std::size_t i = 0; i < n; ++i) slots.push_back(i);
  pool_rng.shuffle(slots);
  std::vector<std::vector<std::size_t>> pools(cfg.n_pools);
  for (std::size_t s = 0; s < slots.size(); ++s) pools[s % cfg.n_pools].push_back(slots[s]);
  for (auto& p : pools) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  std::erase_if(pools, [](const auto& p) { return p.size() < 2; });
  if (pools.empty()) throw ConfigError("world config yields no usable listing pools");

  std::vector<double> discount(n);
  for (std::size_t i = 0; i < n; ++i) discount[i] = world.catalog[i].discount_fraction;

  // Sessions, each from its own derived stream so sharding cannot change the output.
  const std::int64_t window_ms = cfg.observation_days * 86'400'000LL;
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(cfg.n_sessions, 64));
  std::vector<std::vector<Event>> partial(shards);
  parallel_shards(shards, threads, [&](std::size_t shard) {
    const std::size_t begin = cfg.n_sessions * shard / shards;
    const std::size_t end = cfg.n_sessions * (shard + 1) / shards;
    auto& out = partial[shard];
    std::vector<double> shown_value;
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(derive_seed(cfg.seed, 1'000'000ULL + s));
      const std::string user = padded_id("user_", rng.below(cfg.n_users), cfg.n_users);
      std::int64_t t = cfg.start_ms + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(window_ms - 3'600'000)));
      const std::size_t queries = 1 + rng.below(cfg.max_queries_per_session);
      for (std::size_t q = 0; q < queries; ++q, t += 60'000) {
        const auto& pool = pools[rng.below(pools.size())];
        std::vector<std::size_t> listing = pool;
        rng.shuffle(listing);
        listing.resize(std::min(listing.size(), cfg.listing_size));
        const std::string qid = "q" + std::to_string(s) + "_" + std::to_string(q);
        for (std::size_t r = 0; r < listing.size(); ++r) {
          Event ev;
          ev.user_id = user;
          ev.timestamp_ms = t + static_cast<std::int64_t>(r);
          ev.kind = EventKind::kImpression;
          ev.item_id = world.catalog[listing[r]].item_id;
          ev.query_id = qid;
          ev.display_rank = static_cast<std::int64_t>(r + 1);
          out.push_back(std::move(ev));
        }
        if (!rng.bernoulli(cfg.click_probability)) continue;
        std::optional<std::size_t> standout;
        if (cfg.merch_click_share > 0.0 && rng.bernoulli(cfg.merch_click_share)) {
          std::size_t best = 0;
          double second = -1.0;
          for (std::size_t r = 1; r < listing.size(); ++r) {
            if (discount[listing[r]] > discount[listing[best]]) {
              second = discount[listing[best]];
              best = r;
            } else {
              second = std::max(second, discount[listing[r]]);
            }
          }
          if (discount[listing[best]] - second > cfg.merch_standout_gap) standout = best;
        }
        shown_value.clear();
        for (auto i : listing) shown_value.push_back(utility[i]);
        const std::size_t pick = standout ? *standout : softmax_pick(shown_value, cfg.temperature, rng);
        const std::size_t item = listing[pick];
        const auto& cat = world.catalog[item];
        Event click;
        click.user_id = user;
        click.timestamp_ms = t + 5'000;
        click.kind = EventKind::kClick;
        click.item_id = cat.item_id;
        click.query_id = qid;
        click.display_rank = static_cast<std::int64_t>(pick + 1);
        out.push_back(click);
        if (!rng.bernoulli(sigmoid(cfg.cart_base + cfg.purchase_utility_slope * utility[item]))) continue;
        Event cart;
        cart.user_id = user;
        cart.timestamp_ms = t + 15'000;
        cart.kind = EventKind::kAddToCart;
        cart.item_id = cat.item_id;
        cart.query_id = qid;
        out.push_back(cart);
        if (!rng.bernoulli(sigmoid(cfg.order_base + cfg.purchase_utility_slope * utility[item]))) continue;
        Event order;
        order.user_id = user;
        order.timestamp_ms = t + 30'000;
        order.kind = EventKind::kOrder;
        order.item_id = cat.item_id;
        order.query_id = qid;
        order.quantity = 1 + static_cast<std::int64_t>(rng.below(2));
        order.revenue = std::round(cat.selling_price() * static_cast<double>(*order.quantity) * 100.0) / 100.0;
        out.push_back(std::move(order));
      }
    }
  });
  std::size_t total = 0;
  for (const auto& p : partial) total += p.size();
  world.events.reserve(total);
  for (auto& p : partial)
    for (auto& ev : p) world.events.push_back(std::move(ev));
  world.emitted_events = world.events.size();
  return world;
}

WorldFiles write_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  WorldFiles files{dir / "catalog.tsv", dir / "features.tsv", dir / "events.tsv", dir / "ground_truth.tsv"};
  {
    auto out = open_output(files.catalog);
    write_catalog(out, world.catalog);
  }
  {
    auto out = open_output(files.features);
    write_features(out, world.features);
  }
  {
    auto out = open_output(files.events);
    write_events_delimited(out, world.events);
  }
  {
    auto out = open_output(files.ground_truth);
    out << "item_id\tutility\tplanted_rank\n";
    for (const auto& g : world.truth) out << g.item_id << '\t' << format_double(g.utility) << '\t' << g.planted_rank << '\n';
  }
  return files;
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_item = table.require_column("item_id");
  const auto c_util = table.require_column("utility");
  const auto c_rank = table.require_column("planted_rank");
  std::vector<GroundTruth> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    auto u = parse_double(row[c_util]);
    auto k = parse_int64(row[c_rank]);
    if (row.size() != table.columns().size() || !u || !k)
      throw DataError(path.string() + ":" + std::to_string(table.line_number(r)) + ": malformed ground-truth row");
    out.push_back({row[c_item], *u, *k});
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("spearman needs two aligned vectors of length >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
      const double mid = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k) r[order[k]] = mid;
      i = j;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace prefminer
