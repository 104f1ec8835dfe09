#include <doctest.h>

#include <cmath>
#include <map>

#include "../support/temp_dir.hpp"
#include "prefminer/error.hpp"
#include "prefminer/synth.hpp"

using namespace prefminer;

namespace {

WorldConfig small_world() {
  WorldConfig cfg;
  cfg.n_items = 120;
  cfg.n_users = 300;
  cfg.n_sessions = 2000;
  cfg.n_pools = 12;
  cfg.feature_dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("spearman: identity, reversal and ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Average ranks: a = (1.5, 1.5, 3), b = (1, 2, 3) -> r = 0.8660254
  CHECK(spearman({5, 5, 9}, {1, 2, 3}) == doctest::Approx(std::sqrt(3.0) / 2.0));
  CHECK_THROWS(spearman({1, 2}, {1, 2, 3}));
}

TEST_CASE("zero temperature: every click goes to the best displayed item") {
  auto cfg = small_world();
  cfg.temperature = 0.0;
  auto world = generate_world(cfg);
  std::map<std::string, double> utility;
  for (const auto& t : world.truth) utility[t.item_id] = t.utility;
  std::map<std::string, double> best_shown;
  std::map<std::string, std::string> clicked;
  for (const auto& e : world.events) {
    const std::string key = e.user_id + "|" + e.query_id;
    if (e.kind == EventKind::kImpression) {
      auto it = best_shown.find(key);
      const double u = utility.at(e.item_id);
      if (it == best_shown.end() || u > it->second) best_shown[key] = u;
    } else if (e.kind == EventKind::kClick) {
      clicked[key] = e.item_id;
    }
  }
  REQUIRE(clicked.size() > 100);
  for (const auto& [key, item] : clicked) CHECK(utility.at(item) == best_shown.at(key));
}

TEST_CASE("world generation is deterministic and independent of thread count") {
  auto cfg = small_world();
  cfg.merch_click_share = 0.3;
  cfg.clearance_fraction = 0.15;
  auto a = generate_world(cfg, 1);
  auto b = generate_world(cfg, 4);
  CHECK(a.events == b.events);
  CHECK(a.features.matrix == b.features.matrix);
  CHECK(a.emitted_events == a.events.size());
  cfg.seed = 2;
  CHECK(generate_world(cfg).events != a.events);
}

TEST_CASE("planted ranks follow utility and events respect record invariants") {
  auto world = generate_world(small_world());
  for (const auto& t : world.truth)
    for (const auto& u : world.truth)
      if (t.utility > u.utility) CHECK(t.planted_rank < u.planted_rank);
  for (const auto& e : world.events) CHECK(validate_event(e).empty());
}

TEST_CASE("clearance items come from the lower utility half with deep discounts") {
  auto cfg = small_world();
  cfg.clearance_fraction = 0.2;
  auto world = generate_world(cfg);
  std::size_t deep = 0;
  for (std::size_t i = 0; i < world.catalog.size(); ++i) {
    if (world.catalog[i].discount_fraction > cfg.max_discount + 1e-9) {
      ++deep;
      CHECK(world.truth[i].planted_rank > static_cast<std::int64_t>(cfg.n_items / 2));
    }
  }
  CHECK(deep > 0);
}

TEST_CASE("config JSON round trip and validation") {
  auto cfg = small_world();
  cfg.merch_click_share = 0.25;
  auto back = world_config_from_json(world_config_json(cfg));
  CHECK(world_config_json(back) == world_config_json(cfg));
  CHECK_THROWS_AS(world_config_from_json(R"({"n_items": 1})"), ConfigError);
  CHECK_THROWS_AS(world_config_from_json(R"({"merch_click_share": 2})"), ConfigError);
  CHECK_THROWS_AS(world_config_from_json("[1]"), ConfigError);
}

TEST_CASE("world files round trip") {
  auto world = generate_world(small_world());
  testutil::TempDir dir;
  auto files = write_world(world, dir.path());
  auto truth = read_ground_truth(files.ground_truth);
  REQUIRE(truth.size() == world.truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(truth[i].item_id == world.truth[i].item_id);
    CHECK(truth[i].planted_rank == world.truth[i].planted_rank);
  }
  auto parsed = parse_events(files.events);
  CHECK(parsed.events == world.events);
  CHECK(parse_catalog(files.catalog).items.size() == world.catalog.size());
}
