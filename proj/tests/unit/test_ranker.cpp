#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "../support/temp_dir.hpp"
#include "prefminer/error.hpp"
#include "prefminer/ranker.hpp"
#include "prefminer/rng.hpp"

using namespace prefminer;

namespace {

RankOptions mle() {
  RankOptions o;
  o.prior_wins = 0.0;
  return o;
}

std::vector<std::string> order_of(const RankingResult& r) {
  std::vector<std::string> out;
  for (const auto& i : r.items) out.push_back(i.item_id);
  return out;
}

double strength(const RankingResult& r, const std::string& id) {
  for (const auto& i : r.items)
    if (i.item_id == id) return i.strength;
  FAIL("missing item " << id);
  return 0.0;
}

// Every pair of n items gets at least one win each way, so the MLE exists.
std::vector<WinRecord> random_tournament(Rng& rng, std::size_t n) {
  std::vector<WinRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.below(3) == 0 && j != i + 1) continue;  // sparse, but the chain i -> i+1 keeps it connected
      out.push_back({"i" + std::to_string(i), "i" + std::to_string(j), static_cast<double>(1 + rng.below(9))});
      out.push_back({"i" + std::to_string(j), "i" + std::to_string(i), static_cast<double>(1 + rng.below(9))});
    }
  return out;
}

}  // namespace

TEST_CASE("two-item closed form: 3 wins to 1 gives a strength ratio of 3") {
  auto r = rank_items(std::vector<WinRecord>{{"A", "B", 3.0}, {"B", "A", 1.0}}, mle());
  CHECK(r.converged);
  CHECK(std::abs(strength(r, "A") / strength(r, "B") - 3.0) < 1e-6);
  CHECK(order_of(r) == std::vector<std::string>{"A", "B"});
  CHECK(r.items[0].score == doctest::Approx(std::log(0.75)).epsilon(1e-9));
}

TEST_CASE("win-rate on a single canonical pair") {
  RankOptions o;
  o.method = RankMethod::kWinRate;
  auto r = rank_items(std::vector<PreferencePair>{{"A", "B", 3}}, o);
  REQUIRE(r.items.size() == 2);
  CHECK(r.items[0].item_id == "A");
  CHECK(r.items[0].score == 1.0);
  CHECK(r.items[1].score == 0.0);
  CHECK(r.items[0].n_comparisons == 3);
}

TEST_CASE("win-rate and Bradley-Terry agree on two-item order") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    double a = 1 + rng.below(20), b = 1 + rng.below(20);
    if (a == b) continue;
    std::vector<WinRecord> rec{{"x", "y", a}, {"y", "x", b}};
    RankOptions wr;
    wr.method = RankMethod::kWinRate;
    CHECK(order_of(rank_items(rec, mle())) == order_of(rank_items(rec, wr)));
  }
}

TEST_CASE("scaling all counts leaves the order unchanged and strengths sum to one") {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    auto rec = random_tournament(rng, 3 + rng.below(10));
    auto base = rank_items(rec, mle());
    const double k = static_cast<double>(2 + rng.below(9));
    auto scaled_rec = rec;
    for (auto& w : scaled_rec) w.wins *= k;
    auto scaled = rank_items(scaled_rec, mle());
    CHECK(order_of(base) == order_of(scaled));
    double sum = 0.0;
    for (const auto& i : base.items) sum += i.strength;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("noise-free transitive tournament recovers the planted order") {
  std::vector<PreferencePair> pairs;
  const int n = 12;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      char a[8], b[8];
      std::snprintf(a, sizeof a, "p%02d", i);
      std::snprintf(b, sizeof b, "p%02d", j);
      pairs.push_back({a, b, 5});
    }
  auto r = rank_items(pairs);
  CHECK(r.converged);
  auto order = order_of(r);
  CHECK(std::is_sorted(order.begin(), order.end()));
}

TEST_CASE("ranks are a permutation and scores do not increase with rank") {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    auto r = rank_items(random_tournament(rng, 8));
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      CHECK(r.items[i].rank == static_cast<std::int64_t>(i + 1));
      if (i) CHECK(r.items[i].score <= r.items[i - 1].score);
    }
  }
}

TEST_CASE("disconnected graph is fitted per component and stacked by mean win-rate") {
  // Mean win-rates: {A,B,C} = (1 + 0.9 + 0) / 3, {D,E,F} = (1 + 0.1 + 0) / 3.
  std::vector<WinRecord> rec{{"D", "E", 9}, {"D", "F", 9}, {"E", "F", 1},
                             {"A", "B", 1}, {"A", "C", 1}, {"B", "C", 9}};
  auto r = rank_items(rec);
  CHECK(r.components == 2);
  auto order = order_of(r);
  std::sort(order.begin(), order.begin() + 3);
  std::sort(order.begin() + 3, order.end());
  CHECK(order == std::vector<std::string>{"A", "B", "C", "D", "E", "F"});
  for (std::size_t i = 1; i < r.items.size(); ++i) CHECK(r.items[i].score < r.items[i - 1].score);
  double sum = 0.0;
  for (const auto& i : r.items) sum += i.strength;
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("empty comparison graph is an error") {
  CHECK_THROWS_AS(rank_items(std::vector<PreferencePair>{}), DataError);
}

TEST_CASE("label quantile sizes") {
  std::vector<RankedItem> ranked;
  for (int i = 0; i < 10; ++i) ranked.push_back({"i" + std::to_string(i), static_cast<double>(10 - i), i + 1, 1, 0.0});
  auto l = label_quantiles(ranked, 0.2, 0.2);
  REQUIRE(l.size() == 4);
  CHECK(l[0].item_id == "i0");
  CHECK(l[1].item_id == "i1");
  CHECK(l[0].label == Label::kPositive);
  CHECK(l[2].item_id == "i8");
  CHECK(l[3].label == Label::kNegative);

  auto half = label_quantiles(ranked, 0.5, 0.5);
  CHECK(half.size() == 10);
  CHECK(std::count_if(half.begin(), half.end(), [](const auto& e) { return e.label == Label::kPositive; }) == 5);

  ranked.resize(4);
  CHECK_THROWS_AS(label_quantiles(ranked, 0.2, 0.2), DataError);
  CHECK_THROWS_AS(label_quantiles(ranked, 0.7, 0.5), ConfigError);
}

TEST_CASE("labels are invariant under strictly monotone score transforms") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    std::vector<RankedItem> ranked;
    for (int i = 0; i < 40; ++i) ranked.push_back({"i" + std::to_string(i), static_cast<double>(rng.below(15)), 0, 1, 0.0});
    auto transformed = ranked;
    for (auto& r : transformed) r.score = std::exp(0.3 * r.score) - 7.0;
    auto a = label_quantiles(ranked), b = label_quantiles(transformed);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].item_id == b[i].item_id);
      CHECK(a[i].label == b[i].label);
    }
  }
}

TEST_CASE("business report") {
  std::vector<LabeledExample> labels{{"A", Label::kPositive, 1.0}, {"B", Label::kNegative, -1.0}};
  std::vector<Event> ev;
  auto push = [&](EventKind kind, const std::string& item, std::int64_t ts) {
    Event e;
    e.user_id = "u";
    e.timestamp_ms = ts;
    e.kind = kind;
    e.item_id = item;
    if (kind == EventKind::kImpression || kind == EventKind::kClick) {
      e.query_id = "q";
      e.display_rank = 1;
    }
    if (kind == EventKind::kOrder) {
      e.quantity = 2;
      e.revenue = 50.0;
    }
    ev.push_back(e);
  };
  for (int i = 0; i < 10; ++i) push(EventKind::kImpression, "A", i);
  for (int i = 0; i < 4; ++i) push(EventKind::kImpression, "B", i);
  push(EventKind::kClick, "A", 20);
  push(EventKind::kOrder, "A", 2 * 86'400'000);
  auto rep = business_report(labels, ev);
  CHECK(rep.observation_days == doctest::Approx(2.0));
  CHECK(rep.positive.impressions == 10);
  CHECK(*rep.positive.ctr == doctest::Approx(0.1));
  CHECK(*rep.positive.revenue_per_1k_impressions == doctest::Approx(5000.0));
  CHECK(*rep.positive.rate_of_sale == doctest::Approx(1.0));
  CHECK(*rep.negative.ctr == 0.0);
  CHECK(*rep.negative.mean_impressions_per_item == 4.0);

  std::vector<LabeledExample> unseen{{"Z", Label::kPositive, 0.0}};
  CHECK_FALSE(business_report(unseen, ev).positive.ctr.has_value());
}

TEST_CASE("ranked and labels files round trip") {
  auto r = rank_items(std::vector<WinRecord>{{"A", "B", 3.0}, {"B", "A", 1.0}, {"B", "C", 2.0}});
  std::stringstream buf;
  write_ranked(buf, r);
  testutil::TempDir dir;
  auto back = read_ranked(dir.write("ranked.tsv", buf.str()));
  CHECK(back == r.items);

  auto labels = label_quantiles(back, 0.34, 0.34);
  std::stringstream lb;
  write_labels(lb, labels);
  CHECK(read_labels(dir.write("labels.tsv", lb.str())) == labels);
}
