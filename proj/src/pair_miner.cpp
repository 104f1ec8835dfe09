#include "prefminer/pair_miner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "prefminer/error.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

// Inclusive thresholds tolerate representation error in the compared quantities.
constexpr double kBoundarySlack = 1e-12;

struct QueryView {
  std::string_view query_id;
  std::unordered_map<std::string_view, std::int64_t> best_rank;  // item -> min impression rank
  std::vector<std::string_view> clicked;                         // distinct, first-click order
};

}  // namespace

std::string_view to_string(BrandRule rule) {
  switch (rule) {
    case BrandRule::kAny: return "any";
    case BrandRule::kSameBrand: return "same-brand";
    case BrandRule::kBrandClusterMap: return "brand-cluster-map";
  }
  return "any";
}

std::optional<BrandRule> parse_brand_rule(std::string_view text) {
  if (text == "any") return BrandRule::kAny;
  if (text == "same-brand") return BrandRule::kSameBrand;
  if (text == "brand-cluster-map") return BrandRule::kBrandClusterMap;
  return std::nullopt;
}

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::kNone: return "none";
    case DropReason::kUnknownItem: return "unknown-item";
    case DropReason::kPrice: return "price";
    case DropReason::kDiscount: return "discount";
    case DropReason::kBrand: return "brand";
  }
  return "none";
}

void MerchFilterConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(max_price_rel_diff)) throw ConfigError("merch_filter.max_price_rel_diff must lie in [0,1]");
  if (!in_unit(max_discount_abs_diff)) throw ConfigError("merch_filter.max_discount_abs_diff must lie in [0,1]");
}

std::vector<RawPair> extract_raw_pairs(const Session& session, ExtractStats* stats) {
  std::vector<QueryView> queries;
  std::unordered_map<std::string_view, std::size_t> query_index;
  auto view_for = [&](std::string_view qid) -> QueryView& {
    auto [it, inserted] = query_index.try_emplace(qid, queries.size());
    if (inserted) queries.push_back(QueryView{qid, {}, {}});
    return queries[it->second];
  };

  for (const auto& ev : session.events) {
    if (ev.kind == EventKind::kImpression && ev.display_rank) {
      auto& q = view_for(ev.query_id);
      auto [it, inserted] = q.best_rank.try_emplace(ev.item_id, *ev.display_rank);
      if (!inserted) it->second = std::min(it->second, *ev.display_rank);
    } else if (ev.kind == EventKind::kClick) {
      auto& q = view_for(ev.query_id);
      if (std::find(q.clicked.begin(), q.clicked.end(), std::string_view(ev.item_id)) == q.clicked.end())
        q.clicked.push_back(ev.item_id);
    }
  }

  std::vector<RawPair> out;
  const std::string key = session.key();
  for (const auto& q : queries) {
    if (q.clicked.empty()) continue;
    // Impressions sorted by (rank, item) for a deterministic emission order.
    std::vector<std::pair<std::int64_t, std::string_view>> shown;
    shown.reserve(q.best_rank.size());
    for (const auto& [item, rank] : q.best_rank) shown.emplace_back(rank, item);
    std::sort(shown.begin(), shown.end());
    std::unordered_set<std::string_view> clicked(q.clicked.begin(), q.clicked.end());

    for (auto click : q.clicked) {
      if (stats) ++stats->clicks;
      auto it = q.best_rank.find(click);
      if (it == q.best_rank.end()) {
        if (stats) ++stats->clicks_without_impression;
        continue;
      }
      for (const auto& [rank, item] : shown) {
        if (rank >= it->second) break;
        if (clicked.count(item)) continue;
        out.push_back(RawPair{std::string(click), std::string(item), std::string(q.query_id), key});
      }
    }
  }
  return out;
}

FilterDecision merch_filter(const RawPair& pair, const Catalog& catalog, const MerchFilterConfig& cfg) {
  const CatalogItem* a = catalog.find(pair.preferred);
  const CatalogItem* b = catalog.find(pair.skipped);
  if (!a || !b) return {false, DropReason::kUnknownItem};
  if (!cfg.enabled) return {};

  const double pa = a->selling_price();
  const double pb = b->selling_price();
  if (std::abs(pa - pb) / std::min(pa, pb) > cfg.max_price_rel_diff + kBoundarySlack) return {false, DropReason::kPrice};
  if (std::abs(a->discount_fraction - b->discount_fraction) > cfg.max_discount_abs_diff + kBoundarySlack)
    return {false, DropReason::kDiscount};
  switch (cfg.brand_rule) {
    case BrandRule::kAny: break;
    case BrandRule::kSameBrand:
      if (a->brand != b->brand) return {false, DropReason::kBrand};
      break;
    case BrandRule::kBrandClusterMap: {
      auto cluster = [&](const std::string& brand) -> const std::string& {
        auto it = cfg.brand_clusters.find(brand);
        return it == cfg.brand_clusters.end() ? brand : it->second;
      };
      if (cluster(a->brand) != cluster(b->brand)) return {false, DropReason::kBrand};
      break;
    }
  }
  return {};
}

std::size_t PairTally::KeyHash::operator()(const std::pair<std::string, std::string>& k) const noexcept {
  std::size_t h = std::hash<std::string>{}(k.first);
  return h ^ (std::hash<std::string>{}(k.second) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

void PairTally::add(const std::string& preferred, const std::string& skipped, std::int64_t weight) {
  if (preferred == skipped) return;
  if (preferred < skipped)
    net_[{preferred, skipped}] += weight;
  else
    net_[{skipped, preferred}] -= weight;
}

void PairTally::merge(const PairTally& other) {
  for (const auto& [key, v] : other.net_) net_[key] += v;
}

std::vector<PreferencePair> PairTally::finalize() const {
  std::vector<PreferencePair> out;
  out.reserve(net_.size());
  for (const auto& [key, v] : net_) {
    if (v > 0)
      out.push_back({key.first, key.second, v});
    else if (v < 0)
      out.push_back({key.second, key.first, -v});
  }
  std::sort(out.begin(), out.end(),
            [](const PreferencePair& x, const PreferencePair& y) { return std::tie(x.s1, x.s2) < std::tie(y.s1, y.s2); });
  return out;
}

std::vector<PreferencePair> aggregate_pairs(std::span<const RawPair> raw, unsigned shards, unsigned threads) {
  shards = std::max(1u, shards);
  std::vector<PairTally> partial(shards);
  parallel_shards(shards, threads, [&](std::size_t s) {
    const std::size_t begin = raw.size() * s / shards;
    const std::size_t end = raw.size() * (s + 1) / shards;
    for (std::size_t i = begin; i < end; ++i) partial[s].add(raw[i]);
  });
  for (std::size_t s = 1; s < partial.size(); ++s) partial[0].merge(partial[s]);
  return partial[0].finalize();
}

ThresholdResult threshold_pairs(const std::vector<PreferencePair>& pairs, std::int64_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  ThresholdResult result;
  result.input_pairs = pairs.size();
  for (const auto& p : pairs) {
    ++result.count_histogram[p.count];
    if (p.count > min_count)
      result.pairs.push_back(p);
    else
      ++result.dropped;
  }
  return result;
}

CorrelationResult transaction_correlation(const std::vector<PreferencePair>& pairs, const ItemActivity& activity) {
  auto sold = [&](const std::string& item) {
    const auto* c = activity.find(item);
    return c ? c->units_sold : std::int64_t{0};
  };
  CorrelationResult r;
  for (const auto& p : pairs) {
    auto a = sold(p.s1), b = sold(p.s2);
    if (a > b)
      ++r.agree;
    else if (a < b)
      ++r.disagree;
    else
      ++r.ties;
  }
  if (r.agree + r.disagree > 0) r.fraction = static_cast<double>(r.agree) / static_cast<double>(r.agree + r.disagree);
  return r;
}

CorrelationResult transaction_correlation(const std::vector<PreferencePair>& pairs, const std::vector<Event>& events) {
  return transaction_correlation(pairs, summarize_activity(events));
}

MiningResult mine_pairs(const std::vector<Session>& sessions, const Catalog& catalog, const MerchFilterConfig& cfg,
                        std::int64_t min_count, unsigned shards, unsigned threads) {
  cfg.validate();
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  shards = std::max(1u, shards);

  struct Partial {
    PairTally tally;
    ExtractStats stats;
    std::size_t raw = 0;
    std::size_t kept = 0;
    std::map<std::string, std::size_t> drops;
  };
  std::vector<Partial> partial(shards);
  parallel_shards(shards, threads, [&](std::size_t s) {
    auto& p = partial[s];
    const std::size_t begin = sessions.size() * s / shards;
    const std::size_t end = sessions.size() * (s + 1) / shards;
    for (std::size_t i = begin; i < end; ++i) {
      for (const auto& pair : extract_raw_pairs(sessions[i], &p.stats)) {
        ++p.raw;
        auto decision = merch_filter(pair, catalog, cfg);
        if (decision.keep) {
          ++p.kept;
          p.tally.add(pair);
        } else {
          ++p.drops[std::string(to_string(decision.reason))];
        }
      }
    }
  });

  MiningResult result;
  auto& rep = result.report;
  rep.sessions = sessions.size();
  rep.min_count = min_count;
  rep.filter = cfg;
  for (const char* reason : {"unknown-item", "price", "discount", "brand"}) rep.drop_reasons[reason] = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    rep.clicks += partial[s].stats.clicks;
    rep.clicks_without_impression += partial[s].stats.clicks_without_impression;
    rep.raw_pairs += partial[s].raw;
    rep.kept_pairs += partial[s].kept;
    for (const auto& [reason, n] : partial[s].drops) rep.drop_reasons[reason] += n;
    if (s > 0) partial[0].tally.merge(partial[s].tally);
  }
  auto aggregated = partial[0].tally.finalize();
  rep.aggregated_pairs = aggregated.size();
  rep.net_zero_pairs = partial[0].tally.distinct_pairs() - aggregated.size();
  rep.threshold = threshold_pairs(aggregated, min_count);
  result.pairs = rep.threshold.pairs;
  rep.threshold.pairs.clear();
  return result;
}

std::string mining_report_json(const MiningReport& r, const std::optional<CorrelationResult>& correlation) {
  nlohmann::ordered_json j;
  j["sessions"] = r.sessions;
  j["clicks"] = r.clicks;
  j["clicks_without_impression"] = r.clicks_without_impression;
  j["raw_pairs"] = r.raw_pairs;
  j["kept_pairs"] = r.kept_pairs;
  j["drop_reasons"] = r.drop_reasons;
  j["aggregated_pairs"] = r.aggregated_pairs;
  j["net_zero_pairs"] = r.net_zero_pairs;
  j["min_count"] = r.min_count;
  j["pairs_above_min_count"] = r.threshold.input_pairs - r.threshold.dropped;
  j["pairs_at_or_below_min_count"] = r.threshold.dropped;
  auto& hist = j["count_histogram"] = nlohmann::ordered_json::array();
  for (const auto& [count, n] : r.threshold.count_histogram) hist.push_back({{"count", count}, {"pairs", n}});
  auto& f = j["merch_filter"];
  f["enabled"] = r.filter.enabled;
  f["max_price_rel_diff"] = r.filter.max_price_rel_diff;
  f["max_discount_abs_diff"] = r.filter.max_discount_abs_diff;
  f["brand_rule"] = to_string(r.filter.brand_rule);
  if (correlation) {
    auto& c = j["transaction_correlation"];
    c["fraction"] = correlation->fraction ? nlohmann::ordered_json(*correlation->fraction) : nlohmann::ordered_json();
    c["s1_sold_more"] = correlation->agree;
    c["s2_sold_more"] = correlation->disagree;
    c["ties"] = correlation->ties;
    c["reference_fraction"] = 0.70;
  }
  return j.dump(2);
}

void write_pairs(std::ostream& out, const std::vector<PreferencePair>& pairs) {
  out << "s1\ts2\tcount\n";
  for (const auto& p : pairs) out << p.s1 << '\t' << p.s2 << '\t' << p.count << '\n';
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c1 = table.require_column("s1");
  const auto c2 = table.require_column("s2");
  const auto cc = table.require_column("count");
  std::vector<PreferencePair> pairs;
  pairs.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    auto where = path.string() + ":" + std::to_string(table.line_number(r)) + ": ";
    if (row.size() != table.columns().size()) throw DataError(where + "wrong number of fields");
    auto count = parse_int64(row[cc]);
    if (!count || *count < 1) throw DataError(where + "count must be a positive integer");
    if (row[c1] == row[c2]) throw DataError(where + "s1 equals s2");
    pairs.push_back({row[c1], row[c2], *count});
  }
  return pairs;
}

MerchFilterConfig merch_filter_from_json(std::string_view json_text) {
  auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("merch filter config is not a JSON object");
  if (j.contains("merch_filter")) j = j["merch_filter"];
  MerchFilterConfig cfg;
  try {
    cfg.enabled = j.value("enabled", cfg.enabled);
    cfg.max_price_rel_diff = j.value("max_price_rel_diff", cfg.max_price_rel_diff);
    cfg.max_discount_abs_diff = j.value("max_discount_abs_diff", cfg.max_discount_abs_diff);
    if (j.contains("brand_rule")) {
      auto rule = parse_brand_rule(j["brand_rule"].get<std::string>());
      if (!rule) throw ConfigError("merch_filter.brand_rule must be any, same-brand or brand-cluster-map");
      cfg.brand_rule = *rule;
    }
    if (j.contains("brand_clusters"))
      cfg.brand_clusters = j["brand_clusters"].get<std::unordered_map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("merch filter config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace prefminer
