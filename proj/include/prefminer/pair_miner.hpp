#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prefminer/event.hpp"
#include "prefminer/sessionizer.hpp"

namespace prefminer {

// Clicked item `preferred` was chosen over `skipped`, which was shown above it in the same listing.
struct RawPair {
  std::string preferred;
  std::string skipped;
  std::string query_id;
  std::string session_key;

  bool operator==(const RawPair&) const = default;
};

// Net preference of s1 over s2 across all sessions; count is always positive.
struct PreferencePair {
  std::string s1;
  std::string s2;
  std::int64_t count = 0;

  bool operator==(const PreferencePair&) const = default;
};

enum class BrandRule { kAny, kSameBrand, kBrandClusterMap };

std::string_view to_string(BrandRule rule);
std::optional<BrandRule> parse_brand_rule(std::string_view text);

struct MerchFilterConfig {
  bool enabled = true;
  double max_price_rel_diff = 0.20;
  double max_discount_abs_diff = 0.10;
  BrandRule brand_rule = BrandRule::kAny;
  // brand -> cluster; brands missing from the map form their own cluster.
  std::unordered_map<std::string, std::string> brand_clusters;

  void validate() const;
};

enum class DropReason { kNone, kUnknownItem, kPrice, kDiscount, kBrand };

std::string_view to_string(DropReason reason);

struct FilterDecision {
  bool keep = true;
  DropReason reason = DropReason::kNone;
};

struct ExtractStats {
  std::size_t clicks = 0;
  std::size_t clicks_without_impression = 0;
};

// For every distinct clicked item in a query, pairs it with each impression of that query
// ranked strictly above it that was not itself clicked. Repeated impressions of one item in a
// query count once at their best rank.
std::vector<RawPair> extract_raw_pairs(const Session& session, ExtractStats* stats = nullptr);

// Keeps a pair when both items are in the catalog and they are merchandising-similar:
// |p1 - p2| / min(p1, p2) <= max_price_rel_diff on selling price, |d1 - d2| <= max_discount_abs_diff,
// and the brand rule holds. Checks run in that order; the first failure names the reason.
FilterDecision merch_filter(const RawPair& pair, const Catalog& catalog, const MerchFilterConfig& cfg);

// Signed tally per unordered item pair. add() and merge() form a commutative monoid,
// so sharded tallies merged in any order finalize to the same result.
class PairTally {
 public:
  void add(const std::string& preferred, const std::string& skipped, std::int64_t weight = 1);
  void add(const RawPair& pair) { add(pair.preferred, pair.skipped); }
  void merge(const PairTally& other);

  // Canonical pairs sorted by (s1, s2); net-zero pairs are omitted.
  std::vector<PreferencePair> finalize() const;
  std::size_t distinct_pairs() const { return net_.size(); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::pair<std::string, std::string>& k) const noexcept;
  };
  // Keyed by (min id, max id); value is net preference for the min id.
  std::unordered_map<std::pair<std::string, std::string>, std::int64_t, KeyHash> net_;
};

std::vector<PreferencePair> aggregate_pairs(std::span<const RawPair> raw, unsigned shards = 1, unsigned threads = 1);

struct ThresholdResult {
  std::vector<PreferencePair> pairs;
  std::map<std::int64_t, std::size_t> count_histogram;  // over the input pairs
  std::size_t input_pairs = 0;
  std::size_t dropped = 0;
};

// Keeps pairs with count strictly greater than min_count.
ThresholdResult threshold_pairs(const std::vector<PreferencePair>& pairs, std::int64_t min_count);

struct CorrelationResult {
  std::optional<double> fraction;  // agree / (agree + disagree); empty when undefined
  std::size_t agree = 0;
  std::size_t disagree = 0;
  std::size_t ties = 0;
};

// Fraction of pairs whose s1 sold more units than s2 over all order events.
CorrelationResult transaction_correlation(const std::vector<PreferencePair>& pairs, const ItemActivity& activity);
CorrelationResult transaction_correlation(const std::vector<PreferencePair>& pairs, const std::vector<Event>& events);

struct MiningReport {
  std::size_t sessions = 0;
  std::size_t clicks = 0;
  std::size_t clicks_without_impression = 0;
  std::size_t raw_pairs = 0;
  std::size_t kept_pairs = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::size_t aggregated_pairs = 0;
  std::size_t net_zero_pairs = 0;
  std::int64_t min_count = 0;
  ThresholdResult threshold;
  MerchFilterConfig filter;
};

struct MiningResult {
  std::vector<PreferencePair> pairs;  // after thresholding
  MiningReport report;
};

// extract -> filter -> aggregate -> threshold over all sessions. Output is independent of
// `shards` and `threads`.
MiningResult mine_pairs(const std::vector<Session>& sessions, const Catalog& catalog, const MerchFilterConfig& cfg,
                        std::int64_t min_count, unsigned shards = 1, unsigned threads = 1);

std::string mining_report_json(const MiningReport& report, const std::optional<CorrelationResult>& correlation);

// pairs.tsv: header "s1 s2 count"
void write_pairs(std::ostream& out, const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

MerchFilterConfig merch_filter_from_json(std::string_view json_text);

}  // namespace prefminer
