#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prefminer/event.hpp"
#include "prefminer/pair_miner.hpp"

namespace prefminer {

enum class RankMethod { kBradleyTerry, kWinRate };

std::string_view to_string(RankMethod method);
std::optional<RankMethod> parse_rank_method(std::string_view text);

// Directed win count: `winner` beat `loser` `wins` times.
struct WinRecord {
  std::string winner;
  std::string loser;
  double wins = 0.0;
};

// Canonical pairs carry wins for s1 only.
std::vector<WinRecord> to_win_records(const std::vector<PreferencePair>& pairs);

struct RankOptions {
  RankMethod method = RankMethod::kBradleyTerry;
  // Pseudo-wins added in both directions of every compared pair before the
  // Bradley-Terry fit. Zero gives the plain maximum-likelihood estimate.
  double prior_wins = 1.0;
  double tolerance = 1e-8;
  int max_iterations = 10000;
};

struct RankedItem {
  std::string item_id;
  double score = 0.0;       // higher is more preferred
  std::int64_t rank = 0;    // 1-based
  std::int64_t n_comparisons = 0;
  double strength = 0.0;    // Bradley-Terry strength (sums to 1); 0 for win-rate

  bool operator==(const RankedItem&) const = default;
};

struct RankingResult {
  RankMethod method = RankMethod::kBradleyTerry;
  std::vector<RankedItem> items;  // ordered by rank
  bool converged = true;
  int iterations = 0;
  std::size_t components = 0;
  std::vector<std::string> excluded;  // items with zero comparisons
};

// Bradley-Terry: strengths from the minorization-maximization update, normalized to sum 1,
// score = log(strength). A disconnected comparison graph is fitted per component and the
// components are stacked by mean win-rate. Win-rate: score = wins / (wins + losses).
// Ties in score order by item_id.
RankingResult rank_items(const std::vector<WinRecord>& records, const RankOptions& options = {});
RankingResult rank_items(const std::vector<PreferencePair>& pairs, const RankOptions& options = {});

// ranked.tsv: "# method: ..." comment, then header "item_id score rank n_comparisons strength"
void write_ranked(std::ostream& out, const RankingResult& ranking);
std::vector<RankedItem> read_ranked(const std::filesystem::path& path);

enum class Label { kPositive, kNegative };
std::string_view to_string(Label label);

struct LabeledExample {
  std::string item_id;
  Label label = Label::kPositive;
  double score = 0.0;

  bool operator==(const LabeledExample&) const = default;
};

// Top floor(N * top_fraction) items by (score desc, item_id) are Positive, the bottom
// floor(N * bottom_fraction) Negative; the middle band stays unlabeled.
std::vector<LabeledExample> label_quantiles(const std::vector<RankedItem>& ranked, double top_fraction = 0.20,
                                            double bottom_fraction = 0.20);

void write_labels(std::ostream& out, const std::vector<LabeledExample>& labels);
std::vector<LabeledExample> read_labels(const std::filesystem::path& path);

struct ClassMetrics {
  std::size_t items = 0;
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
  std::int64_t units_sold = 0;
  double revenue = 0.0;
  std::optional<double> ctr;                         // empty when impressions == 0
  std::optional<double> revenue_per_1k_impressions;  // empty when impressions == 0
  std::optional<double> rate_of_sale;                // units per day, class total
  std::optional<double> rate_of_sale_per_item;
  std::optional<double> mean_impressions_per_item;
};

struct BusinessReport {
  ClassMetrics positive;
  ClassMetrics negative;
  double observation_days = 0.0;
};

BusinessReport business_report(const std::vector<LabeledExample>& labels, const ItemActivity& activity);
BusinessReport business_report(const std::vector<LabeledExample>& labels, const std::vector<Event>& events);
std::string business_report_json(const BusinessReport& report);

}  // namespace prefminer
