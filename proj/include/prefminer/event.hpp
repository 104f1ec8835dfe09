#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prefminer {

enum class EventKind { kImpression, kClick, kAddToCart, kOrder };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

// One logged user interaction. display_rank is present only for impressions and clicks;
// quantity and revenue only for orders.
struct Event {
  std::string user_id;
  std::int64_t timestamp_ms = 0;
  EventKind kind = EventKind::kImpression;
  std::string item_id;
  std::string query_id;
  std::optional<std::int64_t> display_rank;
  std::optional<std::int64_t> quantity;
  std::optional<double> revenue;

  bool operator==(const Event&) const = default;
};

struct ObservationWindow {
  std::int64_t begin_ms = std::numeric_limits<std::int64_t>::min();
  std::int64_t end_ms = std::numeric_limits<std::int64_t>::max();

  bool contains(std::int64_t ts) const { return ts >= begin_ms && ts <= end_ms; }
};

// Returns an empty string when the event satisfies every record invariant,
// otherwise a short reason.
std::string validate_event(const Event& event, const ObservationWindow& window = {});

enum class EventFormat { kDelimited, kLineJson };

// Picks line-json for .jsonl/.json/.ndjson extensions, delimited text otherwise.
EventFormat guess_event_format(const std::filesystem::path& path);

struct EventParseOptions {
  EventFormat format = EventFormat::kDelimited;
  ObservationWindow window;
  double max_bad_line_fraction = 0.01;
};

struct EventParseResult {
  std::vector<Event> events;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t first_bad_line = 0;  // 0 when none
  std::string first_bad_reason;
  std::unordered_map<std::string, std::size_t> reject_reasons;

  std::size_t total() const { return accepted + rejected; }
};

// Throws DataError when the file is unreadable or the malformed fraction exceeds the tolerance.
EventParseResult parse_events(const std::filesystem::path& path, const EventParseOptions& options = {});
EventParseResult parse_events(std::istream& in, const EventParseOptions& options = {});

// Header: user_id ts_ms kind item_id query_id display_rank quantity revenue
void write_events_delimited(std::ostream& out, const std::vector<Event>& events, char delim = '\t');
void write_events_jsonl(std::ostream& out, const std::vector<Event>& events);
std::string event_to_json_line(const Event& event);
// Parses one JSON object; returns nullopt and sets `reason` on failure.
std::optional<Event> event_from_json_line(std::string_view line, std::string* reason = nullptr);

struct CatalogItem {
  std::string item_id;
  std::string brand;
  double list_price = 0.0;
  double discount_fraction = 0.0;
  std::string category;
  std::vector<double> feature_vector;

  double selling_price() const { return list_price * (1.0 - discount_fraction); }
};

struct Catalog {
  std::unordered_map<std::string, CatalogItem> items;
  std::size_t duplicate_warnings = 0;
  std::size_t feature_dim = 0;  // 0 when the catalog carries no feature columns

  const CatalogItem* find(std::string_view item_id) const;
};

// Mandatory columns: item_id brand list_price discount_fraction category; optional f_0..f_{D-1}.
// Duplicate item_id rows resolve last-wins and bump duplicate_warnings.
Catalog parse_catalog(const std::filesystem::path& path);
void write_catalog(std::ostream& out, const std::vector<CatalogItem>& items);

struct ItemCounters {
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
  std::int64_t add_to_carts = 0;
  std::int64_t units_sold = 0;
  double revenue = 0.0;
};

// Per-item totals plus the event time span; enough for the business and sales reports
// without keeping the raw log around.
struct ItemActivity {
  std::unordered_map<std::string, ItemCounters> items;
  std::int64_t min_ts = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_ts = std::numeric_limits<std::int64_t>::min();
  std::size_t events = 0;

  const ItemCounters* find(std::string_view item_id) const;
};

ItemActivity summarize_activity(const std::vector<Event>& events);

}  // namespace prefminer
