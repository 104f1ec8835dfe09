#include "prefminer/event.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "prefminer/detail/event_json.hpp"

#include "prefminer/error.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

constexpr std::string_view kEventColumns[] = {"user_id",      "ts_ms",    "kind",   "item_id",
                                              "query_id",     "display_rank", "quantity", "revenue"};

bool has_rank(EventKind kind) { return kind == EventKind::kImpression || kind == EventKind::kClick; }

void reject(EventParseResult& result, std::size_t line_no, std::string reason) {
  ++result.rejected;
  if (result.first_bad_line == 0) {
    result.first_bad_line = line_no;
    result.first_bad_reason = reason;
  }
  ++result.reject_reasons[std::move(reason)];
}

struct DelimitedLayout {
  char delim = '\t';
  std::size_t n_fields = 0;
  std::size_t user = 0, ts = 0, kind = 0, item = 0;
  std::optional<std::size_t> query, rank, quantity, revenue;
};

DelimitedLayout read_layout(std::string_view header) {
  DelimitedLayout layout;
  layout.delim = detect_delimiter(header);
  auto fields = split_fields(header, layout.delim);
  layout.n_fields = fields.size();
  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (trim(fields[i]) == name) return i;
    return std::nullopt;
  };
  auto need = [&](std::string_view name) {
    auto idx = find(name);
    if (!idx) throw DataError("event header is missing mandatory column '" + std::string(name) + "'");
    return *idx;
  };
  layout.user = need("user_id");
  layout.ts = need("ts_ms");
  layout.kind = need("kind");
  layout.item = need("item_id");
  layout.query = find("query_id");
  layout.rank = find("display_rank");
  layout.quantity = find("quantity");
  layout.revenue = find("revenue");
  return layout;
}

std::optional<Event> parse_delimited_line(std::string_view line, const DelimitedLayout& layout,
                                          std::string& reason) {
  auto fields = split_fields(line, layout.delim);
  if (fields.size() != layout.n_fields) {
    reason = "field-count";
    return std::nullopt;
  }
  Event ev;
  ev.user_id = std::string(trim(fields[layout.user]));
  auto ts = parse_int64(fields[layout.ts]);
  if (!ts) {
    reason = "bad-timestamp";
    return std::nullopt;
  }
  ev.timestamp_ms = *ts;
  auto kind = parse_event_kind(trim(fields[layout.kind]));
  if (!kind) {
    reason = "bad-kind";
    return std::nullopt;
  }
  ev.kind = *kind;
  ev.item_id = std::string(trim(fields[layout.item]));
  if (layout.query) ev.query_id = std::string(trim(fields[*layout.query]));
  auto optional_int = [&](std::optional<std::size_t> col, std::optional<std::int64_t>& dst,
                          const char* what) {
    if (!col || trim(fields[*col]).empty()) return true;
    dst = parse_int64(fields[*col]);
    if (!dst) reason = std::string("bad-") + what;
    return dst.has_value();
  };
  if (!optional_int(layout.rank, ev.display_rank, "display_rank")) return std::nullopt;
  if (!optional_int(layout.quantity, ev.quantity, "quantity")) return std::nullopt;
  if (layout.revenue && !trim(fields[*layout.revenue]).empty()) {
    ev.revenue = parse_double(fields[*layout.revenue]);
    if (!ev.revenue) {
      reason = "bad-revenue";
      return std::nullopt;
    }
  }
  return ev;
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kImpression: return "impression";
    case EventKind::kClick: return "click";
    case EventKind::kAddToCart: return "add_to_cart";
    case EventKind::kOrder: return "order";
  }
  return "impression";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  if (text == "impression") return EventKind::kImpression;
  if (text == "click") return EventKind::kClick;
  if (text == "add_to_cart") return EventKind::kAddToCart;
  if (text == "order") return EventKind::kOrder;
  return std::nullopt;
}

std::string validate_event(const Event& ev, const ObservationWindow& window) {
  if (ev.user_id.empty()) return "missing-user";
  if (ev.item_id.empty()) return "missing-item";
  if (!window.contains(ev.timestamp_ms)) return "outside-window";
  if (has_rank(ev.kind)) {
    if (!ev.display_rank) return "missing-display_rank";
    if (*ev.display_rank < 1) return "display_rank<1";
    if (ev.query_id.empty()) return "missing-query";
  } else if (ev.display_rank) {
    return "unexpected-display_rank";
  }
  if (ev.kind == EventKind::kOrder) {
    if (!ev.quantity || !ev.revenue) return "incomplete-order";
    if (*ev.quantity < 0) return "quantity<0";
    if (!(*ev.revenue >= 0.0)) return "revenue<0";
  } else if (ev.quantity || ev.revenue) {
    return "unexpected-order-fields";
  }
  return {};
}

EventFormat guess_event_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return EventFormat::kLineJson;
  return EventFormat::kDelimited;
}

namespace detail {

std::optional<Event> event_from_json(const nlohmann::json& obj, std::string* reason, const std::string* default_user) {
  auto fail = [&](const char* why) -> std::optional<Event> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  if (!obj.is_object()) return fail("bad-json");
  Event ev;
  try {
    if ((!obj.contains("user_id") && !default_user) || !obj.contains("ts_ms") || !obj.contains("kind") ||
        !obj.contains("item_id"))
      return fail("missing-field");
    if (!obj["ts_ms"].is_number_integer()) return fail("bad-timestamp");
    ev.user_id = obj.contains("user_id") ? obj["user_id"].get<std::string>() : *default_user;
    ev.timestamp_ms = obj["ts_ms"].get<std::int64_t>();
    auto kind = parse_event_kind(obj["kind"].get<std::string>());
    if (!kind) return fail("bad-kind");
    ev.kind = *kind;
    ev.item_id = obj["item_id"].get<std::string>();
    if (auto it = obj.find("query_id"); it != obj.end() && !it->is_null()) ev.query_id = it->get<std::string>();
    if (auto it = obj.find("display_rank"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) return fail("bad-display_rank");
      ev.display_rank = it->get<std::int64_t>();
    }
    if (auto it = obj.find("quantity"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) return fail("bad-quantity");
      ev.quantity = it->get<std::int64_t>();
    }
    if (auto it = obj.find("revenue"); it != obj.end() && !it->is_null()) {
      if (!it->is_number()) return fail("bad-revenue");
      ev.revenue = it->get<double>();
    }
  } catch (const nlohmann::json::exception&) {
    return fail("bad-field-type");
  }
  return ev;
}

nlohmann::ordered_json event_to_json(const Event& ev, bool include_user) {
  nlohmann::ordered_json obj;
  if (include_user) obj["user_id"] = ev.user_id;
  obj["ts_ms"] = ev.timestamp_ms;
  obj["kind"] = to_string(ev.kind);
  obj["item_id"] = ev.item_id;
  if (!ev.query_id.empty()) obj["query_id"] = ev.query_id;
  if (ev.display_rank) obj["display_rank"] = *ev.display_rank;
  if (ev.quantity) obj["quantity"] = *ev.quantity;
  if (ev.revenue) obj["revenue"] = *ev.revenue;
  return obj;
}

}  // namespace detail

std::optional<Event> event_from_json_line(std::string_view line, std::string* reason) {
  auto obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded()) {
    if (reason) *reason = "bad-json";
    return std::nullopt;
  }
  return detail::event_from_json(obj, reason);
}

std::string event_to_json_line(const Event& ev) { return detail::event_to_json(ev).dump(); }

EventParseResult parse_events(std::istream& in, const EventParseOptions& options) {
  EventParseResult result;
  std::string line;
  std::size_t line_no = 0;
  std::optional<DelimitedLayout> layout;
  std::string reason;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty() || view.front() == '#') continue;

    std::optional<Event> ev;
    if (options.format == EventFormat::kDelimited) {
      if (!layout) {
        layout = read_layout(view);
        continue;
      }
      ev = parse_delimited_line(view, *layout, reason);
    } else {
      ev = event_from_json_line(view, &reason);
    }
    if (ev) {
      reason = validate_event(*ev, options.window);
      if (reason.empty()) {
        result.events.push_back(std::move(*ev));
        ++result.accepted;
        continue;
      }
    }
    reject(result, line_no, reason);
  }
  if (in.bad()) throw DataError("read error while parsing events");
  if (result.total() > 0 &&
      static_cast<double>(result.rejected) > options.max_bad_line_fraction * static_cast<double>(result.total())) {
    std::ostringstream msg;
    msg << "too many malformed event lines (" << result.rejected << " of " << result.total()
        << "); first offending line " << result.first_bad_line << ": " << result.first_bad_reason;
    throw DataError(msg.str());
  }
  return result;
}

EventParseResult parse_events(const std::filesystem::path& path, const EventParseOptions& options) {
  auto in = open_input(path);
  try {
    return parse_events(in, options);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_events_delimited(std::ostream& out, const std::vector<Event>& events, char delim) {
  for (std::size_t i = 0; i < std::size(kEventColumns); ++i) {
    if (i) out << delim;
    out << kEventColumns[i];
  }
  out << '\n';
  for (const auto& ev : events) {
    out << ev.user_id << delim << ev.timestamp_ms << delim << to_string(ev.kind) << delim << ev.item_id << delim
        << ev.query_id << delim;
    if (ev.display_rank) out << *ev.display_rank;
    out << delim;
    if (ev.quantity) out << *ev.quantity;
    out << delim;
    if (ev.revenue) out << format_double(*ev.revenue);
    out << '\n';
  }
}

void write_events_jsonl(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& ev : events) out << event_to_json_line(ev) << '\n';
}

const CatalogItem* Catalog::find(std::string_view item_id) const {
  auto it = items.find(std::string(item_id));
  return it == items.end() ? nullptr : &it->second;
}

Catalog parse_catalog(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_item = table.require_column("item_id");
  const auto c_brand = table.require_column("brand");
  const auto c_price = table.require_column("list_price");
  const auto c_disc = table.require_column("discount_fraction");
  const auto c_cat = table.require_column("category");
  std::vector<std::size_t> feature_cols;
  for (std::size_t d = 0;; ++d) {
    auto col = table.column("f_" + std::to_string(d));
    if (!col) break;
    feature_cols.push_back(*col);
  }

  Catalog catalog;
  catalog.feature_dim = feature_cols.size();
  auto where = [&](std::size_t r) { return path.string() + ":" + std::to_string(table.line_number(r)) + ": "; };
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    if (row.size() != table.columns().size()) throw DataError(where(r) + "wrong number of fields");
    CatalogItem item;
    item.item_id = std::string(trim(row[c_item]));
    item.brand = std::string(trim(row[c_brand]));
    item.category = std::string(trim(row[c_cat]));
    auto price = parse_double(row[c_price]);
    if (!price) throw DataError(where(r) + "non-numeric list_price '" + row[c_price] + "'");
    auto disc = parse_double(row[c_disc]);
    if (!disc) throw DataError(where(r) + "non-numeric discount_fraction '" + row[c_disc] + "'");
    item.list_price = *price;
    item.discount_fraction = *disc;
    if (item.item_id.empty()) throw DataError(where(r) + "empty item_id");
    if (!(item.list_price > 0.0)) throw DataError(where(r) + "list_price must be positive");
    if (!(item.discount_fraction >= 0.0 && item.discount_fraction <= 1.0))
      throw DataError(where(r) + "discount_fraction outside [0,1]");
    if (!(item.selling_price() > 0.0)) throw DataError(where(r) + "selling price must be positive");
    item.feature_vector.reserve(feature_cols.size());
    for (auto col : feature_cols) {
      auto v = parse_double(row[col]);
      if (!v || !std::isfinite(*v)) throw DataError(where(r) + "non-finite feature value");
      item.feature_vector.push_back(*v);
    }
    auto [it, inserted] = catalog.items.insert_or_assign(item.item_id, std::move(item));
    if (!inserted) ++catalog.duplicate_warnings;
  }
  return catalog;
}

void write_catalog(std::ostream& out, const std::vector<CatalogItem>& items) {
  std::size_t dim = items.empty() ? 0 : items.front().feature_vector.size();
  out << "item_id\tbrand\tlist_price\tdiscount_fraction\tcategory";
  for (std::size_t d = 0; d < dim; ++d) out << "\tf_" << d;
  out << '\n';
  for (const auto& item : items) {
    out << item.item_id << '\t' << item.brand << '\t' << format_double(item.list_price) << '\t'
        << format_double(item.discount_fraction) << '\t' << item.category;
    for (double v : item.feature_vector) out << '\t' << format_double(v);
    out << '\n';
  }
}

const ItemCounters* ItemActivity::find(std::string_view item_id) const {
  auto it = items.find(std::string(item_id));
  return it == items.end() ? nullptr : &it->second;
}

ItemActivity summarize_activity(const std::vector<Event>& events) {
  ItemActivity a;
  a.events = events.size();
  for (const auto& ev : events) {
    a.min_ts = std::min(a.min_ts, ev.timestamp_ms);
    a.max_ts = std::max(a.max_ts, ev.timestamp_ms);
    auto& c = a.items[ev.item_id];
    switch (ev.kind) {
      case EventKind::kImpression: ++c.impressions; break;
      case EventKind::kClick: ++c.clicks; break;
      case EventKind::kAddToCart: ++c.add_to_carts; break;
      case EventKind::kOrder:
        c.units_sold += ev.quantity.value_or(0);
        c.revenue += ev.revenue.value_or(0.0);
        break;
    }
  }
  return a;
}

}  // namespace prefminer
