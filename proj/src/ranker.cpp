#include "prefminer/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "prefminer/error.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Edge {
  std::size_t a = 0, b = 0;  // a < b
  double wins_ab = 0.0;
  double wins_ba = 0.0;
};

struct Graph {
  std::vector<std::string> ids;  // sorted
  std::vector<Edge> edges;
  std::vector<double> wins, losses;
};

Graph build_graph(const std::vector<WinRecord>& records) {
  Graph g;
  for (const auto& r : records) {
    if (r.winner == r.loser) throw DataError("win record with identical items '" + r.winner + "'");
    if (!(r.wins >= 0.0) || !std::isfinite(r.wins)) throw DataError("win counts must be finite and non-negative");
    g.ids.push_back(r.winner);
    g.ids.push_back(r.loser);
  }
  std::sort(g.ids.begin(), g.ids.end());
  g.ids.erase(std::unique(g.ids.begin(), g.ids.end()), g.ids.end());
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < g.ids.size(); ++i) index.emplace(g.ids[i], i);

  std::map<std::pair<std::size_t, std::size_t>, Edge> edges;
  g.wins.assign(g.ids.size(), 0.0);
  g.losses.assign(g.ids.size(), 0.0);
  for (const auto& r : records) {
    std::size_t w = index.at(r.winner), l = index.at(r.loser);
    g.wins[w] += r.wins;
    g.losses[l] += r.wins;
    auto key = std::minmax(w, l);
    auto& e = edges[key];
    e.a = key.first;
    e.b = key.second;
    (w == e.a ? e.wins_ab : e.wins_ba) += r.wins;
  }
  for (auto& [key, e] : edges)
    if (e.wins_ab + e.wins_ba > 0.0) g.edges.push_back(e);
  return g;
}

std::vector<std::size_t> connected_components(const Graph& g, std::size_t& n_components) {
  std::vector<std::size_t> parent(g.ids.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) {
    auto ra = find(e.a), rb = find(e.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> comp(g.ids.size());
  std::unordered_map<std::size_t, std::size_t> label;
  for (std::size_t i = 0; i < g.ids.size(); ++i) comp[i] = label.try_emplace(find(i), label.size()).first->second;
  n_components = label.size();
  return comp;
}

struct FitOutcome {
  std::vector<double> strength;  // per member, sums to 1
  bool converged = false;
  int iterations = 0;
};

// Minorization-maximization for one connected component.
FitOutcome fit_component(const std::vector<std::size_t>& members, const std::vector<Edge>& edges,
                         const std::vector<double>& node_wins, const RankOptions& opt) {
  const std::size_t m = members.size();
  FitOutcome out;
  out.strength.assign(m, 1.0 / static_cast<double>(m));
  if (m == 1) {
    out.strength[0] = 1.0;
    out.converged = true;
    return out;
  }
  std::vector<double> next(m), denom(m);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    std::fill(denom.begin(), denom.end(), 0.0);
    for (const auto& e : edges) {
      const double n = e.wins_ab + e.wins_ba;
      const double s = out.strength[e.a] + out.strength[e.b];
      if (s > 0.0) {
        denom[e.a] += n / s;
        denom[e.b] += n / s;
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] = node_wins[i] > 0.0 ? node_wins[i] / denom[i] : 0.0;
      total += next[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("Bradley-Terry update produced a degenerate strength vector");
    double change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] /= total;
      const double old = out.strength[i];
      if (old > 0.0) change = std::max(change, std::abs(next[i] - old) / old);
    }
    out.strength.swap(next);
    out.iterations = it;
    if (change < opt.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

void order_and_rank(std::vector<RankedItem>& items) {
  std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  for (std::size_t i = 0; i < items.size(); ++i) items[i].rank = static_cast<std::int64_t>(i + 1);
}

}  // namespace

std::string_view to_string(RankMethod method) {
  return method == RankMethod::kBradleyTerry ? "bradley-terry" : "win-rate";
}

std::optional<RankMethod> parse_rank_method(std::string_view text) {
  if (text == "bradley-terry") return RankMethod::kBradleyTerry;
  if (text == "win-rate") return RankMethod::kWinRate;
  return std::nullopt;
}

std::vector<WinRecord> to_win_records(const std::vector<PreferencePair>& pairs) {
  std::vector<WinRecord> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.s1, p.s2, static_cast<double>(p.count)});
  return out;
}

RankingResult rank_items(const std::vector<PreferencePair>& pairs, const RankOptions& options) {
  return rank_items(to_win_records(pairs), options);
}

RankingResult rank_items(const std::vector<WinRecord>& records, const RankOptions& options) {
  if (!(options.prior_wins >= 0.0)) throw ConfigError("prior_wins must be non-negative");
  if (!(options.tolerance > 0.0) || options.max_iterations < 1) throw ConfigError("invalid Bradley-Terry stopping rule");

  Graph g = build_graph(records);
  RankingResult result;
  result.method = options.method;

  // Items that never took part in a counted comparison carry no signal.
  std::vector<bool> active(g.ids.size(), false);
  for (const auto& e : g.edges) active[e.a] = active[e.b] = true;
  for (std::size_t i = 0; i < g.ids.size(); ++i)
    if (!active[i]) result.excluded.push_back(g.ids[i]);
  if (g.edges.empty()) throw DataError("comparison graph is empty");

  std::size_t n_comp = 0;
  auto comp = connected_components(g, n_comp);
  std::vector<double> win_rate(g.ids.size(), 0.0);
  for (std::size_t i = 0; i < g.ids.size(); ++i)
    if (active[i]) win_rate[i] = g.wins[i] / (g.wins[i] + g.losses[i]);

  std::vector<double> score(g.ids.size(), 0.0), strength(g.ids.size(), 0.0);
  if (options.method == RankMethod::kWinRate) {
    score = win_rate;
  } else {
    // Group members and edges per component (isolated items form their own, and are skipped).
    std::vector<std::vector<std::size_t>> members(n_comp);
    std::vector<std::size_t> local(g.ids.size());
    for (std::size_t i = 0; i < g.ids.size(); ++i) {
      local[i] = members[comp[i]].size();
      members[comp[i]].push_back(i);
    }
    std::vector<std::vector<Edge>> comp_edges(n_comp);
    for (const auto& e : g.edges) {
      Edge le = e;
      le.a = local[e.a];
      le.b = local[e.b];
      le.wins_ab += options.prior_wins;
      le.wins_ba += options.prior_wins;
      comp_edges[comp[e.a]].push_back(le);
    }

    struct CompFit {
      std::size_t id;
      double mean_win_rate;
      std::string first_id;
    };
    std::vector<CompFit> order;
    std::vector<std::vector<double>> log_strength(n_comp);
    for (std::size_t c = 0; c < n_comp; ++c) {
      if (comp_edges[c].empty()) continue;
      std::vector<double> node_wins(members[c].size(), 0.0);
      for (const auto& e : comp_edges[c]) {
        node_wins[e.a] += e.wins_ab;
        node_wins[e.b] += e.wins_ba;
      }
      auto fit = fit_component(members[c], comp_edges[c], node_wins, options);
      result.converged = result.converged && fit.converged;
      result.iterations = std::max(result.iterations, fit.iterations);
      double wr = 0.0;
      for (std::size_t k = 0; k < members[c].size(); ++k) {
        strength[members[c][k]] = fit.strength[k];
        log_strength[c].push_back(fit.strength[k] > 0.0 ? std::log(fit.strength[k]) : kNegInf);
        wr += win_rate[members[c][k]];
      }
      order.push_back({c, wr / static_cast<double>(members[c].size()), g.ids[members[c].front()]});
    }
    std::sort(order.begin(), order.end(), [](const CompFit& a, const CompFit& b) {
      if (a.mean_win_rate != b.mean_win_rate) return a.mean_win_rate > b.mean_win_rate;
      return a.first_id < b.first_id;
    });

    // Stack components so every item of a better component outranks the next one.
    double floor_score = 0.0;
    bool first = true;
    for (const auto& cf : order) {
      const auto& ls = log_strength[cf.id];
      double top = kNegInf, bottom = std::numeric_limits<double>::infinity();
      for (double v : ls) {
        top = std::max(top, v);
        if (std::isfinite(v)) bottom = std::min(bottom, v);
      }
      const double offset = first ? 0.0 : floor_score - top - 1.0;
      for (std::size_t k = 0; k < ls.size(); ++k) score[members[cf.id][k]] = ls[k] + offset;
      floor_score = bottom + offset;
      first = false;
    }
    if (order.size() > 1) {
      double max_score = kNegInf;
      for (std::size_t i = 0; i < g.ids.size(); ++i)
        if (active[i]) max_score = std::max(max_score, score[i]);
      double total = 0.0;
      for (std::size_t i = 0; i < g.ids.size(); ++i)
        if (active[i]) total += strength[i] = std::exp(score[i] - max_score);
      for (std::size_t i = 0; i < g.ids.size(); ++i) strength[i] /= total;
    }
  }
  result.components = 0;
  {
    std::vector<bool> seen(n_comp, false);
    for (std::size_t i = 0; i < g.ids.size(); ++i)
      if (active[i] && !seen[comp[i]]) {
        seen[comp[i]] = true;
        ++result.components;
      }
  }

  for (std::size_t i = 0; i < g.ids.size(); ++i) {
    if (!active[i]) continue;
    RankedItem item;
    item.item_id = g.ids[i];
    item.score = score[i];
    item.n_comparisons = std::llround(g.wins[i] + g.losses[i]);
    item.strength = options.method == RankMethod::kBradleyTerry ? strength[i] : 0.0;
    result.items.push_back(std::move(item));
  }
  order_and_rank(result.items);
  return result;
}

void write_ranked(std::ostream& out, const RankingResult& ranking) {
  out << "# method: " << to_string(ranking.method) << '\n';
  if (ranking.method == RankMethod::kBradleyTerry)
    out << "# converged: " << (ranking.converged ? "true" : "false") << " iterations: " << ranking.iterations
        << " components: " << ranking.components << '\n';
  out << "item_id\tscore\trank\tn_comparisons\tstrength\n";
  for (const auto& it : ranking.items)
    out << it.item_id << '\t' << format_double(it.score) << '\t' << it.rank << '\t' << it.n_comparisons << '\t'
        << format_double(it.strength) << '\n';
}

std::vector<RankedItem> read_ranked(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_item = table.require_column("item_id");
  const auto c_score = table.require_column("score");
  const auto c_rank = table.require_column("rank");
  const auto c_cmp = table.column("n_comparisons");
  const auto c_str = table.column("strength");
  std::vector<RankedItem> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    auto where = path.string() + ":" + std::to_string(table.line_number(r)) + ": ";
    if (row.size() != table.columns().size()) throw DataError(where + "wrong number of fields");
    RankedItem it;
    it.item_id = row[c_item];
    auto score = parse_double(row[c_score]);
    auto rank = parse_int64(row[c_rank]);
    if (!score || std::isnan(*score) || !rank) throw DataError(where + "bad score or rank");
    it.score = *score;
    it.rank = *rank;
    if (c_cmp) it.n_comparisons = parse_int64(row[*c_cmp]).value_or(0);
    if (c_str) it.strength = parse_double(row[*c_str]).value_or(0.0);
    out.push_back(std::move(it));
  }
  return out;
}

std::string_view to_string(Label label) { return label == Label::kPositive ? "positive" : "negative"; }

std::vector<LabeledExample> label_quantiles(const std::vector<RankedItem>& ranked, double top_fraction,
                                            double bottom_fraction) {
  if (!(top_fraction >= 0.0 && bottom_fraction >= 0.0) || top_fraction + bottom_fraction > 1.0 + 1e-12)
    throw ConfigError("label fractions must be non-negative and sum to at most 1");
  std::vector<const RankedItem*> order;
  order.reserve(ranked.size());
  for (const auto& r : ranked) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const RankedItem* a, const RankedItem* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->item_id < b->item_id;
  });
  const double n = static_cast<double>(order.size());
  const auto n_pos = static_cast<std::size_t>(std::floor(n * top_fraction + 1e-9));
  const auto n_neg = static_cast<std::size_t>(std::floor(n * bottom_fraction + 1e-9));
  if ((top_fraction > 0.0 && n_pos == 0) || (bottom_fraction > 0.0 && n_neg == 0))
    throw DataError("too few items to label (" + std::to_string(order.size()) + ")");

  std::vector<LabeledExample> out;
  out.reserve(n_pos + n_neg);
  for (std::size_t i = 0; i < n_pos; ++i) out.push_back({order[i]->item_id, Label::kPositive, order[i]->score});
  for (std::size_t i = order.size() - n_neg; i < order.size(); ++i)
    out.push_back({order[i]->item_id, Label::kNegative, order[i]->score});
  return out;
}

void write_labels(std::ostream& out, const std::vector<LabeledExample>& labels) {
  out << "item_id\tlabel\tscore\n";
  for (const auto& l : labels) out << l.item_id << '\t' << to_string(l.label) << '\t' << format_double(l.score) << '\n';
}

std::vector<LabeledExample> read_labels(const std::filesystem::path& path) {
  auto table = DelimitedTable::read(path);
  const auto c_item = table.require_column("item_id");
  const auto c_label = table.require_column("label");
  const auto c_score = table.column("score");
  std::vector<LabeledExample> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& row = table.row(r);
    auto where = path.string() + ":" + std::to_string(table.line_number(r)) + ": ";
    if (row.size() != table.columns().size()) throw DataError(where + "wrong number of fields");
    LabeledExample l;
    l.item_id = row[c_item];
    if (row[c_label] == "positive" || row[c_label] == "1")
      l.label = Label::kPositive;
    else if (row[c_label] == "negative" || row[c_label] == "0")
      l.label = Label::kNegative;
    else
      throw DataError(where + "label must be positive or negative");
    if (c_score) l.score = parse_double(row[*c_score]).value_or(0.0);
    out.push_back(std::move(l));
  }
  return out;
}

BusinessReport business_report(const std::vector<LabeledExample>& labels, const ItemActivity& activity) {
  BusinessReport rep;
  for (const auto& l : labels) {
    auto& m = l.label == Label::kPositive ? rep.positive : rep.negative;
    ++m.items;
    if (const auto* c = activity.find(l.item_id)) {
      m.impressions += c->impressions;
      m.clicks += c->clicks;
      m.units_sold += c->units_sold;
      m.revenue += c->revenue;
    }
  }
  if (activity.events > 0) rep.observation_days = static_cast<double>(activity.max_ts - activity.min_ts) / 86'400'000.0;

  for (auto* m : {&rep.positive, &rep.negative}) {
    if (m->impressions > 0) {
      m->ctr = static_cast<double>(m->clicks) / static_cast<double>(m->impressions);
      m->revenue_per_1k_impressions = 1000.0 * m->revenue / static_cast<double>(m->impressions);
    }
    if (m->items > 0) m->mean_impressions_per_item = static_cast<double>(m->impressions) / static_cast<double>(m->items);
    if (rep.observation_days > 0.0) {
      m->rate_of_sale = static_cast<double>(m->units_sold) / rep.observation_days;
      if (m->items > 0) m->rate_of_sale_per_item = *m->rate_of_sale / static_cast<double>(m->items);
    }
  }
  return rep;
}

BusinessReport business_report(const std::vector<LabeledExample>& labels, const std::vector<Event>& events) {
  return business_report(labels, summarize_activity(events));
}

std::string business_report_json(const BusinessReport& rep) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  auto metrics = [&](const ClassMetrics& m) {
    nlohmann::ordered_json j;
    j["items"] = m.items;
    j["impressions"] = m.impressions;
    j["mean_impressions_per_item"] = opt(m.mean_impressions_per_item);
    j["clicks"] = m.clicks;
    j["ctr"] = opt(m.ctr);
    j["revenue"] = m.revenue;
    j["revenue_per_1k_impressions"] = opt(m.revenue_per_1k_impressions);
    j["units_sold"] = m.units_sold;
    j["rate_of_sale"] = opt(m.rate_of_sale);
    j["rate_of_sale_per_item"] = opt(m.rate_of_sale_per_item);
    return j;
  };
  nlohmann::ordered_json j;
  j["observation_days"] = rep.observation_days;
  j["positive"] = metrics(rep.positive);
  j["negative"] = metrics(rep.negative);
  // Magnitudes observed on production t-shirt traffic, kept for side-by-side reading.
  j["reference_findings"] = {
      {"positive", {{"impressions", 410493}, {"ctr", 0.039}, {"revenue_per_1k_impressions", 0.412}, {"rate_of_sale", 5.88}}},
      {"negative", {{"impressions", 390113}, {"ctr", 0.021}, {"revenue_per_1k_impressions", 0.211}, {"rate_of_sale", 1.61}}}};
  return j.dump(2);
}

}  // namespace prefminer
