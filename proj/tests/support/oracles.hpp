#pragma once

// Brute-force reference implementations and random input generators shared by the unit and
// acceptance tests. Nothing here calls the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prefminer/event.hpp"
#include "prefminer/pair_miner.hpp"
#include "prefminer/rng.hpp"
#include "prefminer/sessionizer.hpp"

namespace oracle {

using prefminer::Event;
using prefminer::EventKind;
using prefminer::Rng;

inline std::string id(const char* prefix, std::uint64_t i) { return prefix + std::to_string(i); }

// ---------------------------------------------------------------- sessionizer

// Random per-user streams in shuffled order. Gaps are drawn so that exact-boundary gaps
// (gap_ms, gap_ms - 1, gap_ms + 1) and equal timestamps occur often.
inline std::vector<Event> random_user_streams(Rng& rng, std::size_t users, std::size_t max_events,
                                              std::int64_t gap_ms) {
  std::vector<Event> out;
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t n = 1 + rng.below(max_events);
    std::int64_t t = static_cast<std::int64_t>(rng.below(1'000'000));
    for (std::size_t k = 0; k < n; ++k) {
      switch (rng.below(6)) {
        case 0: t += gap_ms; break;
        case 1: t += gap_ms - 1; break;
        case 2: t += gap_ms + 1; break;
        case 3: break;  // same timestamp
        case 4: t += static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(gap_ms))); break;
        default: t += static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(3 * gap_ms))); break;
      }
      Event e;
      e.user_id = id("u", u);
      e.timestamp_ms = t;
      e.kind = EventKind::kImpression;
      e.item_id = id("i", rng.below(20));
      e.query_id = id("q", k);
      e.display_rank = static_cast<std::int64_t>(k + 1);
      out.push_back(e);
    }
  }
  rng.shuffle(out);
  return out;
}

// Reference: sort (user, timestamp, input position) with a plain insertion sort, then cut
// on a single pass.
inline std::vector<prefminer::Session> brute_sessionize(const std::vector<Event>& events, std::int64_t gap_ms) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto key = [&](std::size_t x) { return std::make_tuple(events[x].user_id, events[x].timestamp_ms, x); };
    std::size_t pos = order.size();
    order.push_back(i);
    while (pos > 0 && key(order[pos]) < key(order[pos - 1])) {
      std::swap(order[pos], order[pos - 1]);
      --pos;
    }
  }
  std::vector<prefminer::Session> out;
  for (std::size_t i : order) {
    const Event& e = events[i];
    if (out.empty() || out.back().user_id != e.user_id || e.timestamp_ms - out.back().end_ts >= gap_ms) {
      prefminer::Session s;
      s.user_id = e.user_id;
      s.start_ts = e.timestamp_ms;
      out.push_back(s);
    }
    out.back().end_ts = e.timestamp_ms;
    out.back().events.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------- pair mining

struct Merch {
  std::string brand;
  double list_price;
  double discount;
};

inline bool brute_keep(const std::map<std::string, Merch>& catalog, const std::string& a, const std::string& b,
                       const prefminer::MerchFilterConfig& cfg) {
  auto ia = catalog.find(a), ib = catalog.find(b);
  if (ia == catalog.end() || ib == catalog.end()) return false;
  if (!cfg.enabled) return true;
  const double pa = ia->second.list_price * (1.0 - ia->second.discount);
  const double pb = ib->second.list_price * (1.0 - ib->second.discount);
  const double lo = pa < pb ? pa : pb;
  if ((pa > pb ? pa - pb : pb - pa) / lo > cfg.max_price_rel_diff + 1e-12) return false;
  const double dd = ia->second.discount - ib->second.discount;
  if ((dd < 0 ? -dd : dd) > cfg.max_discount_abs_diff + 1e-12) return false;
  if (cfg.brand_rule == prefminer::BrandRule::kSameBrand) return ia->second.brand == ib->second.brand;
  if (cfg.brand_rule == prefminer::BrandRule::kBrandClusterMap) {
    auto cl = [&](const std::string& br) {
      auto it = cfg.brand_clusters.find(br);
      return it == cfg.brand_clusters.end() ? br : it->second;
    };
    return cl(ia->second.brand) == cl(ib->second.brand);
  }
  return true;
}

// Set semantics per (session, query): the clicked set C, best rank per impressed item, and
// every (c, x) with x impressed strictly above c and x not in C.
inline std::set<std::pair<std::string, std::string>> brute_query_pairs(const std::vector<Event>& events,
                                                                      const std::string& query) {
  std::map<std::string, std::int64_t> best;
  std::set<std::string> clicked;
  for (const auto& e : events) {
    if (e.query_id != query) continue;
    if (e.kind == EventKind::kImpression) {
      auto it = best.find(e.item_id);
      if (it == best.end() || *e.display_rank < it->second) best[e.item_id] = *e.display_rank;
    } else if (e.kind == EventKind::kClick) {
      clicked.insert(e.item_id);
    }
  }
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& c : clicked) {
    if (!best.count(c)) continue;
    for (const auto& [x, r] : best)
      if (r < best[c] && !clicked.count(x)) out.insert({c, x});
  }
  return out;
}

// Canonical (s1, s2, count) after signed tallying and dropping counts <= min_count.
inline std::vector<prefminer::PreferencePair> brute_mine(const std::vector<prefminer::Session>& sessions,
                                                         const std::map<std::string, Merch>& catalog,
                                                         const prefminer::MerchFilterConfig& cfg,
                                                         std::int64_t min_count) {
  std::map<std::pair<std::string, std::string>, std::int64_t> net;
  for (const auto& s : sessions) {
    std::set<std::string> queries;
    for (const auto& e : s.events) queries.insert(e.query_id);
    for (const auto& q : queries)
      for (const auto& [c, x] : brute_query_pairs(s.events, q)) {
        if (!brute_keep(catalog, c, x, cfg)) continue;
        if (c < x)
          net[{c, x}] += 1;
        else
          net[{x, c}] -= 1;
      }
  }
  std::vector<prefminer::PreferencePair> out;
  for (const auto& [k, v] : net) {
    if (v > min_count) out.push_back({k.first, k.second, v});
    if (-v > min_count) out.push_back({k.second, k.first, -v});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return std::tie(a.s1, a.s2) < std::tie(b.s1, b.s2); });
  return out;
}

// Random sessions with several queries, repeated impressions, multi-clicks and clicks
// without impressions. Items i0..i{n_items-1}; catalog misses a few of them.
struct RandomMiningCase {
  std::vector<prefminer::Session> sessions;
  std::map<std::string, Merch> merch;
  prefminer::Catalog catalog;
};

inline RandomMiningCase random_mining_case(Rng& rng, std::size_t max_items, std::size_t max_sessions) {
  RandomMiningCase c;
  const std::size_t n_items = 2 + rng.below(max_items - 1);
  for (std::size_t i = 0; i < n_items; ++i) {
    if (rng.below(10) == 0) continue;  // unknown to the catalog
    Merch m{id("b", rng.below(4)), std::round(rng.uniform(500.0, 1500.0)), std::round(rng.uniform(0.0, 0.5) * 100) / 100};
    c.merch[id("i", i)] = m;
    prefminer::CatalogItem item;
    item.item_id = id("i", i);
    item.brand = m.brand;
    item.list_price = m.list_price;
    item.discount_fraction = m.discount;
    item.category = "c";
    c.catalog.items[item.item_id] = item;
  }
  const std::size_t n_sessions = 1 + rng.below(max_sessions);
  for (std::size_t s = 0; s < n_sessions; ++s) {
    prefminer::Session sess;
    sess.user_id = id("u", rng.below(30));
    sess.start_ts = static_cast<std::int64_t>(s) * 10'000'000;
    std::int64_t t = sess.start_ts;
    const std::size_t queries = 1 + rng.below(3);
    for (std::size_t q = 0; q < queries; ++q) {
      const std::string qid = id("q", rng.below(4));  // query ids may repeat within a session
      const std::size_t shown = 1 + rng.below(10);
      for (std::size_t r = 0; r < shown; ++r) {
        Event e;
        e.user_id = sess.user_id;
        e.timestamp_ms = t++;
        e.kind = EventKind::kImpression;
        e.item_id = id("i", rng.below(n_items));
        e.query_id = qid;
        e.display_rank = static_cast<std::int64_t>(1 + rng.below(12));
        sess.events.push_back(e);
      }
      const std::size_t clicks = rng.below(4);
      for (std::size_t k = 0; k < clicks; ++k) {
        Event e;
        e.user_id = sess.user_id;
        e.timestamp_ms = t++;
        e.kind = EventKind::kClick;
        e.item_id = id("i", rng.below(n_items));
        e.query_id = qid;
        e.display_rank = static_cast<std::int64_t>(1 + rng.below(12));
        sess.events.push_back(e);
      }
    }
    sess.end_ts = t - 1;
    c.sessions.push_back(std::move(sess));
  }
  return c;
}

inline prefminer::MerchFilterConfig random_filter(Rng& rng) {
  prefminer::MerchFilterConfig cfg;
  cfg.enabled = rng.below(4) != 0;
  cfg.max_price_rel_diff = std::round(rng.uniform(0.0, 0.6) * 100) / 100;
  cfg.max_discount_abs_diff = std::round(rng.uniform(0.0, 0.3) * 100) / 100;
  switch (rng.below(3)) {
    case 0: cfg.brand_rule = prefminer::BrandRule::kAny; break;
    case 1: cfg.brand_rule = prefminer::BrandRule::kSameBrand; break;
    default:
      cfg.brand_rule = prefminer::BrandRule::kBrandClusterMap;
      cfg.brand_clusters = {{"b0", "x"}, {"b1", "x"}};
      break;
  }
  return cfg;
}

// ---------------------------------------------------------------- linear algebra

// Cyclic Jacobi eigen-decomposition of a symmetric matrix; eigenvalues sorted descending.
inline std::pair<std::vector<double>, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  std::vector<double> values;
  Eigen::MatrixXd vectors(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    values.push_back(a(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k)]));
    vectors.col(k) = v.col(idx[static_cast<std::size_t>(k)]);
  }
  return {values, vectors};
}

// Sample covariance with an N-1 denominator, written out element by element.
inline Eigen::MatrixXd brute_covariance(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(j)] += x(i, j);
    mean[static_cast<std::size_t>(j)] /= static_cast<double>(n);
  }
  Eigen::MatrixXd c(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        s += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
      c(a, b) = s / static_cast<double>(n - 1);
    }
  return c;
}

// ---------------------------------------------------------------- classifier metrics

// AUC as (wins + ties / 2) / (P * N) over every positive-negative pair, kept as an exact
// rational: returns {2 * wins + ties, 2 * P * N}.
inline std::pair<std::int64_t, std::int64_t> brute_auc_fraction(const std::vector<double>& scores,
                                                                const std::vector<int>& labels) {
  std::int64_t twice = 0, p = 0, n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) ++p; else ++n;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return {twice, 2 * p * n};
}

// Logistic loss recomputed from scratch: mean log-loss + (l2/2)|w|^2, theta = (w..., b).
inline double brute_logreg_loss(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& theta,
                                double l2) {
  const Eigen::Index k = x.cols();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = theta(k);
    for (Eigen::Index j = 0; j < k; ++j) z += theta(j) * x(i, j);
    const double p = 1.0 / (1.0 + std::exp(-z));
    loss -= y[static_cast<std::size_t>(i)] ? std::log(p) : std::log(1.0 - p);
  }
  loss /= static_cast<double>(x.rows());
  double w2 = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) w2 += theta(j) * theta(j);
  return loss + 0.5 * l2 * w2;
}

}  // namespace oracle
