#include "prefminer/sessionizer.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "prefminer/detail/event_json.hpp"
#include "prefminer/error.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/text_io.hpp"

namespace prefminer {

namespace {

void cut_user_sessions(std::vector<Event>& events, std::vector<std::size_t> idx, std::int64_t gap,
                       std::vector<Session>& out) {
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return events[a].timestamp_ms < events[b].timestamp_ms; });
  Session current;
  for (std::size_t i : idx) {
    Event& ev = events[i];
    if (!current.events.empty() && ev.timestamp_ms - current.end_ts >= gap) {
      out.push_back(std::move(current));
      current = Session{};
    }
    if (current.events.empty()) {
      current.user_id = ev.user_id;
      current.start_ts = ev.timestamp_ms;
    }
    current.end_ts = ev.timestamp_ms;
    current.events.push_back(std::move(ev));
  }
  if (!current.events.empty()) out.push_back(std::move(current));
}

}  // namespace

std::vector<Session> sessionize(std::vector<Event> events, std::int64_t inactivity_gap_ms, unsigned threads) {
  if (inactivity_gap_ms <= 0) throw ConfigError("inactivity gap must be positive");

  // Per-user index lists, in input order.
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < events.size(); ++i) by_user[events[i].user_id].push_back(i);

  std::vector<const std::vector<std::size_t>*> users;
  users.reserve(by_user.size());
  for (const auto& [user, idx] : by_user) users.push_back(&idx);

  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(users.size(), threads * 4u));
  std::vector<std::vector<Session>> partial(shards);
  parallel_shards(shards, threads, [&](std::size_t s) {
    for (std::size_t u = s; u < users.size(); u += shards) cut_user_sessions(events, *users[u], inactivity_gap_ms, partial[s]);
  });

  std::vector<Session> out;
  out.reserve(std::accumulate(partial.begin(), partial.end(), std::size_t{0},
                              [](std::size_t acc, const auto& p) { return acc + p.size(); }));
  for (auto& p : partial)
    for (auto& s : p) out.push_back(std::move(s));
  std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
    return std::tie(a.user_id, a.start_ts) < std::tie(b.user_id, b.start_ts);
  });
  return out;
}

void write_sessions(std::ostream& out, const std::vector<Session>& sessions) {
  for (const auto& s : sessions) {
    nlohmann::ordered_json obj;
    obj["user_id"] = s.user_id;
    obj["start_ts"] = s.start_ts;
    obj["end_ts"] = s.end_ts;
    auto& evs = obj["events"] = nlohmann::ordered_json::array();
    for (const auto& ev : s.events) evs.push_back(detail::event_to_json(ev, false));
    out << obj.dump() << '\n';
  }
}

std::vector<Session> read_sessions(std::istream& in) {
  std::vector<Session> sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& why) {
      return DataError("session line " + std::to_string(line_no) + ": " + why);
    };
    auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw fail("not a JSON object");
    Session s;
    try {
      s.user_id = obj.at("user_id").get<std::string>();
      s.start_ts = obj.at("start_ts").get<std::int64_t>();
      s.end_ts = obj.at("end_ts").get<std::int64_t>();
      for (const auto& e : obj.at("events")) {
        std::string reason;
        auto ev = detail::event_from_json(e, &reason, &s.user_id);
        if (!ev) throw fail(reason);
        if (auto bad = validate_event(*ev); !bad.empty()) throw fail(bad);
        s.events.push_back(std::move(*ev));
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

std::vector<Session> read_sessions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_sessions(in);
}

}  // namespace prefminer
