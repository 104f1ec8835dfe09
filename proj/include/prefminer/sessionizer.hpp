#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "prefminer/event.hpp"

namespace prefminer {

inline constexpr std::int64_t kDefaultInactivityGapMs = 30LL * 60 * 1000;

// One user's contiguous run of events. No two consecutive events are
// inactivity_gap or more apart.
struct Session {
  std::string user_id;
  std::vector<Event> events;
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;

  // Stable identifier used to key pairs back to their session.
  std::string key() const { return user_id + "#" + std::to_string(start_ts); }

  bool operator==(const Session&) const = default;
};

// Groups events per user and cuts a new session whenever the gap to the previous
// event is >= inactivity_gap_ms (an exact-gap tie opens a new session). Events with
// equal timestamps keep their input order. Output is ordered by (user_id, start_ts)
// and does not depend on `threads`.
std::vector<Session> sessionize(std::vector<Event> events, std::int64_t inactivity_gap_ms = kDefaultInactivityGapMs,
                                unsigned threads = 1);

// One JSON object per line: {"user_id", "start_ts", "end_ts", "events": [...]}
void write_sessions(std::ostream& out, const std::vector<Session>& sessions);
std::vector<Session> read_sessions(std::istream& in);
std::vector<Session> read_sessions(const std::filesystem::path& path);

}  // namespace prefminer
