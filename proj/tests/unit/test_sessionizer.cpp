#include <doctest.h>

#include <sstream>

#include "../support/oracles.hpp"
#include "prefminer/error.hpp"
#include "prefminer/sessionizer.hpp"

using namespace prefminer;

namespace {

constexpr std::int64_t kGap = kDefaultInactivityGapMs;
constexpr std::int64_t kMinute = 60'000;

Event at(const std::string& user, std::int64_t ts, const std::string& item = "A") {
  Event e;
  e.user_id = user;
  e.timestamp_ms = ts;
  e.kind = EventKind::kImpression;
  e.item_id = item;
  e.query_id = "q";
  e.display_rank = 1;
  return e;
}

std::vector<Event> flatten(const std::vector<Session>& sessions) {
  std::vector<Event> out;
  for (const auto& s : sessions) out.insert(out.end(), s.events.begin(), s.events.end());
  return out;
}

}  // namespace

TEST_CASE("29 minutes apart stays one session, 31 minutes splits") {
  CHECK(sessionize({at("u", 0), at("u", 29 * kMinute)}).size() == 1);
  CHECK(sessionize({at("u", 0), at("u", 31 * kMinute)}).size() == 2);
}

TEST_CASE("a gap of exactly 30 minutes starts a new session") {
  auto s = sessionize({at("u", 0), at("u", kGap)});
  REQUIRE(s.size() == 2);
  CHECK(s[1].start_ts == kGap);
  CHECK(sessionize({at("u", 0), at("u", kGap - 1)}).size() == 1);
}

TEST_CASE("unsorted input, several users") {
  auto s = sessionize({at("b", 100), at("a", 5 * kGap), at("a", 0), at("b", 0), at("a", 10)});
  REQUIRE(s.size() == 3);
  CHECK(s[0].user_id == "a");
  CHECK(s[0].events.size() == 2);
  CHECK(s[0].start_ts == 0);
  CHECK(s[0].end_ts == 10);
  CHECK(s[1].user_id == "a");
  CHECK(s[1].start_ts == 5 * kGap);
  CHECK(s[2].user_id == "b");
}

TEST_CASE("equal timestamps keep input order") {
  auto s = sessionize({at("u", 7, "first"), at("u", 7, "second"), at("u", 3, "zero")});
  REQUIRE(s.size() == 1);
  CHECK(s[0].events[0].item_id == "zero");
  CHECK(s[0].events[1].item_id == "first");
  CHECK(s[0].events[2].item_id == "second");
}

TEST_CASE("empty input and invalid gap") {
  CHECK(sessionize({}).empty());
  CHECK_THROWS_AS(sessionize({at("u", 0)}, 0), ConfigError);
}

TEST_CASE("random streams match the brute-force reference for any thread count") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto events = oracle::random_user_streams(rng, 1 + rng.below(8), 30, kGap);
    auto expected = oracle::brute_sessionize(events, kGap);
    CHECK(sessionize(events, kGap, 1) == expected);
    CHECK(sessionize(events, kGap, 4) == expected);
  }
}

TEST_CASE("session boundaries do not depend on input order") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto events = oracle::random_user_streams(rng, 4, 25, kGap);
    auto a = sessionize(events);
    rng.shuffle(events);
    auto b = sessionize(events);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].user_id == b[i].user_id);
      CHECK(a[i].start_ts == b[i].start_ts);
      CHECK(a[i].end_ts == b[i].end_ts);
      CHECK(a[i].events.size() == b[i].events.size());
    }
  }
}

TEST_CASE("partition, gap and idempotence properties") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto events = oracle::random_user_streams(rng, 1 + rng.below(5), 40, kGap);
    auto sessions = sessionize(events);
    CHECK(flatten(sessions).size() == events.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      const auto& s = sessions[i];
      for (std::size_t k = 1; k < s.events.size(); ++k) {
        CHECK(s.events[k].timestamp_ms >= s.events[k - 1].timestamp_ms);
        CHECK(s.events[k].timestamp_ms - s.events[k - 1].timestamp_ms < kGap);
        CHECK(s.events[k].user_id == s.user_id);
      }
      if (i > 0 && sessions[i - 1].user_id == s.user_id) CHECK(s.start_ts - sessions[i - 1].end_ts >= kGap);
    }
    CHECK(sessionize(flatten(sessions)) == sessions);
  }
}

TEST_CASE("sessions round-trip through JSON lines") {
  Rng rng(3);
  auto events = oracle::random_user_streams(rng, 5, 20, kGap);
  events[0].kind = EventKind::kOrder;
  events[0].display_rank.reset();
  events[0].quantity = 2;
  events[0].revenue = 10.25;
  auto sessions = sessionize(events);
  std::stringstream buf;
  write_sessions(buf, sessions);
  CHECK(read_sessions(buf) == sessions);
}
