#include <doctest.h>

#include <sstream>

#include "../support/temp_dir.hpp"
#include "prefminer/error.hpp"
#include "prefminer/event.hpp"
#include "prefminer/rng.hpp"
#include "prefminer/synth.hpp"
#include "prefminer/text_io.hpp"

using namespace prefminer;

namespace {

const char* kHeader = "user_id\tts_ms\tkind\titem_id\tquery_id\tdisplay_rank\tquantity\trevenue\n";

EventParseResult parse_text(const std::string& text, double tolerance = 0.01,
                            EventFormat format = EventFormat::kDelimited) {
  std::istringstream in(text);
  EventParseOptions opt;
  opt.format = format;
  opt.max_bad_line_fraction = tolerance;
  return parse_events(in, opt);
}

std::vector<Event> random_events(Rng& rng, std::size_t n) {
  std::vector<Event> out;
  for (std::size_t i = 0; i < n; ++i) {
    Event e;
    e.user_id = "u" + std::to_string(rng.below(50));
    e.timestamp_ms = static_cast<std::int64_t>(rng.next() >> 20);
    e.kind = static_cast<EventKind>(rng.below(4));
    e.item_id = "item-" + std::to_string(rng.below(100));
    if (e.kind == EventKind::kImpression || e.kind == EventKind::kClick) {
      e.query_id = "q" + std::to_string(rng.below(20));
      e.display_rank = static_cast<std::int64_t>(1 + rng.below(64));
    }
    if (e.kind == EventKind::kOrder) {
      e.quantity = static_cast<std::int64_t>(rng.below(5));
      e.revenue = rng.uniform(0.0, 5000.0);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("well-formed three-line file gives three events and no rejects") {
  auto r = parse_text(std::string(kHeader) +
                      "u1\t1000\timpression\tA\tq1\t1\t\t\n"
                      "u1\t1005\tclick\tA\tq1\t1\t\t\n"
                      "u1\t2000\torder\tA\t\t\t2\t1998.5\n");
  CHECK(r.accepted == 3);
  CHECK(r.rejected == 0);
  CHECK(r.events.size() == 3);
  CHECK(r.events[2].kind == EventKind::kOrder);
  CHECK(*r.events[2].quantity == 2);
  CHECK(*r.events[2].revenue == 1998.5);
}

TEST_CASE("negative display rank is rejected and counted") {
  auto r = parse_text(std::string(kHeader) +
                      "u1\t1000\timpression\tA\tq1\t1\t\t\n"
                      "u1\t1001\timpression\tB\tq1\t-2\t\t\n"
                      "u1\t1002\timpression\tC\tq1\t3\t\t\n",
                      1.0);
  CHECK(r.accepted == 2);
  CHECK(r.rejected == 1);
  CHECK(r.first_bad_line == 3);
  CHECK(r.reject_reasons.at("display_rank<1") == 1);
  CHECK(r.total() == 3);
}

TEST_CASE("too many malformed lines is a hard error naming the first offender") {
  std::string text = kHeader;
  for (int i = 0; i < 50; ++i) text += "u1\t" + std::to_string(1000 + i) + "\timpression\tA\tq1\t1\t\t\n";
  text += "u1\tnot-a-number\timpression\tA\tq1\t1\t\t\n";
  CHECK_THROWS_AS(parse_text(text, 0.01), DataError);
  try {
    parse_text(text, 0.01);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 52") != std::string::npos);
  }
  CHECK_NOTHROW(parse_text(text, 0.05));
}

TEST_CASE("record invariants") {
  Event e;
  e.user_id = "u";
  e.item_id = "i";
  e.kind = EventKind::kImpression;
  CHECK(validate_event(e) == "missing-display_rank");
  e.display_rank = 0;
  CHECK(validate_event(e) == "display_rank<1");
  e.display_rank = 1;
  CHECK(validate_event(e) == "missing-query");
  e.query_id = "q";
  CHECK(validate_event(e).empty());
  e.kind = EventKind::kAddToCart;
  CHECK(validate_event(e) == "unexpected-display_rank");
  e.display_rank.reset();
  CHECK(validate_event(e).empty());
  ObservationWindow w{0, 10};
  e.timestamp_ms = 11;
  CHECK(validate_event(e, w) == "outside-window");
}

TEST_CASE("missing mandatory column is an error") {
  CHECK_THROWS_AS(parse_text("user_id\tkind\titem_id\nu\tclick\tA\n"), DataError);
}

TEST_CASE("comma-delimited input is detected from the header") {
  auto r = parse_text("user_id,ts_ms,kind,item_id,query_id,display_rank,quantity,revenue\n"
                      "u1,5,impression,A,q,2,,\n");
  REQUIRE(r.accepted == 1);
  CHECK(*r.events[0].display_rank == 2);
}

TEST_CASE("delimited and line-json round trips are exact") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto events = random_events(rng, 200);
    std::ostringstream tsv, jsonl;
    write_events_delimited(tsv, events);
    write_events_jsonl(jsonl, events);
    auto a = parse_text(tsv.str());
    auto b = parse_text(jsonl.str(), 0.01, EventFormat::kLineJson);
    CHECK(a.events == events);
    CHECK(b.events == events);
  }
}

TEST_CASE("format is guessed from the extension") {
  CHECK(guess_event_format("x/events.jsonl") == EventFormat::kLineJson);
  CHECK(guess_event_format("x/events.ndjson") == EventFormat::kLineJson);
  CHECK(guess_event_format("x/events.tsv") == EventFormat::kDelimited);
}

TEST_CASE("catalog parsing") {
  testutil::TempDir dir;
  SUBCASE("two rows") {
    auto p = dir.write("c.tsv",
                       "item_id\tbrand\tlist_price\tdiscount_fraction\tcategory\n"
                       "A\tb1\t1000\t0.1\tmen-tshirts\n"
                       "B\tb2\t800\t0\tmen-tshirts\n");
    auto c = parse_catalog(p);
    CHECK(c.items.size() == 2);
    CHECK(c.find("A")->selling_price() == doctest::Approx(900.0));
    CHECK(c.duplicate_warnings == 0);
  }
  SUBCASE("duplicate ids resolve last-wins with one warning") {
    auto p = dir.write("c.tsv",
                       "item_id\tbrand\tlist_price\tdiscount_fraction\tcategory\n"
                       "A\tb1\t1000\t0.1\tx\n"
                       "A\tb9\t500\t0.2\tx\n");
    auto c = parse_catalog(p);
    CHECK(c.items.size() == 1);
    CHECK(c.duplicate_warnings == 1);
    CHECK(c.find("A")->brand == "b9");
  }
  SUBCASE("missing column and bad price") {
    auto p1 = dir.write("c1.tsv", "item_id\tbrand\tlist_price\tcategory\nA\tb\t1\tx\n");
    CHECK_THROWS_AS(parse_catalog(p1), DataError);
    auto p2 = dir.write("c2.tsv", "item_id\tbrand\tlist_price\tdiscount_fraction\tcategory\nA\tb\tcheap\t0\tx\n");
    CHECK_THROWS_AS(parse_catalog(p2), DataError);
  }
  SUBCASE("4096-dimensional feature vectors") {
    std::ostringstream text;
    text << "item_id\tbrand\tlist_price\tdiscount_fraction\tcategory";
    for (int d = 0; d < 4096; ++d) text << "\tf_" << d;
    text << '\n';
    for (int r = 0; r < 3; ++r) {
      text << "i" << r << "\tb\t100\t0\tx";
      for (int d = 0; d < 4096; ++d) text << '\t' << (r + d) * 0.5;
      text << '\n';
    }
    auto c = parse_catalog(dir.write("c.tsv", text.str()));
    CHECK(c.feature_dim == 4096);
    CHECK(c.find("i2")->feature_vector.size() == 4096);
    CHECK(c.find("i2")->feature_vector[4095] == doctest::Approx((2 + 4095) * 0.5));
  }
}

TEST_CASE("a million-line synthetic log parses to the generator's emission count") {
  WorldConfig cfg;
  cfg.n_items = 400;
  cfg.n_users = 5000;
  cfg.n_sessions = 55'000;
  auto world = generate_world(cfg);
  REQUIRE(world.emitted_events >= 1'000'000);
  testutil::TempDir dir;
  {
    auto out = open_output(dir / "events.tsv");
    write_events_delimited(out, world.events);
  }
  auto parsed = parse_events(dir / "events.tsv");
  CHECK(parsed.accepted == world.emitted_events);
  CHECK(parsed.rejected == 0);
}

TEST_CASE("item activity totals") {
  std::vector<Event> ev(4);
  ev[0] = {"u", 0, EventKind::kImpression, "A", "q", 1, {}, {}};
  ev[1] = {"u", 86'400'000, EventKind::kClick, "A", "q", 1, {}, {}};
  ev[2] = {"u", 2 * 86'400'000, EventKind::kOrder, "A", "", {}, 3, 30.0};
  ev[3] = {"u", 5, EventKind::kImpression, "B", "q", 2, {}, {}};
  auto a = summarize_activity(ev);
  CHECK(a.events == 4);
  CHECK(a.min_ts == 0);
  CHECK(a.max_ts == 2 * 86'400'000);
  CHECK(a.find("A")->impressions == 1);
  CHECK(a.find("A")->clicks == 1);
  CHECK(a.find("A")->units_sold == 3);
  CHECK(a.find("A")->revenue == 30.0);
  CHECK(a.find("B")->clicks == 0);
  CHECK(a.find("C") == nullptr);
}
