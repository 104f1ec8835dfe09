#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support/temp_dir.hpp"
#include "prefminer/error.hpp"
#include "prefminer/rng.hpp"
#include "prefminer/text_io.hpp"

using namespace prefminer;

TEST_CASE("split keeps empty fields") {
  auto f = split_fields("a\t\tb\t", '\t');
  REQUIRE(f.size() == 4);
  CHECK(f[0] == "a");
  CHECK(f[1].empty());
  CHECK(f[3].empty());
  CHECK(split_fields("", ',').size() == 1);
}

TEST_CASE("delimiter detection and trimming") {
  CHECK(detect_delimiter("a\tb,c") == '\t');
  CHECK(detect_delimiter("a,b") == ',');
  CHECK(trim("  x y \r") == "x y");
}

TEST_CASE("number parsing is strict") {
  CHECK(*parse_double("1.5") == 1.5);
  CHECK(*parse_double("-2e3") == -2000.0);
  CHECK_FALSE(parse_double("1.5x").has_value());
  CHECK_FALSE(parse_double("").has_value());
  CHECK(*parse_int64("-42") == -42);
  CHECK_FALSE(parse_int64("4.2").has_value());
  CHECK_FALSE(parse_int64("99999999999999999999").has_value());
}

TEST_CASE("format_double round-trips exactly") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(200)) - 100);
    CHECK(*parse_double(format_double(v)) == v);
  }
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(0.25) == "0.25");
}

TEST_CASE("delimited table skips comments and reports line numbers") {
  testutil::TempDir dir;
  auto p = dir.write("t.tsv", "# comment\nid\tvalue\n\nx\t1\n# more\ny\t2\n");
  auto t = DelimitedTable::read(p);
  CHECK(t.rows() == 2);
  CHECK(t.line_number(1) == 6);
  CHECK(t.require_column("value") == 1);
  CHECK_FALSE(t.column("nope").has_value());
  CHECK_THROWS_AS(t.require_column("nope"), DataError);
  CHECK_THROWS_AS(DelimitedTable::read(dir / "absent.tsv"), DataError);
}
