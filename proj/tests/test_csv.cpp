#include <doctest.h>

#include <sstream>

#include "readmit/csv.hpp"
#include "readmit/error.hpp"

using namespace readmit;

TEST_CASE("csv parses quoted fields, embedded commas and quotes") {
    std::istringstream in("a,b,c\n1,\"x,y\",\"he said \"\"hi\"\"\"\n2,,z\n");
    const CsvTable t = read_csv(in, "t.csv");
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0] == std::vector<std::string>{"1", "x,y", "he said \"hi\""});
    CHECK(t.rows[1] == std::vector<std::string>{"2", "", "z"});
    CHECK(t.line_numbers[0] == 2);
}

TEST_CASE("csv handles CRLF and a quoted embedded newline") {
    std::istringstream in("a,b\r\n1,\"two\nlines\"\r\n3,4\r\n");
    const CsvTable t = read_csv(in, "t.csv");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "two\nlines");
    CHECK(t.rows[1] == std::vector<std::string>{"3", "4"});
    // the embedded newline consumes a physical line
    CHECK(t.line_numbers[1] == 4);
}

TEST_CASE("csv column lookup") {
    std::istringstream in("x,y\n1,2\n");
    const CsvTable t = read_csv(in, "t.csv");
    CHECK(t.column("y") == 1);
    CHECK_THROWS_AS((void)t.require_column("z"), Error);
}

TEST_CASE("csv escaping round-trips through the parser") {
    std::ostringstream out;
    const std::vector<std::string> row = {"plain", "with,comma", "with \"quote\"", "nl\nhere", ""};
    write_csv_row(out, row);
    std::istringstream in("a,b,c,d,e\n" + out.str());
    const CsvTable t = read_csv(in, "t.csv");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0] == row);
}

TEST_CASE("format_double is the shortest exact round-trip form") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1.0");
    CHECK(format_double(-2.5) == "-2.5");
    const double third = 1.0 / 3.0;
    CHECK(std::stod(format_double(third)) == third);
    const double awkward = 0.8 + 0.6;  // 1.4000000000000001
    CHECK(std::stod(format_double(awkward)) == awkward);
}
