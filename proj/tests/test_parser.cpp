#include <map>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;
using nlohmann::ordered_json;
using K = StatementKind;

namespace {

std::vector<TokenType> token_types(std::string_view text) {
    std::vector<TokenType> out;
    for (const auto& t : tokenize(text).tokens) out.push_back(t.type);
    return out;
}

ordered_json settings_of(const std::string& text) {
    auto desc = analyze(parse_script(text));
    REQUIRE(desc.statements.size() >= 1);
    return desc.statements[0].settings;
}

}  // namespace

TEST_CASE("tokenizer") {
    using T = TokenType;
    CHECK(token_types("VISUALIZE a USING LINE") == std::vector<T>{T::KEYWORD, T::IDENT, T::KEYWORD, T::KEYWORD, T::END});
    CHECK(token_types("") == std::vector<T>{T::END});
    CHECK(token_types("axis.tick_count = 5") == std::vector<T>{T::IDENT, T::DOT, T::IDENT, T::EQ, T::INTEGER, T::END});
    CHECK(token_types("'s' \"q\" 1.5 -- comment\n<= <> ||") ==
          std::vector<T>{T::STRING, T::QUOTED_IDENT, T::FLOAT, T::LE, T::NE, T::CONCAT, T::END});
    auto ts = tokenize("visualize");
    REQUIRE(ts.tokens[0].type == T::KEYWORD);
    CHECK(keyword_text(ts.tokens[0].keyword) == "VISUALIZE");
}

TEST_CASE("tokenizer reports unterminated strings and comments with their position") {
    auto s = tokenize("SELECT 'abc");
    REQUIRE(s.errors.size() == 1);
    CHECK(s.errors[0].loc.offset == 7);
    auto c = tokenize("SELECT 1 /* open");
    REQUIRE(c.errors.size() == 1);
    CHECK(c.errors[0].loc.offset == 9);
}

TEST_CASE("statement keywords are reserved, type and chart words are not") {
    for (const char* kw : {"select", "from", "where", "visualize", "using", "fetch", "load", "input", "set", "create"}) {
        CAPTURE(kw);
        auto k = lookup_keyword(kw);
        REQUIRE(k);
        CHECK(is_reserved(*k));
    }
    // Example data has a `timestamp` column and specs use `type` as a key.
    for (const char* kw : {"timestamp", "type", "table", "line", "chart"}) {
        CAPTURE(kw);
        auto k = lookup_keyword(kw);
        REQUIRE(k);
        CHECK_FALSE(is_reserved(*k));
    }
    CHECK_FALSE(lookup_keyword("activity"));
    CHECK_FALSE(parse_script("CREATE TABLE select AS SELECT 1;").errors.empty());
}

TEST_CASE("statement kinds and counts of the corpus") {
    const std::map<std::string, std::vector<K>> expected{
        {"inline_viz", {K::FETCH, K::LOAD, K::FETCH, K::LOAD, K::VISUALIZE}},
        {"dashboard_prev", {K::INPUT, K::FETCH, K::LOAD, K::CREATE_VIEW_AS, K::VISUALIZE, K::VISUALIZE}},
        {"dashboard_next", {K::INPUT, K::FETCH, K::LOAD, K::CREATE_VIEW_AS, K::VISUALIZE}},
        {"json_hooks", {K::FETCH, K::LOAD, K::LOAD}},
        {"multiline_short", {K::FETCH, K::LOAD, K::VISUALIZE}},
        {"multiline_verbose", {K::FETCH, K::LOAD, K::VISUALIZE}},
        {"explore_step1", {K::FETCH, K::LOAD, K::VISUALIZE}},
        {"explore_step2", {K::FETCH, K::LOAD, K::VISUALIZE, K::CREATE_TABLE_AS, K::VISUALIZE}},
        {"explore_step3", {K::FETCH, K::LOAD, K::VISUALIZE, K::INPUT, K::CREATE_TABLE_AS, K::VISUALIZE}},
        {"explore_step4", {K::FETCH, K::LOAD, K::VISUALIZE, K::INPUT, K::CREATE_TABLE_AS, K::VISUALIZE}},
        {"inputs", {K::SET, K::INPUT, K::INPUT, K::INPUT, K::FETCH, K::LOAD, K::CREATE_VIEW_AS, K::VISUALIZE}},
        {"sensor_lines", {K::SET, K::FETCH, K::LOAD, K::CREATE_TABLE_AS, K::VISUALIZE, K::CREATE_TABLE_AS, K::VISUALIZE,
                        K::CREATE_TABLE_AS, K::VISUALIZE}},
        {"sql_subset", {K::FETCH, K::LOAD, K::CREATE_TABLE_AS, K::CREATE_VIEW_AS, K::SELECT, K::VISUALIZE, K::VISUALIZE}},
    };
    auto scripts = dashql::test::corpus();
    CHECK(scripts.size() == expected.size());
    for (const auto& [name, text] : scripts) {
        CAPTURE(name);
        auto parsed = parse_script(text);
        CHECK(parsed.errors.empty());
        REQUIRE(expected.count(name));
        CHECK(dashql::test::kinds(parsed) == expected.at(name));
    }
}

TEST_CASE("single statements") {
    CHECK(dashql::test::kinds(parse_script("SELECT 1;")) == std::vector<K>{K::SELECT});
    CHECK(dashql::test::kinds(parse_script("visualize a using line chart;")) == std::vector<K>{K::VISUALIZE});
    CHECK(dashql::test::kinds(parse_script("SET 'title' = 'x'; SET (a = 1, b = 'c');")) == std::vector<K>{K::SET, K::SET});
    CHECK(dashql::test::kinds(parse_script("INPUT t TYPE BIGINT USING slider (min = 0, max = 5);")) == std::vector<K>{K::INPUT});
    CHECK(dashql::test::kinds(parse_script("FETCH r FROM HTTPS (url = 'https://a/b.csv', method = 'GET');")) == std::vector<K>{K::FETCH});
    CHECK(dashql::test::kinds(parse_script("FETCH r FROM TEST (url = 'x.csv');")) == std::vector<K>{K::FETCH});
    CHECK(dashql::test::kinds(parse_script("SELECT INTERVAL '3' HOUR, -2.5, NULL, true;")) == std::vector<K>{K::SELECT});
    CHECK(dashql::test::kinds(parse_script("-- lead\nSELECT 1; /* trailing */")) == std::vector<K>{K::SELECT});
    for (const char* v : {"TABLE", "LINE", "LINE CHART", "BAR CHART", "AREA CHART", "SCATTER", "SCATTER CHART", "STACKED BAR CHART",
                          "STACKED AREA CHART", "MULTI LINE CHART", "MULTI LINE"}) {
        CAPTURE(v);
        auto p = parse_script(std::string("VISUALIZE t USING ") + v + ";");
        CHECK(p.errors.empty());
        CHECK(dashql::test::kinds(p) == std::vector<K>{K::VISUALIZE});
    }
}

TEST_CASE("empty scripts are not errors") {
    for (const char* s : {"", "   \n", "-- only a comment\n"}) {
        auto p = parse_script(s);
        CHECK(p.statements.empty());
        CHECK(p.errors.empty());
    }
}

TEST_CASE("syntax errors are reported per statement and parsing resumes") {
    auto p = parse_script("SELECT 1;\nSELECT FROM WHERE;\nVISUALIZE x USING TABLE;");
    REQUIRE(p.errors.size() == 1);
    CHECK(p.errors[0].loc.offset >= 10);
    CHECK(p.errors[0].loc.offset < 28);
    CHECK_FALSE(p.errors[0].expected.empty());
    CHECK(dashql::test::kinds(p) == std::vector<K>{K::SELECT, K::VISUALIZE});

    auto q = parse_script("LOAD x FROM y USING XML;");
    CHECK(q.statements.empty());
    CHECK(q.errors.size() == 1);
}

TEST_CASE("key-value settings convert to nested JSON") {
    auto j = settings_of(
        "LOAD x FROM y USING CSV (Delimiter = ';', header = false, \"Mixed\" = 1, a.b.c = 2, arr = [1, 'x'], n = -3, f = 0.5, "
        "o = (p = (q = 'r')));");
    auto expected = ordered_json::parse(
        R"({"delimiter":";","header":false,"Mixed":1,"a":{"b":{"c":2}},"arr":[1,"x"],"n":-3,"f":0.5,"o":{"p":{"q":"r"}}})");
    CHECK(j == expected);
}

TEST_CASE("verbose VISUALIZE settings keep title, opacity and axis ticks") {
    auto desc = analyze(parse_script(dashql::test::script("explore_step4")));
    const auto& s = desc.statements.back();
    CHECK(s.viz_verbose);
    CHECK(s.settings["title"] == "Website Views");
    CHECK(s.settings["mark"]["opacity"] == 0.5);
    CHECK(s.settings["mark"]["line"] == true);
    CHECK(s.settings["encoding"]["x"]["axis"]["tick_count"] == 5);
    CHECK(s.settings["encoding"]["x"]["title"] == "Time");
}

TEST_CASE("printing and re-parsing yields key-equal trees") {
    for (const auto& [name, text] : dashql::test::corpus()) {
        CAPTURE(name);
        auto parsed = parse_script(text);
        auto reparsed = parse_script(print_script(parsed));
        CHECK(reparsed.errors.empty());
        REQUIRE(reparsed.statements.size() == parsed.statements.size());
        for (size_t i = 0; i < parsed.statements.size(); ++i) {
            CAPTURE(i);
            CHECK(subtree_equal(*parsed.arena, parsed.statements[i].root, *reparsed.arena, reparsed.statements[i].root));
            auto single = parse_script(print_node(*parsed.arena, parsed.statements[i].root));
            REQUIRE(single.statements.size() == 1);
            CHECK(subtree_equal(*parsed.arena, parsed.statements[i].root, *single.arena, single.statements[0].root));
        }
    }
}

TEST_CASE("whitespace and keyword case do not change the tree") {
    auto a = parse_script("SELECT date_trunc('day', ts) AS t FROM x WHERE a > 1;");
    auto b = parse_script("select   date_trunc(  'day'  ,ts)   as t\nfrom x where a>1 ;");
    CHECK(subtree_equal(*a.arena, a.statements[0].root, *b.arena, b.statements[0].root));
    auto c = parse_script("SELECT date_trunc('hour', ts) AS t FROM x WHERE a > 1;");
    CHECK_FALSE(subtree_equal(*a.arena, a.statements[0].root, *c.arena, c.statements[0].root));
}
