#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;
using nlohmann::ordered_json;

namespace {

ExecContext ctx() {
    ExecContext c;
    c.now = dashql::test::test_now();
    return c;
}

const Relation& site_activity_data() {
    static const Relation rel = load_csv(dashql::test::read_text(dashql::test::fixture_dir() + "/site_activity.csv"));
    return rel;
}

std::string mark_type(const ordered_json& spec) {
    const auto& m = spec.at("mark");
    return m.is_string() ? m.get<std::string>() : m.at("type").get<std::string>();
}

// "15.10 00:00" -> 2022-10-15T00:00:00Z; the listing omits the year.
std::string listing_date_to_iso(const std::string& s) {
    return "2022-" + s.substr(3, 2) + "-" + s.substr(0, 2) + "T" + s.substr(6, 5) + ":00Z";
}

ordered_json settings_of(const std::string& script, size_t stmt) {
    auto desc = analyze(parse_script(script));
    REQUIRE(desc.diagnostics.empty());
    return desc.statements.at(stmt).settings;
}

}  // namespace

TEST_CASE("channels per chart kind") {
    using V = std::vector<std::string>;
    CHECK(required_channels(VizKind::TABLE).empty());
    CHECK(required_channels(VizKind::MULTI_LINE) == V{"x", "y", "color"});
    CHECK(required_channels(VizKind::STACKED_BAR) == V{"x", "y", "color"});
    CHECK(required_channels(VizKind::STACKED_AREA) == V{"x", "y", "color"});
    for (auto k : {VizKind::LINE, VizKind::BAR, VizKind::AREA, VizKind::SCATTER}) CHECK(required_channels(k) == V{"x", "y"});
}

TEST_CASE("field assignment") {
    using M = std::vector<std::pair<std::string, std::string>>;
    CHECK(assign_fields(site_activity_data().schema, VizKind::MULTI_LINE) == M{{"x", "time"}, {"y", "hits"}, {"color", "site"}});
    CHECK(assign_fields({{"y", DataType::BigInt}, {"x", DataType::Timestamp}}, VizKind::LINE) == M{{"x", "x"}, {"y", "y"}});
    CHECK(assign_fields({{"v", DataType::BigInt}, {"x", DataType::Timestamp}, {"s", DataType::Varchar}}, VizKind::MULTI_LINE) ==
          M{{"x", "x"}, {"y", "v"}, {"color", "s"}});
    CHECK_THROWS_AS(assign_fields({{"only", DataType::BigInt}}, VizKind::LINE), VizError);
    CHECK(assign_fields({{"only", DataType::BigInt}}, VizKind::TABLE).empty());
}

TEST_CASE("encoding types") {
    CHECK(infer_encoding_type(DataType::Timestamp) == "temporal");
    CHECK(infer_encoding_type(DataType::BigInt) == "quantitative");
    CHECK(infer_encoding_type(DataType::Double) == "quantitative");
    CHECK(infer_encoding_type(DataType::Interval) == "quantitative");
    CHECK(infer_encoding_type(DataType::Varchar) == "nominal");
    CHECK(infer_encoding_type(DataType::Bool) == "nominal");
}

TEST_CASE("the short multi-line chart lowers to the verbose listing") {
    auto chart = lower_to_spec(VizKind::MULTI_LINE, "activity", ordered_json::object(), site_activity_data(), ctx());
    auto verbose = settings_of(dashql::test::script("multiline_verbose"), 2);
    const auto& s = chart.spec;
    CHECK(mark_type(s) == verbose["mark"].get<std::string>());
    for (const char* ch : {"x", "y", "color"}) {
        CAPTURE(ch);
        CHECK(s["encoding"][ch]["field"] == verbose["encoding"][ch]["field"]);
        CHECK(s["encoding"][ch]["type"] == verbose["encoding"][ch]["type"]);
    }
    CHECK(s["encoding"]["y"]["scale"]["domain"] == ordered_json::array({1205, 4178}));
    CHECK(s["encoding"]["y"]["scale"]["domain"] == verbose["encoding"]["y"]["scale"]["domain"]);
    const auto& vx = verbose["encoding"]["x"]["scale"]["domain"];
    CHECK(s["encoding"]["x"]["scale"]["domain"] ==
          ordered_json::array({listing_date_to_iso(vx[0].get<std::string>()), listing_date_to_iso(vx[1].get<std::string>())}));
    auto listed = verbose["encoding"]["color"]["scale"]["domain"].get<std::vector<std::string>>();
    auto ours = s["encoding"]["color"]["scale"]["domain"].get<std::vector<std::string>>();
    CHECK(std::set<std::string>(listed.begin(), listed.end()) == std::set<std::string>(ours.begin(), ours.end()));
    CHECK(std::is_sorted(ours.begin(), ours.end()));
    CHECK(chart.inferred.count("/encoding/y/scale/domain"));
    CHECK_FALSE(chart.user_set("/encoding/y/scale/domain"));
}

TEST_CASE("the verbose listing passes through unchanged") {
    auto verbose = settings_of(dashql::test::script("multiline_verbose"), 2);
    auto chart = lower_to_spec(VizKind::MULTI_LINE, "activity", verbose, site_activity_data(), ctx());
    CHECK(chart.spec["encoding"] == verbose["encoding"]);
    CHECK(chart.user_set("/encoding/x/scale/domain"));
    CHECK_FALSE(chart.inferred.count("/encoding/x/scale/domain"));
}

TEST_CASE("aesthetic settings survive lowering and emission") {
    auto desc = analyze(parse_script(dashql::test::script("explore_step4")));
    const auto& st = desc.statements.back();
    auto data = Relation::with_schema({{"hour", DataType::Timestamp}, {"views", DataType::BigInt}});
    data.append_row({Value{*parse_timestamp("2022-10-01 09:00:00")}, int64_t{8}});
    data.append_row({Value{*parse_timestamp("2022-10-01 10:00:00")}, int64_t{14}});
    auto chart = lower_statement(desc, static_cast<uint32_t>(desc.statements.size() - 1), data, ctx());
    CHECK(chart.spec["title"] == "Website Views");
    CHECK(chart.spec["mark"]["opacity"] == 0.5);
    CHECK(chart.spec["encoding"]["x"]["axis"]["tick_count"] == 5);
    CHECK(chart.spec["encoding"]["y"]["scale"]["domain"] == ordered_json::array({8, 14}));
    auto vl = to_vega_lite(chart);
    CHECK(vl["encoding"]["x"]["axis"]["tickCount"] == 5);
    CHECK_FALSE(vl["encoding"]["x"]["axis"].contains("tick_count"));
    CHECK(st.viz_kind == VizKind::AREA);
    CHECK(snake_to_camel("tick_count") == "tickCount");
    CHECK(snake_to_camel("a_b_c") == "aBC");
    CHECK(snake_to_camel("plain") == "plain");
}

TEST_CASE("marks per kind and the table artifact") {
    const Relation& d = site_activity_data();
    CHECK(mark_type(lower_to_spec(VizKind::LINE, "a", {}, d, ctx()).spec) == "line");
    CHECK(mark_type(lower_to_spec(VizKind::AREA, "a", {}, d, ctx()).spec) == "area");
    CHECK(mark_type(lower_to_spec(VizKind::BAR, "a", {}, d, ctx()).spec) == "bar");
    CHECK(mark_type(lower_to_spec(VizKind::SCATTER, "a", {}, d, ctx()).spec) == "point");
    auto stacked = lower_to_spec(VizKind::STACKED_BAR, "a", {}, d, ctx());
    CHECK(mark_type(stacked.spec) == "bar");
    CHECK(stacked.spec["encoding"]["y"]["stack"] == "zero");
    auto table = lower_to_spec(VizKind::TABLE, "a", {}, d, ctx());
    CHECK(table.is_table());
    CHECK_FALSE(table.spec.contains("encoding"));
    CHECK_FALSE(table.spec.contains("mark"));
}

TEST_CASE("domain edge cases") {
    auto constant = Relation::with_schema({{"x", DataType::BigInt}, {"y", DataType::Double}});
    for (int i = 0; i < 5; ++i) constant.append_row({int64_t{i}, 42.0});
    auto c = lower_to_spec(VizKind::LINE, "t", {}, constant, ctx());
    CHECK(c.spec["encoding"]["y"]["scale"]["domain"] == ordered_json::array({42.0, 42.0}));

    auto empty = Relation::with_schema({{"x", DataType::BigInt}, {"y", DataType::Double}});
    auto e = lower_to_spec(VizKind::LINE, "t", {}, empty, ctx());
    CHECK_FALSE(e.spec["encoding"]["y"].contains("scale"));

    auto user = ordered_json::parse(R"({"mark":"line","encoding":{"x":{"field":"x"},"y":{"field":"y","scale":{"domain":[0,100]}}}})");
    auto u = lower_to_spec(VizKind::LINE, "t", user, constant, ctx());
    CHECK(u.spec["encoding"]["y"]["scale"]["domain"] == ordered_json::array({0, 100}));
    CHECK(u.spec["encoding"]["x"]["scale"]["domain"] == ordered_json::array({0, 4}));
    CHECK(u.spec["encoding"]["x"]["type"] == "quantitative");
    CHECK(u.inferred.count("/encoding/x/type"));
    CHECK(u.user_set("/encoding/y/scale/domain"));
}

TEST_CASE("inferred domains contain every value") {
    std::mt19937 rng(9);
    for (int round = 0; round < 30; ++round) {
        auto rel = Relation::with_schema({{"t", DataType::Timestamp}, {"v", DataType::Double}, {"s", DataType::Varchar}});
        size_t n = 1 + rng() % 300;
        for (size_t i = 0; i < n; ++i) {
            rel.append_row({Value{Timestamp{static_cast<int64_t>(rng() % 1'000'000) * kMicrosPerSecond}},
                            rng() % 9 == 0 ? Value{} : Value{static_cast<double>(static_cast<int>(rng() % 20001) - 10000) / 3.0},
                            std::string(1, static_cast<char>('a' + rng() % 6))});
        }
        auto chart = lower_to_spec(VizKind::MULTI_LINE, "r", {}, rel, ctx());
        const auto& enc = chart.spec["encoding"];
        auto tmin = *parse_timestamp(enc["x"]["scale"]["domain"][0].get<std::string>());
        auto tmax = *parse_timestamp(enc["x"]["scale"]["domain"][1].get<std::string>());
        double vmin = enc["y"]["scale"]["domain"][0].get<double>(), vmax = enc["y"]["scale"]["domain"][1].get<double>();
        auto sites = enc["color"]["scale"]["domain"].get<std::vector<std::string>>();
        for (size_t r = 0; r < rel.row_count; ++r) {
            auto t = std::get<Timestamp>(rel.at(r, 0));
            CHECK(tmin <= t);
            CHECK(t <= tmax);
            if (!is_null(rel.at(r, 1))) {
                double v = std::get<double>(rel.at(r, 1));
                CHECK(vmin <= v);
                CHECK(v <= vmax);
            }
            CHECK(std::count(sites.begin(), sites.end(), std::get<std::string>(rel.at(r, 2))) == 1);
        }
    }
}

TEST_CASE("expanded statements lower to the same spec") {
    const Relation& d = site_activity_data();
    for (auto kind : {VizKind::LINE, VizKind::MULTI_LINE, VizKind::BAR, VizKind::STACKED_BAR, VizKind::AREA, VizKind::STACKED_AREA,
                      VizKind::SCATTER}) {
        CAPTURE(static_cast<int>(kind));
        auto chart = lower_to_spec(kind, "activity", {}, d, ctx());
        std::string text = expand_statement_text("activity", chart);
        CAPTURE(text);
        auto parsed = parse_script(text);
        REQUIRE(parsed.errors.empty());
        auto desc = analyze(std::move(parsed));
        REQUIRE(desc.statements.size() == 1);
        CHECK(desc.statements[0].viz_verbose);
        auto again = lower_statement(desc, 0, d, ctx());
        CHECK(again.kind == chart.kind);
        CHECK(again.spec == chart.spec);
        // expanding the expanded form changes nothing
        CHECK(expand_statement_text("activity", again) == text);
    }
    CHECK(to_dashql_settings(ordered_json::parse(R"({"a":{"b":[1,"x'y"]},"c":true})")) == "(a = (b = [1, 'x''y']), c = true)");
}
