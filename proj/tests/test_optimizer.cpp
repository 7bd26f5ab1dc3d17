#include <fmt/core.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;

namespace {

ExecContext ctx() {
    ExecContext c;
    c.now = dashql::test::test_now();
    return c;
}

using Point = std::tuple<int64_t, double, double>;

std::set<Point> point_set(const std::vector<BinnedPoint>& pts) {
    std::set<Point> out;
    for (const auto& p : pts) out.emplace(p.bin, p.x, p.y);
    return out;
}

// Brute-force bin independent of am4_bin: the formula evaluated directly, then clamped.
int64_t oracle_bin(double x, const Am4Params& p) {
    if (p.ub == p.lb) return 0;
    double k = std::round(static_cast<double>(p.width) * (x - p.lb) / (p.ub - p.lb));
    return static_cast<int64_t>(std::clamp(k, 0.0, static_cast<double>(p.width)));
}

struct Extrema {
    double min_x = INFINITY, max_x = -INFINITY, min_y = INFINITY, max_y = -INFINITY;
};

std::map<int64_t, Extrema> oracle_extrema(const std::vector<double>& xs, const std::vector<double>& ys, const Am4Params& p) {
    std::map<int64_t, Extrema> out;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (std::isnan(xs[i]) || std::isnan(ys[i])) continue;
        auto& e = out[oracle_bin(xs[i], p)];
        e.min_x = std::min(e.min_x, xs[i]);
        e.max_x = std::max(e.max_x, xs[i]);
        e.min_y = std::min(e.min_y, ys[i]);
        e.max_y = std::max(e.max_y, ys[i]);
    }
    return out;
}

std::map<int64_t, Extrema> output_extrema(const std::vector<BinnedPoint>& pts) {
    std::map<int64_t, Extrema> out;
    for (const auto& p : pts) {
        auto& e = out[p.bin];
        e.min_x = std::min(e.min_x, p.x);
        e.max_x = std::max(e.max_x, p.x);
        e.min_y = std::min(e.min_y, p.y);
        e.max_y = std::max(e.max_y, p.y);
    }
    return out;
}

void check_am4(const std::vector<double>& xs, const std::vector<double>& ys, const Am4Params& p) {
    auto am4 = am4_native(xs, ys, p);
    auto m4 = m4_oracle(xs, ys, p);
    auto want = oracle_extrema(xs, ys, p);

    // per-bin extrema of the output equal the brute-force extrema
    auto got = output_extrema(am4);
    REQUIRE(got.size() == want.size());
    for (const auto& [bin, e] : want) {
        REQUIRE(got.count(bin));
        CHECK(got[bin].min_x == e.min_x);
        CHECK(got[bin].max_x == e.max_x);
        CHECK(got[bin].min_y == e.min_y);
        CHECK(got[bin].max_y == e.max_y);
    }
    CHECK(output_extrema(m4).size() == want.size());

    // every emitted point exists in the input, inside its bin
    std::set<std::pair<double, double>> input;
    for (size_t i = 0; i < xs.size(); ++i) input.emplace(xs[i], ys[i]);
    for (const auto& q : am4) {
        CHECK(input.count({q.x, q.y}));
        CHECK(q.bin == oracle_bin(q.x, p));
    }

    // sorted, de-duplicated, bounded, contained in M4
    CHECK(std::is_sorted(am4.begin(), am4.end()));
    CHECK(std::adjacent_find(am4.begin(), am4.end()) == am4.end());
    CHECK(am4.size() <= 4 * static_cast<size_t>(p.width + 1));
    auto m4_set = point_set(m4);
    for (const auto& q : point_set(am4)) CHECK(m4_set.count(q));
    for (const auto& [bin, e] : want) {
        // M4 keeps every row touching an extremum, so each extreme value shows up
        auto hits = [&](auto pred) { return std::any_of(m4.begin(), m4.end(), [&](const BinnedPoint& b) { return b.bin == bin && pred(b); }); };
        CHECK(hits([&](const BinnedPoint& b) { return b.x == e.min_x; }));
        CHECK(hits([&](const BinnedPoint& b) { return b.x == e.max_x; }));
        CHECK(hits([&](const BinnedPoint& b) { return b.y == e.min_y; }));
        CHECK(hits([&](const BinnedPoint& b) { return b.y == e.max_y; }));
    }

    CHECK(am4_parallel(xs, ys, p) == am4);
}

Relation series_relation(const std::vector<int64_t>& xs, const std::vector<double>& ys, const std::vector<std::string>& colors = {}) {
    std::vector<ColumnDef> schema{{"t", DataType::BigInt}, {"v", DataType::Double}};
    if (!colors.empty()) schema.push_back({"sensor", DataType::Varchar});
    auto rel = Relation::with_schema(schema);
    for (size_t i = 0; i < xs.size(); ++i) {
        std::vector<Value> row{xs[i], ys[i]};
        if (!colors.empty()) row.emplace_back(colors[i]);
        rel.append_row(row);
    }
    return rel;
}

const LoadPlan& load_named(const MaterializationPlan& plan, const std::string& relation) {
    for (const auto& [_, lp] : plan.loads) {
        if (lp.relation == relation) return lp;
    }
    FAIL("no load for " << relation);
    throw std::logic_error("unreachable");
}

MaterializationPlan plan_of(const std::string& text, bool force = false) {
    auto parsed = parse_script(text);
    REQUIRE(parsed.errors.empty());
    return decide_materialization(analyze(parsed), force);
}

}  // namespace

TEST_CASE("bins follow the rounding formula with clamped edges") {
    Am4Params p{10, 0, 100};
    CHECK(am4_bin(0, p) == 0);
    CHECK(am4_bin(4.9, p) == 0);
    CHECK(am4_bin(5, p) == 1);  // round half away from zero
    CHECK(am4_bin(100, p) == 10);
    CHECK(am4_bin(-50, p) == 0);
    CHECK(am4_bin(1000, p) == 10);
    CHECK(am4_bin(NAN, p) == 0);
    CHECK(am4_bin(123, Am4Params{10, 7, 7}) == 0);
}

TEST_CASE("three points in one bin reduce to their distinct extrema") {
    std::vector<double> xs{0, 1, 2}, ys{5, 9, 1};
    Am4Params p{1, 0, 2};
    // bins: round(0) = 0, round(0.5) = 1, round(1) = 1
    auto out = am4_native(xs, ys, p);
    std::vector<BinnedPoint> want{{0, 0, 5}, {1, 1, 9}, {1, 2, 1}};
    CHECK(out == want);

    // a width that keeps all three in bin 0 emits each point once
    std::vector<double> xs0{0, 1, 2};
    auto one = am4_native(xs0, ys, Am4Params{1, 0, 100});
    std::vector<BinnedPoint> want0{{0, 0, 5}, {0, 1, 9}, {0, 2, 1}};
    CHECK(one == want0);
    CHECK(m4_oracle(xs0, ys, Am4Params{1, 0, 100}) == want0);
}

TEST_CASE("a constant series keeps at most two points per bin") {
    std::vector<double> xs, ys;
    for (int i = 0; i < 10000; ++i) {
        xs.push_back(i);
        ys.push_back(42);
    }
    Am4Params p{100, 0, 9999};
    auto am4 = am4_native(xs, ys, p);
    std::map<int64_t, int> per_bin;
    for (const auto& q : am4) per_bin[q.bin]++;
    CHECK(per_bin.size() == 101);
    for (const auto& [_, n] : per_bin) CHECK(n <= 2);
    // the join-back matches every row on y = 42; with distinct x values the distinct on
    // (bin, x, y) cannot shrink that, so M4 returns the whole series
    auto m4 = m4_oracle(xs, ys, p);
    CHECK(m4.size() == xs.size());
    for (const auto& q : point_set(am4)) CHECK(point_set(m4).count(q));
    check_am4(xs, ys, p);

    // repeated rows are what the distinct removes
    std::vector<double> rx, ry;
    for (int i = 0; i < 10000; ++i) {
        rx.push_back(i % 10);
        ry.push_back(42);
    }
    auto rm4 = m4_oracle(rx, ry, Am4Params{100, 0, 9});
    CHECK(rm4.size() == 10);
    CHECK(am4_native(rx, ry, Am4Params{100, 0, 9}).size() == 10);
}

TEST_CASE("empty and NaN input") {
    std::vector<double> none;
    CHECK(am4_native(none, none, Am4Params{}).empty());
    CHECK(am4_parallel(none, none, Am4Params{}).empty());
    CHECK(m4_oracle(none, none, Am4Params{}).empty());

    std::vector<double> xs{0, NAN, 2, 3}, ys{1, 2, NAN, 4};
    auto out = am4_native(xs, ys, Am4Params{1, 0, 3});
    for (const auto& q : out) CHECK(!std::isnan(q.x + q.y));
    CHECK(point_set(out) == std::set<Point>{{0, 0, 1}, {1, 3, 4}});
}

TEST_CASE("randomized series against brute-force extrema and M4") {
    for (uint32_t seed = 1; seed <= 120; ++seed) {
        std::mt19937_64 rng(seed);
        size_t n = 500 + rng() % 3000;
        int64_t width = 1 + static_cast<int64_t>(rng() % 300);
        std::vector<double> xs(n), ys(n);
        // small value ranges force ties on both axes
        int y_range = 1 + static_cast<int>(rng() % 50);
        for (size_t i = 0; i < n; ++i) {
            xs[i] = static_cast<double>(rng() % 2000) / 4.0;
            ys[i] = static_cast<double>(static_cast<int>(rng() % static_cast<uint64_t>(2 * y_range)) - y_range);
        }
        double lb = *std::min_element(xs.begin(), xs.end());
        double ub = *std::max_element(xs.begin(), xs.end());
        if (seed % 7 == 0) lb += (ub - lb) / 3;  // rows left of lb clamp into bin 0
        INFO("seed " << seed);
        check_am4(xs, ys, Am4Params{width, lb, ub});
    }
}

TEST_CASE("500k rows at width 2000 reduce to at most 8004 points") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0, 1);
    std::vector<double> xs(500000), ys(500000);
    double walk = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        xs[i] = static_cast<double>(i);
        walk += noise(rng);
        ys[i] = walk;
    }
    Am4Params p{2000, 0, 499999};
    auto out = am4_native(xs, ys, p);
    CHECK(out.size() <= 8004);
    CHECK(out.size() > 2001);
    CHECK(am4_parallel(xs, ys, p) == out);
}

TEST_CASE("series_from_columns skips NULL pairs and converts temporal values") {
    Column t(DataType::Timestamp), v(DataType::BigInt);
    t.append(Value(*parse_timestamp("2022-10-01 00:00:00")));
    v.append(Value(int64_t{3}));
    t.append_null();
    v.append(Value(int64_t{4}));
    t.append(Value(*parse_timestamp("2022-10-01 00:00:01")));
    v.append_null();
    std::vector<double> xs, ys;
    series_from_columns(t, v, xs, ys);
    REQUIRE(xs.size() == 1);
    CHECK(xs[0] == static_cast<double>(parse_timestamp("2022-10-01 00:00:00")->micros));
    CHECK(ys[0] == 3);
}

TEST_CASE("inject_am4 declines on small inputs and non-line charts") {
    std::vector<int64_t> xs;
    std::vector<double> ys;
    for (int i = 0; i < 10; ++i) {
        xs.push_back(i);
        ys.push_back(i * 0.5);
    }
    auto data = series_relation(xs, ys);
    auto line = lower_to_spec(VizKind::LINE, "t", nlohmann::ordered_json::object(), data, ctx());
    CHECK_FALSE(inject_am4(line, data, data.row_count, 2000, ctx()));
    // the gate is strict: exactly 4 * (width + 1) rows still decline
    CHECK_FALSE(inject_am4(line, data, 4 * 3, 2, ctx()));
    CHECK(inject_am4(line, data, 4 * 3 + 1, 2, ctx()));

    auto bar = lower_to_spec(VizKind::BAR, "t", nlohmann::ordered_json::object(), data, ctx());
    CHECK_FALSE(inject_am4(bar, data, 1'000'000, 2, ctx()));
    auto table = lower_to_spec(VizKind::TABLE, "t", nlohmann::ordered_json::object(), data, ctx());
    CHECK_FALSE(inject_am4(table, data, 1'000'000, 2, ctx()));
}

TEST_CASE("the rewritten chart query matches the native kernel") {
    std::mt19937_64 rng(11);
    std::vector<int64_t> xs;
    std::vector<double> ys;
    for (int i = 0; i < 20000; ++i) {
        xs.push_back(i / 3);  // repeated x values exercise the arg tie rule
        ys.push_back(static_cast<double>(rng() % 1000) / 10.0);
    }
    auto data = series_relation(xs, ys);
    auto chart = lower_to_spec(VizKind::LINE, "t", nlohmann::ordered_json::object(), data, ctx());
    auto rw = inject_am4(chart, data, data.row_count, 500, ctx());
    REQUIRE(rw);
    CHECK(rw->params.lb == 0);
    CHECK(rw->params.ub == 6666);
    CHECK(rw->x_field == "t");
    CHECK(rw->sql.find("arg_min") != std::string::npos);

    auto reduced = run_am4_rewrite(*rw, data, ctx());
    REQUIRE(reduced.schema == data.schema);
    CHECK(reduced.row_count <= 4 * 501);

    std::vector<double> dx, dy;
    series_from_columns(data.columns[0], data.columns[1], dx, dy);
    auto native = am4_native(dx, dy, rw->params);
    REQUIRE(reduced.row_count == native.size());
    for (size_t i = 0; i < native.size(); ++i) {
        CHECK(reduced.columns[0].as_double(i) == native[i].x);
        CHECK(reduced.columns[1].as_double(i) == native[i].y);
    }
}

TEST_CASE("multi-line charts reduce each series separately") {
    std::mt19937_64 rng(5);
    std::vector<int64_t> xs;
    std::vector<double> ys;
    std::vector<std::string> colors;
    const std::vector<std::string> sensors{"a", "b", "c"};
    for (int i = 0; i < 30000; ++i) {
        xs.push_back(i / 3);
        ys.push_back(static_cast<double>(rng() % 10000));
        colors.push_back(sensors[static_cast<size_t>(i) % 3]);
    }
    auto data = series_relation(xs, ys, colors);
    auto chart = lower_to_spec(VizKind::MULTI_LINE, "c", nlohmann::ordered_json::object(), data, ctx());
    const int64_t width = 200;
    auto rw = inject_am4(chart, data, data.row_count, width, ctx());
    REQUIRE(rw);
    REQUIRE(rw->color_field);
    CHECK(*rw->color_field == "sensor");
    auto reduced = run_am4_rewrite(*rw, data, ctx());
    CHECK(reduced.row_count <= 3 * 4 * static_cast<size_t>(width + 1));
    CHECK(reduced.row_count > 3 * static_cast<size_t>(width + 1));

    for (const auto& s : sensors) {
        std::vector<double> sx, sy;
        for (size_t i = 0; i < xs.size(); ++i) {
            if (colors[i] != s) continue;
            sx.push_back(static_cast<double>(xs[i]));
            sy.push_back(ys[i]);
        }
        auto native = am4_native(sx, sy, rw->params);
        std::vector<std::pair<double, double>> got;
        for (size_t r = 0; r < reduced.row_count; ++r) {
            if (std::get<std::string>(reduced.at(r, 2)) == s) got.emplace_back(reduced.columns[0].as_double(r), reduced.columns[1].as_double(r));
        }
        REQUIRE(got.size() == native.size());
        for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == std::make_pair(native[i].x, native[i].y));
    }
}

TEST_CASE("limit and offset push down only through bare scans") {
    auto rel = Relation::with_schema({{"id", DataType::BigInt}});
    for (int i = 0; i < 100; ++i) rel.append_row({Value(int64_t{i})});
    auto ledger = std::make_shared<ReadLedger>();
    auto reader = std::make_shared<RgfReader>(make_memory_file("mem://ids.rgf", write_rgf(rel, 10), ledger));

    Catalog cat;
    cat.create_lazy("ids", std::make_shared<RgfLazySource>(reader));
    cat.create_table("copy", std::make_shared<const Relation>(rel));
    auto view = [&](const std::string& name, const std::string& select) {
        auto parsed = parse_script(select);
        REQUIRE(parsed.errors.empty());
        cat.create_view(name, ViewDef{parsed.arena, parsed.statements.at(0).root});
    };
    view("star", "SELECT * FROM ids");
    view("star_of_star", "SELECT * FROM star");
    view("grouped", "SELECT id, count(*) FROM ids GROUP BY id");
    view("filtered", "SELECT * FROM ids WHERE id > 3");
    view("renamed", "SELECT id AS x FROM ids");
    view("limited", "SELECT * FROM ids LIMIT 5");

    auto d = pushdown_limit_offset(cat, "ids", 20, 10);
    REQUIRE(d);
    CHECK(d->relation == "ids");
    CHECK(d->offset == 20);
    CHECK(d->limit == 10);
    auto through = pushdown_limit_offset(cat, "star_of_star", 5, 50);
    REQUIRE(through);
    CHECK(through->relation == "ids");

    for (const char* name : {"copy", "grouped", "filtered", "renamed", "limited", "missing"}) {
        INFO(name);
        CHECK_FALSE(pushdown_limit_offset(cat, name, 0, 20));
    }
}

TEST_CASE("a columnar load with one consumer stays lazy with the consumer projection") {
    auto plan = plan_of(dashql::test::script("dashboard_prev"));
    REQUIRE(plan.loads.size() == 1);
    const auto& lp = load_named(plan, "activity");
    CHECK(lp.decision == Materialization::LAZY);
    REQUIRE(lp.projection);
    CHECK(*lp.projection == std::set<std::string>{"ts", "hits", "site"});
    REQUIRE(lp.consumers.size() == 1);
    REQUIRE(lp.predicates.size() == 1);
    CHECK(lp.predicates[0].rfind("ts > ", 0) == 0);
    CHECK(plan.find(lp.statement) == &lp);
    CHECK(plan.find(0) == nullptr);

    auto forced = plan_of(dashql::test::script("dashboard_prev"), true);
    CHECK(load_named(forced, "activity").decision == Materialization::MATERIALIZE);
    CHECK(load_named(forced, "activity").reasons.front() == "forced");
}

TEST_CASE("JSON loads always materialize") {
    auto plan = plan_of(dashql::test::script("json_hooks"));
    REQUIRE(plan.loads.size() == 2);
    CHECK(load_named(plan, "cities").decision == Materialization::MATERIALIZE);
    CHECK(load_named(plan, "counties").decision == Materialization::MATERIALIZE);
}

TEST_CASE("shared loads materialize once") {
    auto csv = plan_of(
        "FETCH f FROM 'https://a/sales.csv';\n"
        "LOAD sales FROM f USING CSV;\n"
        "CREATE VIEW a AS SELECT region FROM sales;\n"
        "CREATE VIEW b AS SELECT amount FROM sales;\n");
    CHECK(load_named(csv, "sales").decision == Materialization::MATERIALIZE);
    CHECK(load_named(csv, "sales").consumers.size() == 2);

    // one CSV consumer is still a full parse
    auto single = plan_of("FETCH f FROM 'https://a/sales.csv';\nLOAD sales FROM f USING CSV;\nCREATE VIEW a AS SELECT region FROM sales;\n");
    CHECK(load_named(single, "sales").decision == Materialization::MATERIALIZE);

    auto rgf = plan_of(
        "FETCH f FROM 'https://a/b.parquet';\n"
        "LOAD r FROM f USING PARQUET;\n"
        "CREATE TABLE a AS SELECT t, v FROM r;\n"
        "CREATE TABLE b AS SELECT v AS y, sensor FROM r WHERE t > 3;\n");
    const auto& lp = load_named(rgf, "r");
    CHECK(lp.decision == Materialization::MATERIALIZE);
    REQUIRE(lp.projection);
    CHECK(*lp.projection == std::set<std::string>{"t", "v", "sensor"});
    CHECK(lp.predicates.empty());  // predicates only push into a single consumer

    // a `*` consumer needs every column
    auto star = plan_of("FETCH f FROM 'https://a/b.parquet';\nLOAD r FROM f USING PARQUET;\nVISUALIZE r USING TABLE;\n");
    CHECK(load_named(star, "r").decision == Materialization::LAZY);
    CHECK_FALSE(load_named(star, "r").projection);
}

TEST_CASE("the load format falls back to the fetched file extension") {
    auto parsed = parse_script("FETCH f FROM 'https://a/b.parquet';\nLOAD r FROM f;\nCREATE TABLE a AS SELECT v FROM r;\n");
    REQUIRE(parsed.errors.empty());
    auto desc = analyze(parsed);
    CHECK(effective_load_format(desc, 1) == LoadFormat::PARQUET);
    auto plan = decide_materialization(desc);
    CHECK(load_named(plan, "r").decision == Materialization::LAZY);
}
