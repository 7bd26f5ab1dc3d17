#include <functional>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;
using Edges = std::vector<std::pair<uint32_t, uint32_t>>;

namespace {

// Recomputes the dependency edges by scanning the AST for names, without the analyzer's
// extraction helpers.
Edges brute_force_edges(const ProgramDescription& desc) {
    const AstArena& a = desc.ast();
    std::function<void(uint32_t, std::set<std::string>&, std::set<std::string>&)> scan =
        [&](uint32_t n, std::set<std::string>& rels, std::set<std::string>& inputs) {
            const AstNode& node = a.node(n);
            if (node.node_type == NodeType::REL_NAME) {
                if (auto name = a.find_child(n, AttrKey::NAME)) rels.insert(a.name_value(*name));
            }
            if (node.node_type == NodeType::COLUMN_REF) {
                auto q = a.find_child(n, AttrKey::QUALIFIER);
                auto name = a.find_child(n, AttrKey::NAME);
                if (q && name && a.name_value(*q) == "main") inputs.insert(a.name_value(*name));
            }
            if (node.node_type == NodeType::EXPR_UNARY) {
                auto op = static_cast<UnaryOp>(a.int_value(*a.find_child(n, AttrKey::OPERATOR)));
                uint32_t arg = *a.find_child(n, AttrKey::EXPR);
                bool null_test = op == UnaryOp::IS_NULL || op == UnaryOp::IS_NOT_NULL;
                if (null_test && a.node(arg).node_type == NodeType::COLUMN_REF && !a.find_child(arg, AttrKey::QUALIFIER)) {
                    inputs.insert("?" + a.name_value(*a.find_child(arg, AttrKey::NAME)));
                }
            }
            for (uint32_t i = 0; i < node.children_count(); ++i) scan(node.children_begin() + i, rels, inputs);
        };
    std::map<std::string, uint32_t> producers;
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        if (desc.statements[i].produces) producers.emplace(*desc.statements[i].produces, i);
    }
    std::set<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        const auto& s = desc.statements[i];
        std::set<std::string> rels, inputs;
        switch (s.kind) {
            case StatementKind::LOAD: rels.insert(a.name_value(*a.find_child(s.root, AttrKey::SOURCE))); break;
            case StatementKind::VISUALIZE: {
                uint32_t target = *a.find_child(s.root, AttrKey::TARGET);
                if (a.node(target).node_type == NodeType::SELECT) {
                    edges.insert({i - 1, i});  // the desugared view directly precedes
                } else {
                    rels.insert(a.name_value(target));
                }
                break;
            }
            case StatementKind::SELECT:
            case StatementKind::CREATE_TABLE_AS:
            case StatementKind::CREATE_VIEW_AS: scan(s.root, rels, inputs); break;
            default: break;
        }
        for (const auto& r : rels) {
            auto it = producers.find(r);
            if (it != producers.end() && it->second != i) edges.insert({it->second, i});
        }
        for (const auto& in : inputs) {
            // "?name": a null-tested bare name, an input reference only if an INPUT declares it
            bool maybe = in[0] == '?';
            auto it = producers.find(maybe ? in.substr(1) : in);
            if (it == producers.end()) continue;
            if (maybe && desc.statements[it->second].kind != StatementKind::INPUT) continue;
            edges.insert({it->second, i});
        }
        if (s.kind == StatementKind::SET) {
            for (uint32_t j = 0; j < desc.statements.size(); ++j) {
                if (desc.statements[j].kind == StatementKind::VISUALIZE) edges.insert({i, j});
            }
        }
    }
    return {edges.begin(), edges.end()};
}

ProgramDescription analyze_text(const std::string& text) { return analyze(parse_script(text)); }

}  // namespace

TEST_CASE("dependency edges of the two-version dashboard") {
    auto desc = analyze_text(dashql::test::script("dashboard_prev"));
    CHECK(desc.diagnostics.empty());
    CHECK(desc.edges == Edges{{0, 3}, {1, 2}, {2, 3}, {3, 4}, {3, 5}});
    CHECK(desc.statements[3].input_refs == std::set<std::string>{"duration"});
    CHECK(desc.statements[1].produces == "data");
    CHECK(desc.statements[2].consumes == std::set<std::string>{"data"});
}

TEST_CASE("a single SELECT has no edges") {
    auto desc = analyze_text("SELECT 1;");
    CHECK(desc.edges.empty());
    CHECK(desc.diagnostics.empty());
}

TEST_CASE("one FETCH feeds two JSON loads") {
    auto desc = analyze_text(dashql::test::script("json_hooks"));
    CHECK(desc.edges == Edges{{0, 1}, {0, 2}});
}

TEST_CASE("edges equal a brute-force recomputation on the corpus") {
    for (const auto& [name, text] : dashql::test::corpus()) {
        CAPTURE(name);
        auto desc = analyze_text(text);
        CHECK(desc.edges == brute_force_edges(desc));
        CHECK(desc.topo_order().size() == desc.statements.size());
        auto order = desc.topo_order();
        std::vector<size_t> pos(order.size());
        for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (auto [p, c] : desc.edges) CHECK(pos[p] < pos[c]);
    }
}

TEST_CASE("an inline SELECT produces the same edges as an explicit view") {
    std::string base = "FETCH f FROM 'test://activity.csv'; LOAD t FROM f USING CSV; INPUT m TYPE BIGINT; ";
    auto inl = analyze_text(base + "VISUALIZE (SELECT * FROM t WHERE visits > main.m) USING TABLE;");
    auto exp = analyze_text(base + "CREATE VIEW v AS SELECT * FROM t WHERE visits > main.m; VISUALIZE v USING TABLE;");
    CHECK(inl.edges == exp.edges);
    REQUIRE(inl.statements.size() == 5);
    CHECK(inl.statements[3].synthetic);
    CHECK(inl.statements[3].produces->rfind("__inline_", 0) == 0);
    CHECK(inl.statements[3].script_index == inl.statements[4].script_index);
}

TEST_CASE("duplicate, unresolved and cyclic names block statements") {
    auto dup = analyze_text("CREATE TABLE a AS SELECT 1; CREATE TABLE a AS SELECT 2;");
    CHECK_FALSE(dup.statements[0].blocked);
    CHECK(dup.statements[1].blocked);

    auto unresolved = analyze_text("SELECT 1; VISUALIZE nothing USING TABLE; SELECT * FROM missing;");
    CHECK_FALSE(unresolved.statements[0].blocked);
    CHECK(unresolved.statements[1].blocked);
    CHECK(unresolved.statements[2].blocked);
    CHECK(unresolved.diagnostics.size() == 2);

    auto cyc = analyze_text("CREATE VIEW a AS SELECT * FROM b; CREATE VIEW b AS SELECT * FROM a; SELECT 1;");
    CHECK(cyc.statements[0].blocked);
    CHECK(cyc.statements[1].blocked);
    CHECK_FALSE(cyc.statements[2].blocked);
    CHECK(cyc.topo_order().size() == 3);

    auto input = analyze_text("SELECT main.nope;");
    CHECK(input.statements[0].blocked);

    auto load_table = analyze_text("CREATE TABLE t AS SELECT 1; LOAD x FROM t USING CSV;");
    CHECK(load_table.statements[1].blocked);
}

TEST_CASE("a null-tested bare input name is an input reference") {
    auto desc = analyze_text("INPUT w TYPE VARCHAR; CREATE TABLE t AS SELECT 1 AS w; CREATE TABLE u AS SELECT * FROM t WHERE w IS NULL;");
    CHECK(desc.statements[2].input_refs == std::set<std::string>{"w"});
    CHECK(desc.edges == Edges{{0, 2}, {1, 2}});
    auto plain = analyze_text("CREATE TABLE t AS SELECT 1 AS w; CREATE TABLE u AS SELECT * FROM t WHERE w IS NULL;");
    CHECK(plain.statements[1].input_refs.empty());
    CHECK(plain.diagnostics.empty());
}

TEST_CASE("forward references resolve") {
    auto desc = analyze_text("VISUALIZE t USING TABLE; CREATE TABLE t AS SELECT 1 AS a;");
    CHECK(desc.diagnostics.empty());
    CHECK(desc.edges == Edges{{1, 0}});
    CHECK(desc.topo_order() == std::vector<uint32_t>{1, 0});
}

TEST_CASE("statement attributes") {
    auto desc = analyze_text(dashql::test::script("inputs"));
    REQUIRE(desc.diagnostics.empty());
    CHECK(desc.statements[1].input_type == InputType::FILE);
    CHECK(desc.statements[2].settings["default_value"] == 10);
    CHECK(desc.statements[4].scheme == FetchScheme::HTTPS);
    CHECK(desc.statements[4].uri == "https://a/b.csv");
    CHECK(desc.statements[4].settings["header"]["accept"] == "text/csv");
    CHECK(desc.statements[5].format == LoadFormat::CSV);
    CHECK(desc.statements[7].viz_kind == VizKind::TABLE);

    auto viz = analyze_text(
        "VISUALIZE t USING STACKED BAR CHART; VISUALIZE t USING MULTI LINE; VISUALIZE t USING STACKED AREA CHART;"
        "VISUALIZE t USING SCATTER; VISUALIZE t USING (mark = 'bar', encoding = (color = (field = 'c'), y = (stack = 'zero')));");
    CHECK(viz.statements[0].viz_kind == VizKind::STACKED_BAR);
    CHECK(viz.statements[1].viz_kind == VizKind::MULTI_LINE);
    CHECK(viz.statements[2].viz_kind == VizKind::STACKED_AREA);
    CHECK(viz.statements[3].viz_kind == VizKind::SCATTER);
    CHECK(viz.statements[4].viz_verbose);
    CHECK(viz.statements[4].viz_kind == VizKind::STACKED_BAR);
}

TEST_CASE("DOT output lists every statement and edge") {
    auto desc = analyze_text(dashql::test::script("dashboard_prev"));
    std::string dot = to_dot(desc);
    CHECK(dot.rfind("digraph", 0) == 0);
    size_t arrows = 0;
    for (size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 2)) ++arrows;
    CHECK(arrows == desc.edges.size());
    for (size_t i = 0; i < desc.statements.size(); ++i) CHECK(dot.find("s" + std::to_string(i) + " [") != std::string::npos);
}
