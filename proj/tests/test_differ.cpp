#include <cmath>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;

namespace {

ProgramDescription analyze_text(const std::string& text) { return analyze(parse_script(text)); }

uint32_t depth_of(const AstArena& a, uint32_t idx, uint32_t root) {
    uint32_t d = 0;
    while (idx != root) {
        idx = a.node(idx).parent;
        ++d;
    }
    return d;
}

// Nodes of a subtree are the contiguous index range ending at its root.
uint32_t subtree_begin(const AstArena& a, uint32_t root) {
    uint32_t lo = root;
    for (uint32_t i = 0; i < root; ++i) {
        uint32_t p = i;
        while (a.node(p).parent != p && p != root) p = a.node(p).parent;
        if (p == root) {
            lo = i;
            break;
        }
    }
    return lo;
}

double subtree_weight(const AstArena& a, uint32_t root) {
    double w = 0;
    for (uint32_t i = subtree_begin(a, root); i <= root; ++i) w += 1.0 / (1.0 + depth_of(a, i, root));
    return w;
}

double single_stmt_similarity(const std::string& x, const std::string& y) {
    auto a = parse_script(x);
    auto b = parse_script(y);
    return statement_similarity(*a.arena, a.statements.at(0).root, *b.arena, b.statements.at(0).root);
}

void check_diff_invariants(const ScriptDiff& d, size_t prev_n, size_t next_n) {
    std::set<uint32_t> prevs, nexts;
    for (const auto& e : d.entries) {
        if (e.prev) CHECK(prevs.insert(*e.prev).second);
        if (e.next) CHECK(nexts.insert(*e.next).second);
        if (e.verdict == Verdict::EQUAL) CHECK(e.similarity == 1.0);
        if (e.verdict == Verdict::NEW) CHECK_FALSE(e.prev);
        if (e.verdict == Verdict::DELETED) CHECK_FALSE(e.next);
        if (e.verdict == Verdict::UPDATED) {
            CHECK(e.similarity >= kUpdateThreshold);
            CHECK(e.similarity < 1.0);
        }
        CHECK(e.similarity >= 0.0);
        CHECK(e.similarity <= 1.0);
    }
    CHECK(prevs.size() == prev_n);
    CHECK(nexts.size() == next_n);
}

}  // namespace

TEST_CASE("identical statements score 1") {
    CHECK(single_stmt_similarity("SELECT a FROM t;", "select  a\nfrom t ;") == 1.0);
}

TEST_CASE("a single changed leaf costs exactly its depth weight") {
    std::string prev = dashql::test::script("dashboard_prev");
    std::string next = dashql::test::script("dashboard_next");
    auto a = parse_script(prev);
    auto b = parse_script(next);
    uint32_t ra = a.statements[3].root, rb = b.statements[3].root;
    double s = statement_similarity(*a.arena, ra, *b.arena, rb);
    CHECK(s > 0.9);
    CHECK(s < 1.0);

    // oracle: locate the 'day' literal, weigh it by 1/(1+depth), and divide by the tree weight
    std::optional<uint32_t> leaf;
    for (uint32_t i = subtree_begin(*a.arena, ra); i <= ra; ++i) {
        if (a.arena->node_text(i) == "'day'") leaf = i;
    }
    REQUIRE(leaf);
    double total = subtree_weight(*a.arena, ra);
    CHECK(std::abs(total - subtree_weight(*b.arena, rb)) < 1e-12);
    double expected = (total - 1.0 / (1.0 + depth_of(*a.arena, *leaf, ra))) / total;
    CHECK(s == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("table vs stacked bar visualization is partially similar") {
    double s = single_stmt_similarity("VISUALIZE grouped USING TABLE;", "VISUALIZE grouped USING STACKED BAR CHART;");
    CHECK(s > 0.0);
    CHECK(s < 1.0);
}

TEST_CASE("deeper edits never cost more than shallower ones") {
    std::string base = "SELECT 1, f(g(h(2))) FROM t;";
    double shallow = single_stmt_similarity(base, "SELECT 9, f(g(h(2))) FROM t;");
    double deep = single_stmt_similarity(base, "SELECT 1, f(g(h(9))) FROM t;");
    CHECK(deep >= shallow);
    double rel = single_stmt_similarity(base, "SELECT 1, f(g(h(2))) FROM u;");
    CHECK(rel < 1.0);
}

TEST_CASE("the two dashboard versions diff as in the listing") {
    auto prev = analyze_text(dashql::test::script("dashboard_prev"));
    auto next = analyze_text(dashql::test::script("dashboard_next"));
    auto d = diff_scripts(prev, next);
    check_diff_invariants(d, prev.statements.size(), next.statements.size());
    for (uint32_t i = 0; i < 3; ++i) {
        REQUIRE(d.for_prev(i));
        CHECK(d.for_prev(i)->verdict == Verdict::EQUAL);
        CHECK(d.for_prev(i)->next == i);
    }
    CHECK(d.for_prev(3)->verdict == Verdict::UPDATED);
    CHECK(d.for_prev(3)->next == 3u);
    CHECK(d.for_prev(4)->verdict == Verdict::DELETED);
    CHECK(d.for_prev(5)->verdict == Verdict::EQUAL);
    CHECK(d.for_prev(5)->next == 4u);
    std::string table = format_diff(d, prev, next);
    CHECK(table.find("DELETED") != std::string::npos);
    CHECK(table.find("UPDATED") != std::string::npos);
}

TEST_CASE("a script diffed against itself is all EQUAL, whitespace and comments included") {
    for (const auto& [name, text] : dashql::test::corpus()) {
        CAPTURE(name);
        auto a = analyze_text(text);
        auto b = analyze_text("-- edited\n" + print_script(parse_script(text)) + "\n/* tail */");
        for (const auto* other : {&a, &b}) {
            auto d = diff_scripts(a, *other);
            check_diff_invariants(d, a.statements.size(), other->statements.size());
            for (const auto& e : d.entries) {
                CHECK(e.verdict == Verdict::EQUAL);
                CHECK(e.prev == e.next);
            }
        }
    }
}

TEST_CASE("swapped independent statements map crosswise as EQUAL") {
    auto a = analyze_text("CREATE TABLE x AS SELECT 1 AS v; CREATE TABLE y AS SELECT 2 AS w;");
    auto b = analyze_text("CREATE TABLE y AS SELECT 2 AS w; CREATE TABLE x AS SELECT 1 AS v;");
    auto d = diff_scripts(a, b);
    REQUIRE(d.for_prev(0));
    REQUIRE(d.for_prev(1));
    CHECK(d.for_prev(0)->verdict == Verdict::EQUAL);
    CHECK(d.for_prev(0)->next == 1u);
    CHECK(d.for_prev(1)->verdict == Verdict::EQUAL);
    CHECK(d.for_prev(1)->next == 0u);
}

TEST_CASE("kinds never mix and low similarity splits into NEW and DELETED") {
    auto a = analyze_text("CREATE TABLE x AS SELECT 1 AS v;");
    auto b = analyze_text("CREATE VIEW x AS SELECT 1 AS v;");
    auto d = diff_scripts(a, b);
    CHECK(d.for_prev(0)->verdict == Verdict::DELETED);
    CHECK(d.for_next(0)->verdict == Verdict::NEW);
}

TEST_CASE("verdict structure is symmetric over corpus pairs") {
    auto scripts = dashql::test::corpus();
    for (const auto& [na, ta] : scripts) {
        for (const auto& [nb, tb] : scripts) {
            CAPTURE(na);
            CAPTURE(nb);
            auto a = analyze_text(ta);
            auto b = analyze_text(tb);
            auto ab = diff_scripts(a, b);
            auto ba = diff_scripts(b, a);
            check_diff_invariants(ab, a.statements.size(), b.statements.size());
            std::set<uint32_t> deleted, added;
            for (const auto& e : ab.entries) {
                if (e.verdict == Verdict::DELETED) deleted.insert(*e.prev);
            }
            for (const auto& e : ba.entries) {
                if (e.verdict == Verdict::NEW) added.insert(*e.next);
            }
            CHECK(deleted == added);
        }
    }
}
