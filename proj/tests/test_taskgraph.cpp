#include <atomic>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "support.hpp"

using namespace dashql;
using Clock = std::chrono::steady_clock;

namespace {

// Records executions; optionally fails or sleeps for chosen statement kinds.
struct FakeRuntime : TaskRuntime {
    std::mutex mu;
    std::vector<uint32_t> order;
    std::map<uint32_t, std::pair<Clock::time_point, Clock::time_point>> spans;
    std::set<TaskKind> fail;
    std::map<uint32_t, int> sleep_ms;  // by task id

    void execute(const TaskGraph&, Task& task) override {
        auto t0 = Clock::now();
        if (auto it = sleep_ms.find(task.id); it != sleep_ms.end()) std::this_thread::sleep_for(std::chrono::milliseconds(it->second));
        auto t1 = Clock::now();
        {
            std::lock_guard lock(mu);
            order.push_back(task.id);
            spans[task.id] = {t0, t1};
        }
        if (fail.count(task.kind)) throw std::runtime_error("injected failure");
    }
};

std::shared_ptr<const ProgramDescription> program(const std::string& text) {
    return std::make_shared<const ProgramDescription>(analyze(parse_script(text)));
}

RunOptions two_workers() {
    RunOptions o;
    o.workers = 2;
    return o;
}

TaskGraph completed_graph(const std::string& text) {
    auto g = derive_initial(program(text));
    FakeRuntime rt;
    run(g, rt, two_workers());
    return g;
}

std::vector<TaskKind> kinds_of(const TaskGraph& g, const std::vector<uint32_t>& ids) {
    std::vector<TaskKind> out;
    for (uint32_t id : ids) out.push_back(g.tasks[id].kind);
    return out;
}

TaskGraph next_graph(const TaskGraph& prev, const std::string& text) {
    auto next = program(text);
    return derive_next(prev, diff_scripts(*prev.desc, *next), next);
}

}  // namespace

TEST_CASE("initial derivation mirrors statements and edges") {
    auto desc = program(dashql::test::script("dashboard_prev"));
    auto g = derive_initial(desc);
    REQUIRE(g.tasks.size() == 6);
    CHECK(g.generation == 0);
    CHECK(kinds_of(g, {0, 1, 2, 3, 4, 5}) == std::vector<TaskKind>{TaskKind::INPUT, TaskKind::FETCH, TaskKind::LOAD, TaskKind::CREATE_VIEW,
                                                                   TaskKind::VISUALIZE, TaskKind::VISUALIZE});
    std::set<std::pair<uint32_t, uint32_t>> edges;
    for (const auto& t : g.tasks) {
        CHECK(t.status == TaskStatus::PENDING);
        CHECK(t.origin == t.id);
        for (uint32_t d : t.deps) edges.insert({d, t.id});
    }
    CHECK(edges == std::set<std::pair<uint32_t, uint32_t>>(desc->edges.begin(), desc->edges.end()));
    CHECK(g.artifacts.size() == 6);  // input, buffer, table, view and two charts
    CHECK(derive_initial(program("")).tasks.empty());

    auto step1 = derive_initial(program(dashql::test::script("explore_step1")));
    CHECK(kinds_of(step1, step1.topo_order()) == std::vector<TaskKind>{TaskKind::FETCH, TaskKind::LOAD, TaskKind::VISUALIZE});
    CHECK(step1.tasks[1].deps == std::vector<uint32_t>{0});
    CHECK(step1.tasks[2].deps == std::vector<uint32_t>{1});
}

TEST_CASE("applicability of the two dashboard versions") {
    auto prev = completed_graph(dashql::test::script("dashboard_prev"));
    auto next = program(dashql::test::script("dashboard_next"));
    auto diff = diff_scripts(*prev.desc, *next);
    CHECK(applicability(prev, diff) == std::set<uint32_t>{0, 1, 2});
    CHECK(applicability(prev, diff_scripts(*prev.desc, *prev.desc)).size() == 6);
}

TEST_CASE("a changed middle link invalidates everything after it") {
    auto prev = completed_graph(
        "CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT x FROM a; CREATE TABLE c AS SELECT x FROM b;");
    auto next = program("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT x + 1 AS x FROM a; CREATE TABLE c AS SELECT x FROM b;");
    CHECK(applicability(prev, diff_scripts(*prev.desc, *next)) == std::set<uint32_t>{0});
}

TEST_CASE("tasks that never completed are not migrated") {
    auto g = derive_initial(program(dashql::test::script("explore_step1")));
    FakeRuntime rt;
    rt.fail = {TaskKind::LOAD};
    run(g, rt, two_workers());
    CHECK(applicability(g, diff_scripts(*g.desc, *g.desc)) == std::set<uint32_t>{0});
}

TEST_CASE("a later task that modified an output invalidates it") {
    // Synthetic: task 1 is marked as having written into task 0's table.
    auto prev = completed_graph("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT 2 AS y; CREATE TABLE c AS SELECT 3 AS z;");
    prev.tasks[1].modifies.insert(*prev.tasks[0].artifact);
    auto same = program("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT 2 AS y; CREATE TABLE c AS SELECT 3 AS z;");
    CHECK(applicability(prev, diff_scripts(*prev.desc, *same)) == std::set<uint32_t>{0, 1, 2});
    auto changed = program("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT 5 AS y; CREATE TABLE c AS SELECT 3 AS z;");
    CHECK(applicability(prev, diff_scripts(*prev.desc, *changed)) == std::set<uint32_t>{2});
}

TEST_CASE("a new producer feeding an equal statement blocks migration") {
    auto prev = completed_graph("CREATE TABLE a AS SELECT 1 AS x; VISUALIZE a USING LINE;");
    auto with_set = program("SET am4 = false; CREATE TABLE a AS SELECT 1 AS x; VISUALIZE a USING LINE;");
    auto diff = diff_scripts(*prev.desc, *with_set);
    CHECK(diff.for_next(2)->verdict == Verdict::EQUAL);
    // the chart now reads the new setting; the table does not
    CHECK(applicability(prev, diff, with_set.get(), {}) == std::set<uint32_t>{0});
    CHECK(applicability(prev, diff, nullptr, {}) == std::set<uint32_t>{0, 1});

    // the same holds when an equal statement starts reading a different producer
    auto moved = completed_graph("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE v AS SELECT x FROM a;");
    auto renamed = program("CREATE TABLE b AS SELECT 1 AS x; CREATE TABLE a AS SELECT 2 AS x; CREATE TABLE v AS SELECT x FROM a;");
    auto d2 = diff_scripts(*moved.desc, *renamed);
    CHECK(applicability(moved, d2, renamed.get(), {}).count(1) == 0);
}

TEST_CASE("a changed plan signature blocks migration") {
    auto desc = program("CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT 2 AS y;");
    std::string tag = "v1";
    SignatureFn sig = [&](const ProgramDescription&, uint32_t stmt) { return stmt == 0 ? tag : std::string("fixed"); };
    auto g = derive_initial(desc, sig);
    FakeRuntime rt;
    run(g, rt, two_workers());
    auto diff = diff_scripts(*desc, *desc);
    CHECK(applicability(g, diff, desc.get(), sig).size() == 2);
    tag = "v2";
    CHECK(applicability(g, diff, desc.get(), sig) == std::set<uint32_t>{1});
}

TEST_CASE("next graph of the two dashboard versions") {
    auto prev = completed_graph(dashql::test::script("dashboard_prev"));
    auto g = next_graph(prev, dashql::test::script("dashboard_next"));
    CHECK(g.generation == prev.generation + 1);
    std::multiset<TaskKind> pending;
    for (uint32_t id : g.pending()) pending.insert(g.tasks[id].kind);
    CHECK(pending == std::multiset<TaskKind>{TaskKind::DROP_VIZ, TaskKind::DROP_TABLE, TaskKind::CREATE_VIEW, TaskKind::VISUALIZE});
    for (uint32_t stmt : {0u, 1u, 2u}) {
        const Task& t = g.tasks[*g.task_for_statement(stmt)];
        CHECK(t.migrated);
        CHECK(t.status == TaskStatus::COMPLETED);
        CHECK(t.artifact == prev.tasks[stmt].artifact);
    }
    // the deleted table chart is dropped before the view it reads
    std::optional<uint32_t> drop_viz, drop_table;
    for (const auto& t : g.tasks) {
        if (t.kind == TaskKind::DROP_VIZ) drop_viz = t.id;
        if (t.kind == TaskKind::DROP_TABLE) drop_table = t.id;
        CHECK((is_undo(t.kind) == !t.origin.has_value()));
    }
    REQUIRE(drop_viz);
    REQUIRE(drop_table);
    CHECK(g.tasks[*drop_viz].artifact == prev.tasks[4].artifact);
    CHECK(g.tasks[*drop_table].deps == std::vector<uint32_t>{*drop_viz});
    // the stacked bar chart keeps its output slot and re-renders over it
    const Task& bar = g.tasks[*g.task_for_statement(4)];
    CHECK(bar.replace);
    CHECK(bar.artifact == prev.tasks[5].artifact);

    FakeRuntime rt;
    auto report = run(g, rt, two_workers());
    CHECK(report.executed == 4);
    CHECK(report.migrated == 3);
}

TEST_CASE("the same script twice runs nothing") {
    for (const auto& [name, text] : dashql::test::corpus()) {
        CAPTURE(name);
        auto prev = completed_graph(text);
        auto g = next_graph(prev, text);
        CHECK(g.pending().empty());
        FakeRuntime rt;
        CHECK(run(g, rt).executed == 0);
    }
}

TEST_CASE("deleting a table drops its consumers first") {
    auto prev = completed_graph("CREATE TABLE t AS SELECT 1 AS a; VISUALIZE t USING TABLE;");
    auto g = next_graph(prev, "");
    REQUIRE(g.tasks.size() == 2);
    CHECK(g.tasks[0].kind == TaskKind::DROP_TABLE);
    CHECK(g.tasks[1].kind == TaskKind::DROP_VIZ);
    CHECK(g.tasks[0].deps == std::vector<uint32_t>{1});
    CHECK(kinds_of(g, g.topo_order()) == std::vector<TaskKind>{TaskKind::DROP_VIZ, TaskKind::DROP_TABLE});

    auto two = completed_graph("CREATE TABLE t AS SELECT 1 AS a; CREATE TABLE u AS SELECT 2 AS b;");
    auto h = next_graph(two, "CREATE TABLE u AS SELECT 2 AS b;");
    REQUIRE(h.tasks.size() == 2);
    CHECK(h.tasks[0].kind == TaskKind::DROP_TABLE);
    CHECK(h.tasks[0].artifact == two.tasks[0].artifact);
    CHECK(h.tasks[1].migrated);
}

TEST_CASE("derivation invariants over all corpus transitions") {
    auto scripts = dashql::test::corpus();
    for (const auto& [na, ta] : scripts) {
        auto prev = completed_graph(ta);
        for (const auto& [nb, tb] : scripts) {
            CAPTURE(na);
            CAPTURE(nb);
            TaskGraph g;
            REQUIRE_NOTHROW(g = next_graph(prev, tb));
            auto order = g.topo_order();
            REQUIRE(order.size() == g.tasks.size());  // acyclic
            std::vector<size_t> pos(order.size());
            for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
            std::set<uint32_t> undos;
            for (const auto& t : g.tasks) {
                for (uint32_t d : t.deps) CHECK(pos[d] < pos[t.id]);
                if (is_undo(t.kind)) undos.insert(t.id);
                if (t.migrated) {
                    CHECK(t.status == TaskStatus::COMPLETED);
                    for (uint32_t d : t.deps) CHECK(g.tasks[d].migrated);
                }
            }
            for (const auto& t : g.tasks) {
                if (t.origin && !t.migrated) {
                    for (uint32_t u : undos) CHECK(std::count(t.deps.begin(), t.deps.end(), u) == 1);
                }
            }
            std::map<std::string, int> owners;
            for (const auto& t : g.tasks) {
                if (!is_undo(t.kind) && t.artifact && !t.blocked) CHECK(++owners[*t.artifact] == 1);
            }
        }
    }
}

TEST_CASE("failures skip dependents and leave independent branches running") {
    auto g = derive_initial(program(dashql::test::script("explore_step2")));
    FakeRuntime rt;
    rt.fail = {TaskKind::CREATE_TABLE};
    std::vector<TaskEvent> events;
    RunOptions o = two_workers();
    o.on_event = [&](const TaskEvent& e) { events.push_back(e); };
    auto report = run(g, rt, o);
    CHECK(g.tasks[3].status == TaskStatus::FAILED);
    CHECK(g.tasks[3].error == "injected failure");
    CHECK(g.tasks[4].status == TaskStatus::SKIPPED);
    for (uint32_t i : {0u, 1u, 2u}) CHECK(g.tasks[i].status == TaskStatus::COMPLETED);
    CHECK(report.failed == 1);
    CHECK(report.skipped == 1);
    CHECK(report.executed == 4);

    // every executed task reports RUNNING before its terminal status
    std::map<uint32_t, std::vector<TaskStatus>> seen;
    for (const auto& e : events) seen[e.task].push_back(e.status);
    for (uint32_t i : {0u, 1u, 2u}) CHECK(seen[i] == std::vector<TaskStatus>{TaskStatus::RUNNING, TaskStatus::COMPLETED});
    CHECK(seen[4] == std::vector<TaskStatus>{TaskStatus::SKIPPED});

    // a second run does not touch finished tasks
    FakeRuntime again;
    CHECK(run(g, again, o).executed == 0);
    CHECK(again.order.empty());
}

TEST_CASE("independent branches of a diamond overlap on two workers") {
    auto g = derive_initial(program(
        "CREATE TABLE a AS SELECT 1 AS x; CREATE TABLE b AS SELECT x FROM a; CREATE TABLE c AS SELECT x AS y FROM a; "
        "CREATE TABLE d AS SELECT * FROM b, c;"));
    FakeRuntime rt;
    rt.sleep_ms = {{1, 150}, {2, 150}};
    run(g, rt, two_workers());
    REQUIRE(rt.order.size() == 4);
    CHECK(rt.order.front() == 0);
    CHECK(rt.order.back() == 3);
    auto [b0, b1] = rt.spans[1];
    auto [c0, c1] = rt.spans[2];
    CHECK(b0 < c1);
    CHECK(c0 < b1);
    CHECK(rt.spans[3].first >= std::max(b1, c1));
}

TEST_CASE("run report JSON lists every task") {
    auto g = derive_initial(program(dashql::test::script("explore_step1")));
    FakeRuntime rt;
    auto report = run(g, rt, two_workers());
    auto j = report.to_json(g.desc.get());
    REQUIRE(j["tasks"].size() == 3);
    CHECK(j["generation"] == g.generation);
    CHECK(j["tasks"][2]["kind"] == "VISUALIZE");
    CHECK(j["tasks"][2]["status"] == "COMPLETED");
}
