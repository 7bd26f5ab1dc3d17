#include "dashql/taskgraph.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <queue>
#include <thread>

#include <fmt/format.h>

namespace dashql {

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::SET: return "SET";
        case TaskKind::INPUT: return "INPUT";
        case TaskKind::FETCH: return "FETCH";
        case TaskKind::LOAD: return "LOAD";
        case TaskKind::CREATE_TABLE: return "CREATE_TABLE";
        case TaskKind::CREATE_VIEW: return "CREATE_VIEW";
        case TaskKind::QUERY: return "QUERY";
        case TaskKind::VISUALIZE: return "VISUALIZE";
        case TaskKind::DROP_TABLE: return "DROP_TABLE";
        case TaskKind::DROP_VIEW: return "DROP_VIEW";
        case TaskKind::DROP_VIZ: return "DROP_VIZ";
        case TaskKind::DROP_BUFFER: return "DROP_BUFFER";
        case TaskKind::DROP_INPUT: return "DROP_INPUT";
    }
    return "?";
}

bool is_undo(TaskKind k) {
    switch (k) {
        case TaskKind::DROP_TABLE:
        case TaskKind::DROP_VIEW:
        case TaskKind::DROP_VIZ:
        case TaskKind::DROP_BUFFER:
        case TaskKind::DROP_INPUT: return true;
        default: return false;
    }
}

std::string_view to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::PENDING: return "PENDING";
        case TaskStatus::RUNNING: return "RUNNING";
        case TaskStatus::COMPLETED: return "COMPLETED";
        case TaskStatus::FAILED: return "FAILED";
        case TaskStatus::SKIPPED: return "SKIPPED";
    }
    return "?";
}

namespace {

TaskKind task_kind(StatementKind k) {
    switch (k) {
        case StatementKind::SET: return TaskKind::SET;
        case StatementKind::INPUT: return TaskKind::INPUT;
        case StatementKind::FETCH: return TaskKind::FETCH;
        case StatementKind::LOAD: return TaskKind::LOAD;
        case StatementKind::CREATE_TABLE_AS: return TaskKind::CREATE_TABLE;
        case StatementKind::CREATE_VIEW_AS: return TaskKind::CREATE_VIEW;
        case StatementKind::SELECT: return TaskKind::QUERY;
        case StatementKind::VISUALIZE: return TaskKind::VISUALIZE;
    }
    return TaskKind::SET;
}

/// Undo counterpart of a statement task. Named views are undone by DROP_TABLE, the label
/// the worked example uses; desugared inline views use DROP_VIEW.
std::optional<TaskKind> undo_kind(const ProgramDescription& desc, const Task& t) {
    switch (t.kind) {
        case TaskKind::INPUT: return TaskKind::DROP_INPUT;
        case TaskKind::FETCH: return TaskKind::DROP_BUFFER;
        case TaskKind::LOAD:
        case TaskKind::CREATE_TABLE: return TaskKind::DROP_TABLE;
        case TaskKind::CREATE_VIEW: return desc.statements[*t.origin].synthetic ? TaskKind::DROP_VIEW : TaskKind::DROP_TABLE;
        case TaskKind::QUERY:
        case TaskKind::VISUALIZE: return TaskKind::DROP_VIZ;
        default: return std::nullopt;
    }
}

bool owns_output(TaskKind k) { return k == TaskKind::QUERY || k == TaskKind::VISUALIZE; }

Task statement_task(const ProgramDescription& desc, uint32_t stmt, const SignatureFn& signature) {
    const auto& s = desc.statements[stmt];
    Task t;
    t.kind = task_kind(s.kind);
    t.origin = stmt;
    t.artifact = statement_artifact(desc, stmt);
    t.blocked = s.blocked;
    if (s.blocked) {
        for (const auto& e : s.errors) t.error += (t.error.empty() ? "" : "; ") + e.message;
        if (t.error.empty()) t.error = "statement is blocked";
    }
    if (signature) t.signature = signature(desc, stmt);
    return t;
}

void register_artifacts(TaskGraph& g) {
    g.artifacts.clear();
    for (const auto& t : g.tasks) {
        if (is_undo(t.kind) || !t.artifact || t.blocked) continue;
        auto [it, inserted] = g.artifacts.emplace(*t.artifact, t.id);
        if (!inserted) throw GraphError(fmt::format("artifact '{}' has two owners (tasks {} and {})", *t.artifact, it->second, t.id));
    }
}

}  // namespace

std::optional<std::string> statement_artifact(const ProgramDescription& desc, uint32_t stmt) {
    const auto& s = desc.statements[stmt];
    switch (s.kind) {
        case StatementKind::INPUT: return s.produces ? std::optional<std::string>("input:" + *s.produces) : std::nullopt;
        case StatementKind::FETCH: return s.produces ? std::optional<std::string>("buffer:" + *s.produces) : std::nullopt;
        case StatementKind::LOAD:
        case StatementKind::CREATE_TABLE_AS:
        case StatementKind::CREATE_VIEW_AS: return s.produces;
        default: return std::nullopt;  // outputs are numbered by the graph
    }
}

std::optional<uint32_t> TaskGraph::task_for_statement(uint32_t stmt) const {
    for (const auto& t : tasks) {
        if (t.origin == stmt) return t.id;
    }
    return std::nullopt;
}

std::vector<uint32_t> TaskGraph::dependents(uint32_t task) const {
    std::vector<uint32_t> out;
    for (const auto& t : tasks) {
        if (std::find(t.deps.begin(), t.deps.end(), task) != t.deps.end()) out.push_back(t.id);
    }
    return out;
}

std::set<uint32_t> TaskGraph::downstream(uint32_t task) const {
    std::set<uint32_t> out;
    std::vector<uint32_t> stack{task};
    while (!stack.empty()) {
        uint32_t cur = stack.back();
        stack.pop_back();
        for (uint32_t d : dependents(cur)) {
            if (out.insert(d).second) stack.push_back(d);
        }
    }
    return out;
}

std::vector<uint32_t> TaskGraph::topo_order() const {
    std::vector<size_t> indegree(tasks.size(), 0);
    std::vector<std::vector<uint32_t>> out_edges(tasks.size());
    for (const auto& t : tasks) {
        for (uint32_t d : t.deps) {
            ++indegree[t.id];
            out_edges[d].push_back(t.id);
        }
    }
    std::priority_queue<uint32_t, std::vector<uint32_t>, std::greater<>> ready;
    for (const auto& t : tasks) {
        if (indegree[t.id] == 0) ready.push(t.id);
    }
    std::vector<uint32_t> order;
    while (!ready.empty()) {
        uint32_t cur = ready.top();
        ready.pop();
        order.push_back(cur);
        for (uint32_t n : out_edges[cur]) {
            if (--indegree[n] == 0) ready.push(n);
        }
    }
    if (order.size() != tasks.size()) throw GraphError("task graph has a cycle");
    return order;
}

std::vector<uint32_t> TaskGraph::pending() const {
    std::vector<uint32_t> out;
    for (const auto& t : tasks) {
        if (t.status == TaskStatus::PENDING) out.push_back(t.id);
    }
    return out;
}

nlohmann::ordered_json TaskGraph::to_json() const {
    auto out = nlohmann::ordered_json::object();
    out["generation"] = generation;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : tasks) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["kind"] = to_string(t.kind);
        j["statement"] = t.origin ? nlohmann::ordered_json(*t.origin) : nlohmann::ordered_json(nullptr);
        j["deps"] = t.deps;
        j["status"] = to_string(t.status);
        j["migrated"] = t.migrated;
        j["artifact"] = t.artifact ? nlohmann::ordered_json(*t.artifact) : nlohmann::ordered_json(nullptr);
        if (!t.signature.empty()) j["signature"] = t.signature;
        arr.push_back(std::move(j));
    }
    out["tasks"] = std::move(arr);
    return out;
}

TaskGraph derive_initial(std::shared_ptr<const ProgramDescription> desc, const SignatureFn& signature) {
    TaskGraph g;
    g.desc = desc;
    for (uint32_t i = 0; i < desc->statements.size(); ++i) {
        Task t = statement_task(*desc, i, signature);
        t.id = i;
        if (owns_output(t.kind)) t.artifact = fmt::format("viz:{}", g.next_output++);
        for (uint32_t d : desc->dependencies(i)) t.deps.push_back(d);
        g.tasks.push_back(std::move(t));
    }
    register_artifacts(g);
    return g;
}

std::set<uint32_t> applicability(const TaskGraph& prev, const ScriptDiff& diff, const ProgramDescription* next, const SignatureFn& signature) {
    std::vector<bool> ok(prev.tasks.size(), false);
    std::vector<bool> statement_task(prev.tasks.size(), false);
    for (const auto& t : prev.tasks) statement_task[t.id] = t.origin.has_value();
    auto order = prev.topo_order();

    auto qualifies = [&](const Task& t) {
        if (!t.origin || t.blocked || t.status != TaskStatus::COMPLETED) return false;
        const DiffEntry* e = diff.for_prev(*t.origin);
        if (!e || e->verdict != Verdict::EQUAL || !e->next) return false;
        if (next && signature && signature(*next, *e->next) != t.signature) return false;
        // a producer that is new to this statement (e.g. an added SET) changes its inputs
        if (next && prev.desc) {
            auto prev_deps = prev.desc->dependencies(*t.origin);
            for (uint32_t nd : next->dependencies(*e->next)) {
                const DiffEntry* de = diff.for_next(nd);
                if (!de || !de->prev || std::find(prev_deps.begin(), prev_deps.end(), *de->prev) == prev_deps.end()) return false;
            }
        }
        for (uint32_t d : t.deps) {
            // undo tasks of the previous generation are finished barriers, not state
            if (statement_task[d] && !ok[d]) return false;
        }
        return true;
    };
    for (uint32_t id : order) ok[id] = qualifies(prev.tasks[id]);

    // A later task that will not be migrated but changed this task's output when it ran
    // invalidates the output; propagate forward and repeat until stable.
    std::vector<size_t> position(prev.tasks.size());
    for (size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& t : prev.tasks) {
            if (!ok[t.id] || !t.artifact) continue;
            for (const auto& u : prev.tasks) {
                if (ok[u.id] || u.status != TaskStatus::COMPLETED || position[u.id] <= position[t.id]) continue;
                if (!u.modifies.count(*t.artifact)) continue;
                ok[t.id] = false;
                for (uint32_t d : prev.downstream(t.id)) ok[d] = false;
                changed = true;
                break;
            }
        }
    }
    std::set<uint32_t> out;
    for (const auto& t : prev.tasks) {
        if (ok[t.id]) out.insert(t.id);
    }
    return out;
}

TaskGraph derive_next(const TaskGraph& prev, const ScriptDiff& diff, std::shared_ptr<const ProgramDescription> next, const SignatureFn& signature) {
    auto applicable = applicability(prev, diff, next.get(), signature);
    TaskGraph g;
    g.generation = prev.generation + 1;
    g.desc = next;
    g.next_output = prev.next_output;

    // undo tasks for completed effects that are neither migrated nor replaced in place
    std::map<uint32_t, uint32_t> undo_of;  // prev task -> undo task id
    std::set<uint32_t> replaced;           // prev tasks re-run over their own artifact
    for (const auto& t : prev.tasks) {
        if (!t.origin || applicable.count(t.id)) continue;
        const DiffEntry* e = diff.for_prev(*t.origin);
        if (e && e->verdict == Verdict::EQUAL) {
            replaced.insert(t.id);
            continue;
        }
        if (t.status != TaskStatus::COMPLETED || !t.artifact) continue;
        auto kind = undo_kind(*prev.desc, t);
        if (!kind) continue;
        Task u;
        u.id = static_cast<uint32_t>(g.tasks.size());
        u.kind = *kind;
        u.artifact = t.artifact;
        undo_of[t.id] = u.id;
        g.tasks.push_back(std::move(u));
    }
    // consumers are undone before their producers
    for (auto& [prev_id, undo_id] : undo_of) {
        for (uint32_t d : prev.downstream(prev_id)) {
            auto it = undo_of.find(d);
            if (it != undo_of.end()) g.tasks[undo_id].deps.push_back(it->second);
        }
        std::sort(g.tasks[undo_id].deps.begin(), g.tasks[undo_id].deps.end());
    }
    const uint32_t undo_count = static_cast<uint32_t>(g.tasks.size());

    std::vector<uint32_t> task_of_stmt(next->statements.size());
    for (uint32_t i = 0; i < next->statements.size(); ++i) {
        Task t = statement_task(*next, i, signature);
        t.id = static_cast<uint32_t>(g.tasks.size());
        const DiffEntry* e = diff.for_next(i);
        std::optional<uint32_t> prev_task = e && e->prev ? prev.task_for_statement(*e->prev) : std::nullopt;
        if (prev_task && applicable.count(*prev_task)) {
            const Task& p = prev.tasks[*prev_task];
            t.status = TaskStatus::COMPLETED;
            t.migrated = true;
            t.artifact = p.artifact;
            t.duration_ms = p.duration_ms;
        } else if (prev_task && replaced.count(*prev_task)) {
            t.replace = true;
            if (owns_output(t.kind)) t.artifact = prev.tasks[*prev_task].artifact;
        }
        if (owns_output(t.kind) && !t.artifact) t.artifact = fmt::format("viz:{}", g.next_output++);
        task_of_stmt[i] = t.id;
        g.tasks.push_back(std::move(t));
    }
    for (uint32_t i = 0; i < next->statements.size(); ++i) {
        Task& t = g.tasks[task_of_stmt[i]];
        for (uint32_t d : next->dependencies(i)) t.deps.push_back(task_of_stmt[d]);
        if (!t.migrated) {
            for (uint32_t u = 0; u < undo_count; ++u) t.deps.push_back(u);
        }
        std::sort(t.deps.begin(), t.deps.end());
    }
    register_artifacts(g);
    return g;
}

// ---- scheduling ----

nlohmann::ordered_json TaskEvent::to_json() const {
    nlohmann::ordered_json j;
    j["generation"] = generation;
    j["task"] = task;
    j["kind"] = to_string(kind);
    j["statement"] = origin ? nlohmann::ordered_json(*origin) : nlohmann::ordered_json(nullptr);
    j["status"] = to_string(status);
    if (!error.empty()) j["error"] = error;
    return j;
}

nlohmann::ordered_json RunReport::to_json(const ProgramDescription* desc) const {
    nlohmann::ordered_json j;
    j["generation"] = generation;
    j["executed"] = executed;
    j["migrated"] = migrated;
    j["failed"] = failed;
    j["skipped"] = skipped;
    j["wall_ms"] = wall_ms;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : tasks) {
        nlohmann::ordered_json tj;
        tj["id"] = t.id;
        tj["kind"] = to_string(t.kind);
        tj["statement"] = t.origin ? nlohmann::ordered_json(*t.origin) : nlohmann::ordered_json(nullptr);
        if (desc && t.origin && *t.origin < desc->statements.size()) {
            const auto& s = desc->statements[*t.origin];
            tj["statement_kind"] = to_string(s.kind);
            if (s.produces) tj["name"] = *s.produces;
        }
        tj["status"] = to_string(t.status);
        tj["migrated"] = t.migrated;
        tj["artifact"] = t.artifact ? nlohmann::ordered_json(*t.artifact) : nlohmann::ordered_json(nullptr);
        tj["duration_ms"] = t.duration_ms;
        if (!t.error.empty()) tj["error"] = t.error;
        arr.push_back(std::move(tj));
    }
    j["tasks"] = std::move(arr);
    return j;
}

size_t default_workers() {
    if (const char* env = std::getenv("DASHQL_WORKERS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<size_t>(v);
    }
    return std::max<size_t>(1, std::thread::hardware_concurrency());
}

RunReport run(TaskGraph& graph, TaskRuntime& runtime, const RunOptions& options) {
    const auto started = options.clock();
    const size_t workers = options.workers ? options.workers : default_workers();
    std::mutex mu;
    std::condition_variable cv;
    std::deque<uint32_t> ready;
    size_t running = 0;
    RunReport report;
    report.generation = graph.generation;

    auto emit = [&](const Task& t) {
        if (!options.on_event) return;
        TaskEvent ev;
        ev.generation = graph.generation;
        ev.task = t.id;
        ev.kind = t.kind;
        ev.origin = t.origin;
        ev.status = t.status;
        ev.error = t.error;
        options.on_event(ev);
    };
    std::vector<std::vector<uint32_t>> dependents(graph.tasks.size());
    for (const auto& t : graph.tasks) {
        for (uint32_t d : t.deps) dependents[d].push_back(t.id);
    }
    // caller holds the lock
    auto is_ready = [&](const Task& t) {
        if (t.status != TaskStatus::PENDING) return false;
        return std::all_of(t.deps.begin(), t.deps.end(), [&](uint32_t d) { return graph.tasks[d].status == TaskStatus::COMPLETED; });
    };
    auto skip_downstream = [&](uint32_t id) {
        std::vector<uint32_t> stack{id};
        while (!stack.empty()) {
            uint32_t cur = stack.back();
            stack.pop_back();
            for (uint32_t d : dependents[cur]) {
                Task& t = graph.tasks[d];
                if (t.status != TaskStatus::PENDING) continue;
                t.status = TaskStatus::SKIPPED;
                t.error = fmt::format("dependency {} did not complete", cur);
                ++report.skipped;
                emit(t);
                stack.push_back(d);
            }
        }
    };
    {
        std::lock_guard lock(mu);
        for (uint32_t id : graph.topo_order()) {
            Task& t = graph.tasks[id];
            if (t.status == TaskStatus::COMPLETED && t.migrated) ++report.migrated;
            if (t.status != TaskStatus::PENDING) continue;
            bool dead = std::any_of(t.deps.begin(), t.deps.end(), [&](uint32_t d) {
                auto s = graph.tasks[d].status;
                return s == TaskStatus::FAILED || s == TaskStatus::SKIPPED;
            });
            if (dead) {
                t.status = TaskStatus::SKIPPED;
                ++report.skipped;
                emit(t);
            } else if (is_ready(t)) {
                ready.push_back(id);
            }
        }
    }

    auto worker = [&] {
        std::unique_lock lock(mu);
        while (true) {
            cv.wait(lock, [&] { return !ready.empty() || running == 0; });
            if (ready.empty()) {
                cv.notify_all();
                return;
            }
            uint32_t id = ready.front();
            ready.pop_front();
            Task& t = graph.tasks[id];
            t.status = TaskStatus::RUNNING;
            ++running;
            emit(t);
            Task work = t;  // the runtime works on a copy; the graph is read under the lock
            lock.unlock();
            auto t0 = options.clock();
            std::string error;
            bool ok = true;
            if (work.blocked) {
                ok = false;
                error = work.error;
            } else {
                try {
                    runtime.execute(graph, work);
                } catch (const std::exception& e) {
                    ok = false;
                    error = e.what();
                }
            }
            double ms = std::chrono::duration<double, std::milli>(options.clock() - t0).count();
            lock.lock();
            --running;
            work.duration_ms = ms;
            work.status = ok ? TaskStatus::COMPLETED : TaskStatus::FAILED;
            work.error = ok ? std::string() : error;
            t = std::move(work);
            ++report.executed;
            if (!ok) ++report.failed;
            emit(t);
            if (ok) {
                for (uint32_t d : dependents[id]) {
                    if (is_ready(graph.tasks[d])) ready.push_back(d);
                }
            } else {
                skip_downstream(id);
            }
            cv.notify_all();
        }
    };
    std::vector<std::thread> pool;
    for (size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    report.wall_ms = std::chrono::duration<double, std::milli>(options.clock() - started).count();
    report.tasks = graph.tasks;
    return report;
}

}  // namespace dashql
