#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dashql/analyzer.hpp"
#include "dashql/differ.hpp"
#include "json.hpp"

namespace dashql {

enum class TaskKind : uint8_t {
    SET,
    INPUT,
    FETCH,
    LOAD,
    CREATE_TABLE,
    CREATE_VIEW,
    QUERY,
    VISUALIZE,
    DROP_TABLE,
    DROP_VIEW,
    DROP_VIZ,
    DROP_BUFFER,
    DROP_INPUT,
};
std::string_view to_string(TaskKind k);
bool is_undo(TaskKind k);

enum class TaskStatus : uint8_t { PENDING, RUNNING, COMPLETED, FAILED, SKIPPED };
std::string_view to_string(TaskStatus s);

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Task {
    uint32_t id = 0;
    TaskKind kind = TaskKind::SET;
    std::optional<uint32_t> origin;  // statement in the graph's program; none for undo tasks
    std::vector<uint32_t> deps;
    TaskStatus status = TaskStatus::PENDING;
    /// Owned artifact; for undo tasks the artifact they remove.
    std::optional<std::string> artifact;
    /// Artifacts owned by other tasks that this task changed when it ran.
    std::set<std::string> modifies;
    /// Plan-dependent state of the task (e.g. the materialization decision of a LOAD).
    std::string signature;
    bool migrated = false;  // state carried over from the previous generation
    bool replace = false;   // re-runs over an artifact of the same name without an undo
    bool blocked = false;   // the statement has analysis errors; fails without running
    std::string error;
    double duration_ms = 0;
};

/// Artifact naming, shared by derivation and runtimes.
std::optional<std::string> statement_artifact(const ProgramDescription& desc, uint32_t stmt);

struct TaskGraph {
    uint64_t generation = 0;
    std::shared_ptr<const ProgramDescription> desc;
    std::vector<Task> tasks;
    std::map<std::string, uint32_t> artifacts;  // artifact -> owning task
    uint64_t next_output = 0;                   // counter for `viz:<n>` artifacts

    std::optional<uint32_t> task_for_statement(uint32_t stmt) const;
    std::vector<uint32_t> dependents(uint32_t task) const;
    /// Transitive dependents, excluding `task` itself.
    std::set<uint32_t> downstream(uint32_t task) const;
    /// Deterministic topological order (lowest id first among ready tasks).
    std::vector<uint32_t> topo_order() const;
    /// Tasks that will run, i.e. neither migrated nor finished.
    std::vector<uint32_t> pending() const;
    nlohmann::ordered_json to_json() const;
};

/// Plan signature of a statement in a program; tasks whose signature changed are not
/// applicable even if their statement is equal.
using SignatureFn = std::function<std::string(const ProgramDescription&, uint32_t stmt)>;

/// One task per statement, edges mirroring the statement dependencies, all PENDING.
TaskGraph derive_initial(std::shared_ptr<const ProgramDescription> desc, const SignatureFn& signature = {});

/// Previous-generation tasks whose state can be migrated. A task qualifies when its statement
/// is EQUAL, it completed, it is not blocked, its signature is unchanged (when `next` is
/// given), all its dependencies qualify, and no later non-qualifying task that completed
/// modified its artifact.
std::set<uint32_t> applicability(const TaskGraph& prev, const ScriptDiff& diff, const ProgramDescription* next = nullptr,
                                 const SignatureFn& signature = {});

/// Next generation: applicable tasks migrated as COMPLETED, undo tasks for the completed
/// effects of changed or deleted statements (consumers first), fresh tasks for the rest.
/// Every fresh task waits for all undo tasks. Throws GraphError on artifact conflicts.
TaskGraph derive_next(const TaskGraph& prev, const ScriptDiff& diff, std::shared_ptr<const ProgramDescription> next,
                      const SignatureFn& signature = {});

// ---- scheduling ----

struct TaskEvent {
    uint64_t generation = 0;
    uint32_t task = 0;
    TaskKind kind = TaskKind::SET;
    std::optional<uint32_t> origin;
    TaskStatus status = TaskStatus::PENDING;
    std::string error;
    nlohmann::ordered_json to_json() const;
};

/// Executes one task. Throwing marks the task FAILED with the exception message.
class TaskRuntime {
public:
    virtual ~TaskRuntime() = default;
    virtual void execute(const TaskGraph& graph, Task& task) = 0;
};

struct RunOptions {
    size_t workers = 0;  // 0: DASHQL_WORKERS, else hardware concurrency
    std::function<void(const TaskEvent&)> on_event;
    std::function<std::chrono::steady_clock::time_point()> clock = [] { return std::chrono::steady_clock::now(); };
};

struct RunReport {
    uint64_t generation = 0;
    size_t executed = 0;  // tasks that ran in this call
    size_t failed = 0;
    size_t skipped = 0;
    size_t migrated = 0;
    double wall_ms = 0;
    std::vector<Task> tasks;  // snapshot after the run
    nlohmann::ordered_json to_json(const ProgramDescription* desc = nullptr) const;
};

size_t default_workers();

/// Runs every PENDING task whose dependencies completed, in parallel where independent.
/// Dependents of FAILED or SKIPPED tasks become SKIPPED.
RunReport run(TaskGraph& graph, TaskRuntime& runtime, const RunOptions& options = {});

}  // namespace dashql
