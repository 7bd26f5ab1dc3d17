#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dashql/analyzer.hpp"
#include "dashql/differ.hpp"
#include "dashql/executor.hpp"
#include "dashql/ingest.hpp"
#include "dashql/optimizer.hpp"
#include "dashql/taskgraph.hpp"
#include "dashql/vizgen.hpp"

namespace dashql {

/// JSON scalar to a Value; arrays and objects become their JSON text.
Value value_from_json(const nlohmann::ordered_json& v);

/// Maps the remote locations used by the example scripts onto a fixture data directory:
/// the static example host, `s3://bucket/file1`, `https://api` and `https://a/`.
void mount_fixture_data(Fetcher& fetcher, const std::string& data_dir);

struct EngineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EngineOptions {
    std::shared_ptr<Fetcher> fetcher;  // a fresh Fetcher when empty
    size_t workers = 0;                // 0: DASHQL_WORKERS or hardware concurrency
    std::function<Timestamp()> now;    // snapshot source for now(); system clock when empty
    bool pushdown = true;
    bool force_materialize = false;
    bool am4 = true;
    int64_t am4_width = 2000;  // overridden by `SET am4_width = n`
    size_t readahead_groups = 1;
};

/// Output of a VISUALIZE or bare SELECT statement.
struct OutputArtifact {
    enum class Kind : uint8_t { TABLE, CHART, QUERY };
    Kind kind = Kind::TABLE;
    std::string key;  // `viz:<n>`
    std::string relation;
    std::vector<ColumnDef> schema;
    uint64_t row_count = 0;          // rows of the visualized relation
    std::optional<ChartSpec> chart;  // CHART only
    Relation data;                   // chart rows (possibly reduced) or the query result
    bool am4_applied = false;

    /// Table outputs carry schema and row count; rows come from table pages.
    nlohmann::ordered_json to_json(bool include_data = false) const;
};

struct UpdateResult {
    std::shared_ptr<const ProgramDescription> program;
    std::shared_ptr<const ProgramDescription> previous;
    ScriptDiff diff;
    RunReport report;
    nlohmann::ordered_json to_json() const;
};

/// One dashboard session: the current script, its task graph and all artifacts.
/// Mutations (script updates, input changes) are serialized; reads may run concurrently.
class Engine {
public:
    explicit Engine(EngineOptions options = {});
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Diffs against the current script, migrates what is applicable and runs the rest.
    UpdateResult update_script(std::string text);
    /// Re-runs the dependents of the input. Setting the current value is a no-op.
    /// Throws EngineError for unknown inputs and type mismatches.
    RunReport set_input(const std::string& name, const Value& value);

    std::shared_ptr<const ProgramDescription> program() const;
    TaskGraph graph() const;
    MaterializationPlan plan() const;
    nlohmann::ordered_json settings() const;
    const Catalog& catalog() const { return catalog_; }
    Fetcher& fetcher() { return *options_.fetcher; }
    const EngineOptions& options() const { return options_; }

    /// Output of a statement of the current program, if its task completed.
    std::optional<OutputArtifact> output_for_statement(uint32_t stmt) const;
    /// Per-statement outputs, errors and input declarations of the current program.
    nlohmann::ordered_json outputs_json(bool include_data = false) const;

    /// Page of a relation; a windowed scan when pushdown applies (`pushed` reports it).
    Relation table_page(const std::string& relation, size_t offset, size_t limit, bool* pushed = nullptr) const;

    /// Verbose text for a VISUALIZE statement of the current program, with the source span
    /// it replaces. Short-form tables and statements without a chart are returned verbatim.
    struct Expansion {
        std::string text;
        SourceLoc loc;
    };
    Expansion expand(uint32_t stmt) const;

    /// Canonical text of every catalog relation and every output, keyed by statement
    /// position; identical states produce identical snapshots.
    nlohmann::ordered_json state_snapshot() const;

    using Listener = std::function<void(const TaskEvent&)>;
    size_t subscribe(Listener listener);
    void unsubscribe(size_t id);

private:
    class Runtime;
    friend class Runtime;

    ExecContext context() const;
    void emit(const TaskEvent& ev);

    EngineOptions options_;
    Catalog catalog_;
    std::mutex mutation_mu_;
    mutable std::mutex state_mu_;  // guards the fields below
    std::shared_ptr<const ProgramDescription> program_;
    TaskGraph graph_;
    MaterializationPlan plan_;
    nlohmann::ordered_json settings_ = nlohmann::ordered_json::object();
    std::map<std::string, std::shared_ptr<RemoteFile>> buffers_;
    std::map<std::string, OutputArtifact> outputs_;
    Timestamp run_now_;

    mutable std::mutex listener_mu_;
    std::map<size_t, Listener> listeners_;
    size_t next_listener_ = 0;
};

}  // namespace dashql
