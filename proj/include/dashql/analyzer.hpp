#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dashql/parser.hpp"
#include "json.hpp"

namespace dashql {

enum class VizKind : uint8_t { TABLE, LINE, MULTI_LINE, BAR, STACKED_BAR, AREA, STACKED_AREA, SCATTER };
std::string_view to_string(VizKind k);

struct StatementDesc {
    uint32_t root = 0;  // statement root, or the inline SELECT for synthetic views
    StatementKind kind = StatementKind::SELECT;
    SourceLoc loc;
    uint32_t script_index = 0;  // index into ParsedScript::statements
    bool synthetic = false;     // desugared inline SELECT of a VISUALIZE

    std::optional<std::string> produces;
    std::set<std::string> consumes;
    std::set<std::string> input_refs;
    nlohmann::ordered_json settings = nlohmann::ordered_json::object();

    std::optional<uint32_t> query;  // SELECT node of CREATE, SELECT or synthetic views
    std::optional<VizKind> viz_kind;
    bool viz_verbose = false;
    std::optional<LoadFormat> format;
    std::optional<FetchScheme> scheme;
    std::string uri;
    std::optional<InputType> input_type;

    bool blocked = false;
    std::vector<Diagnostic> errors;
};

struct ProgramDescription {
    std::shared_ptr<const AstArena> arena;
    std::vector<StatementDesc> statements;
    std::vector<std::pair<uint32_t, uint32_t>> edges;  // (producer, consumer), sorted, unique
    std::vector<Diagnostic> diagnostics;                // parse errors plus analysis errors

    const AstArena& ast() const { return *arena; }
    std::vector<uint32_t> dependencies(uint32_t stmt) const;
    std::vector<uint32_t> dependents(uint32_t stmt) const;
    /// Deterministic topological order (smallest index first among ready statements).
    std::vector<uint32_t> topo_order() const;
    std::optional<uint32_t> producer_of(std::string_view name) const;
};

/// Extracts produced and consumed names, builds the dependency DAG and desugars inline
/// SELECTs of VISUALIZE statements into synthetic views named `__inline_<hash>`.
ProgramDescription analyze(const ParsedScript& script);

/// Relation names referenced in FROM clauses of a SELECT subtree (lower-cased).
std::set<std::string> referenced_relations(const AstArena& arena, uint32_t select);
/// Names referenced as `main.<name>` anywhere in a subtree.
std::set<std::string> referenced_inputs(const AstArena& arena, uint32_t node);

/// Dependency DAG in DOT format.
std::string to_dot(const ProgramDescription& desc);

}  // namespace dashql
