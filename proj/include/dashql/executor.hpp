#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dashql/ast.hpp"
#include "dashql/ingest.hpp"
#include "dashql/relation.hpp"

namespace dashql {

struct ExecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stored query of a view. Holding the arena keeps the AST alive across script versions.
struct ViewDef {
    std::shared_ptr<const AstArena> arena;
    uint32_t select = 0;
};

/// A relation that is scanned on demand instead of being materialized.
class LazySource {
public:
    virtual ~LazySource() = default;
    virtual const std::vector<ColumnDef>& schema() const = 0;
    virtual uint64_t row_count() const = 0;
    virtual Relation scan(const ScanOptions& options) = 0;
};

class RgfLazySource final : public LazySource {
public:
    explicit RgfLazySource(std::shared_ptr<RgfReader> reader) : reader_(std::move(reader)) {}
    const std::vector<ColumnDef>& schema() const override { return reader_->footer().schema; }
    uint64_t row_count() const override { return reader_->footer().row_count(); }
    Relation scan(const ScanOptions& options) override { return reader_->scan(options); }
    const std::shared_ptr<RgfReader>& reader() const { return reader_; }

private:
    std::shared_ptr<RgfReader> reader_;
};

struct CatalogEntry {
    enum class Kind : uint8_t { TABLE, VIEW, LAZY };
    Kind kind = Kind::TABLE;
    RelationPtr table;
    ViewDef view;
    std::shared_ptr<LazySource> lazy;
};

/// Named relations and input values. Reads take a shared lock, DDL an exclusive one.
class Catalog {
public:
    void create_table(const std::string& name, RelationPtr rel, bool replace = false);
    void create_view(const std::string& name, ViewDef view, bool replace = false);
    void create_lazy(const std::string& name, std::shared_ptr<LazySource> source, bool replace = false);
    /// Throws ExecError for unknown names. Views over the dropped name fail on their next read.
    void drop(const std::string& name);
    bool contains(const std::string& name) const;
    std::optional<CatalogEntry> lookup(const std::string& name) const;
    std::vector<std::string> names() const;

    void declare_input(const std::string& name, DataType type);
    void drop_input(const std::string& name);
    /// Casts to the declared type; throws ExecError for unknown names or mismatches.
    void set_input(const std::string& name, const Value& value);
    std::optional<DataType> input_type(const std::string& name) const;
    Value input(const std::string& name) const;
    std::map<std::string, Value> inputs() const;

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, CatalogEntry> entries_;
    std::map<std::string, std::pair<DataType, Value>> inputs_;
};

struct ExecContext {
    Timestamp now;          // snapshot of now() for a whole run
    bool pushdown = true;   // push projections and range predicates into lazy scans
    int depth = 0;          // view nesting guard
};

/// Evaluates a SELECT node.
Relation eval_select(const Catalog& catalog, const AstArena& arena, uint32_t select, const ExecContext& ctx);
/// Reads a catalog entry completely: tables as stored, views re-evaluated, lazy sources scanned.
Relation read_relation(const Catalog& catalog, const std::string& name, const ExecContext& ctx);
/// Parses and evaluates a single SELECT statement.
Relation execute_sql(const Catalog& catalog, std::string sql, const ExecContext& ctx);

/// What a SELECT over a single relation needs from it.
struct ScanPushdown {
    std::string relation;
    std::optional<std::vector<std::string>> projection;  // absent when `*` is used
    /// WHERE conjuncts `column <op> expr` whose other side references no columns.
    /// The expressions are evaluated at query time, since they may read inputs.
    struct Pred {
        std::string column;
        CompareOp op;
        uint32_t expr;
    };
    std::vector<Pred> predicates;
};

/// Returns nothing when the FROM clause is not a single named relation.
std::optional<ScanPushdown> analyze_scan_pushdown(const AstArena& arena, uint32_t select);

// Aggregate kernels, exposed for the tests. Ties resolve to the first row in scan order;
// rows whose key is NULL are ignored; empty input yields NULL.
Value arg_min(const Column& a, const Column& b);
Value arg_max(const Column& a, const Column& b);

}  // namespace dashql
