#include "dashql/executor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "dashql/parser.hpp"

namespace dashql {

// ---- catalog ----

void Catalog::create_table(const std::string& name, RelationPtr rel, bool replace) {
    std::unique_lock lock(mu_);
    if (!replace && entries_.count(name)) throw ExecError(fmt::format("relation '{}' already exists", name));
    CatalogEntry e;
    e.kind = CatalogEntry::Kind::TABLE;
    e.table = std::move(rel);
    entries_[name] = std::move(e);
}

void Catalog::create_view(const std::string& name, ViewDef view, bool replace) {
    std::unique_lock lock(mu_);
    if (!replace && entries_.count(name)) throw ExecError(fmt::format("relation '{}' already exists", name));
    CatalogEntry e;
    e.kind = CatalogEntry::Kind::VIEW;
    e.view = std::move(view);
    entries_[name] = std::move(e);
}

void Catalog::create_lazy(const std::string& name, std::shared_ptr<LazySource> source, bool replace) {
    std::unique_lock lock(mu_);
    if (!replace && entries_.count(name)) throw ExecError(fmt::format("relation '{}' already exists", name));
    CatalogEntry e;
    e.kind = CatalogEntry::Kind::LAZY;
    e.lazy = std::move(source);
    entries_[name] = std::move(e);
}

void Catalog::drop(const std::string& name) {
    std::unique_lock lock(mu_);
    if (!entries_.erase(name)) throw ExecError(fmt::format("relation '{}' does not exist", name));
}

bool Catalog::contains(const std::string& name) const {
    std::shared_lock lock(mu_);
    return entries_.count(name) > 0;
}

std::optional<CatalogEntry> Catalog::lookup(const std::string& name) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(name);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> Catalog::names() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (auto& [k, v] : entries_) out.push_back(k);
    return out;
}

void Catalog::declare_input(const std::string& name, DataType type) {
    std::unique_lock lock(mu_);
    inputs_[name] = {type, Value{}};
}

void Catalog::drop_input(const std::string& name) {
    std::unique_lock lock(mu_);
    inputs_.erase(name);
}

void Catalog::set_input(const std::string& name, const Value& value) {
    std::unique_lock lock(mu_);
    auto it = inputs_.find(name);
    if (it == inputs_.end()) throw ExecError(fmt::format("unknown input '{}'", name));
    auto cast = cast_value(value, it->second.first);
    if (!cast) {
        throw ExecError(fmt::format("input '{}' expects {}, got '{}'", name, to_string(it->second.first), to_display_string(value)));
    }
    it->second.second = *cast;
}

std::optional<DataType> Catalog::input_type(const std::string& name) const {
    std::shared_lock lock(mu_);
    auto it = inputs_.find(name);
    if (it == inputs_.end()) return std::nullopt;
    return it->second.first;
}

Value Catalog::input(const std::string& name) const {
    std::shared_lock lock(mu_);
    auto it = inputs_.find(name);
    return it == inputs_.end() ? Value{} : it->second.second;
}

std::map<std::string, Value> Catalog::inputs() const {
    std::shared_lock lock(mu_);
    std::map<std::string, Value> out;
    for (auto& [k, v] : inputs_) out[k] = v.second;
    return out;
}

// ---- aggregate kernels ----

namespace {

Value arg_extreme(const Column& a, const Column& b, bool want_min) {
    std::optional<size_t> best;
    Value best_key;
    for (size_t i = 0; i < b.size(); ++i) {
        if (b.is_null(i)) continue;
        Value k = b.get(i);
        if (!best) {
            best = i;
            best_key = k;
            continue;
        }
        auto c = total_order(k, best_key);
        // strict comparison keeps the first row on ties
        if (want_min ? c < 0 : c > 0) {
            best = i;
            best_key = k;
        }
    }
    return best ? a.get(*best) : Value{};
}

}  // namespace

Value arg_min(const Column& a, const Column& b) { return arg_extreme(a, b, true); }
Value arg_max(const Column& a, const Column& b) { return arg_extreme(a, b, false); }

// ---- expressions ----

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y)); });
}

bool is_aggregate_name(std::string_view fn) {
    return fn == "count" || fn == "sum" || fn == "min" || fn == "max" || fn == "avg" || fn == "arg_min" || fn == "arg_max";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Bound expression tree. Column indices address the row the expression is evaluated on:
/// the FROM row in row mode, the (keys..., aggregates...) row in grouped mode.
struct Expr {
    enum class Kind : uint8_t { CONST, COLUMN, BINARY, UNARY, FUNC, CAST };
    Kind kind = Kind::CONST;
    DataType type = DataType::Null;
    Value value;
    size_t column = 0;
    BinaryOp bop = BinaryOp::ADD;
    UnaryOp uop = UnaryOp::NOT;
    std::string fn;
    DataType cast_to = DataType::Null;
    std::vector<ExprPtr> args;
};

ExprPtr make_const(Value v, std::optional<DataType> type = std::nullopt) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::CONST;
    e->type = type.value_or(type_of(v));
    e->value = std::move(v);
    return e;
}

ExprPtr make_column(size_t idx, DataType type) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::COLUMN;
    e->column = idx;
    e->type = type;
    return e;
}

using RowFn = std::function<Value(size_t)>;

int64_t checked_int(const Value& v) {
    if (auto* i = std::get_if<int64_t>(&v)) return *i;
    if (auto* b = std::get_if<bool>(&v)) return *b;
    if (auto* d = std::get_if<double>(&v)) return static_cast<int64_t>(*d);
    throw ExecError(fmt::format("expected an integer, got '{}'", to_display_string(v)));
}

double as_double(const Value& v) {
    if (auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* t = std::get_if<Timestamp>(&v)) return static_cast<double>(t->micros);
    if (auto* iv = std::get_if<Interval>(&v)) return static_cast<double>(iv->micros);
    if (auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
    throw ExecError(fmt::format("expected a number, got '{}'", to_display_string(v)));
}

std::optional<bool> truth(const Value& v) {
    if (is_null(v)) return std::nullopt;
    if (auto* b = std::get_if<bool>(&v)) return *b;
    throw ExecError(fmt::format("expected a boolean, got '{}'", to_display_string(v)));
}

Value eval(const Expr& e, const RowFn& row, const ExecContext& ctx);

Value eval_binary(const Expr& e, const RowFn& row, const ExecContext& ctx) {
    if (e.bop == BinaryOp::AND || e.bop == BinaryOp::OR) {
        auto l = truth(eval(*e.args[0], row, ctx));
        bool is_and = e.bop == BinaryOp::AND;
        if (l && *l != is_and) return Value{!is_and};  // short circuit: false AND / true OR
        auto r = truth(eval(*e.args[1], row, ctx));
        if (r && *r != is_and) return Value{!is_and};
        if (!l || !r) return Value{};
        return Value{is_and};
    }
    Value l = eval(*e.args[0], row, ctx);
    Value r = eval(*e.args[1], row, ctx);
    if (is_null(l) || is_null(r)) return Value{};
    switch (e.bop) {
        case BinaryOp::EQ:
        case BinaryOp::NE:
        case BinaryOp::LT:
        case BinaryOp::LE:
        case BinaryOp::GT:
        case BinaryOp::GE: {
            auto c = compare_values(l, r);
            if (!c) {
                // string constants compared against typed columns
                if (std::holds_alternative<std::string>(r)) {
                    if (auto rr = cast_value(r, type_of(l))) c = compare_values(l, *rr);
                } else if (std::holds_alternative<std::string>(l)) {
                    if (auto ll = cast_value(l, type_of(r))) c = compare_values(*ll, r);
                }
            }
            if (!c) throw ExecError(fmt::format("cannot compare {} with {}", to_string(type_of(l)), to_string(type_of(r))));
            switch (e.bop) {
                case BinaryOp::EQ: return Value{*c == 0};
                case BinaryOp::NE: return Value{*c != 0};
                case BinaryOp::LT: return Value{*c < 0};
                case BinaryOp::LE: return Value{*c <= 0};
                case BinaryOp::GT: return Value{*c > 0};
                default: return Value{*c >= 0};
            }
        }
        case BinaryOp::CONCAT: return Value{to_display_string(l) + to_display_string(r)};
        default: break;
    }
    // arithmetic
    DataType lt = type_of(l), rt = type_of(r);
    if (lt == DataType::Timestamp || rt == DataType::Timestamp || lt == DataType::Interval || rt == DataType::Interval) {
        auto micros = [](const Value& v) -> int64_t {
            if (auto* t = std::get_if<Timestamp>(&v)) return t->micros;
            return std::get<Interval>(v).micros;
        };
        if (lt == DataType::Timestamp && rt == DataType::Timestamp && e.bop == BinaryOp::SUB) return Value{Interval{micros(l) - micros(r)}};
        if (lt == DataType::Timestamp && rt == DataType::Interval) {
            if (e.bop == BinaryOp::ADD) return Value{Timestamp{micros(l) + micros(r)}};
            if (e.bop == BinaryOp::SUB) return Value{Timestamp{micros(l) - micros(r)}};
        }
        if (lt == DataType::Interval && rt == DataType::Timestamp && e.bop == BinaryOp::ADD) return Value{Timestamp{micros(l) + micros(r)}};
        if (lt == DataType::Interval && rt == DataType::Interval) {
            if (e.bop == BinaryOp::ADD) return Value{Interval{micros(l) + micros(r)}};
            if (e.bop == BinaryOp::SUB) return Value{Interval{micros(l) - micros(r)}};
        }
        if (lt == DataType::Interval && is_numeric(rt)) {
            if (e.bop == BinaryOp::MUL) return Value{Interval{static_cast<int64_t>(std::llround(static_cast<double>(micros(l)) * as_double(r)))}};
            if (e.bop == BinaryOp::DIV) {
                if (as_double(r) == 0) throw ExecError("division by zero");
                return Value{Interval{static_cast<int64_t>(std::llround(static_cast<double>(micros(l)) / as_double(r)))}};
            }
        }
        if (is_numeric(lt) && rt == DataType::Interval && e.bop == BinaryOp::MUL) {
            return Value{Interval{static_cast<int64_t>(std::llround(as_double(l) * static_cast<double>(micros(r))))}};
        }
        throw ExecError(fmt::format("operator {} is not defined for {} and {}", to_string(e.bop), to_string(lt), to_string(rt)));
    }
    if (!is_numeric(lt) || !is_numeric(rt)) {
        throw ExecError(fmt::format("operator {} is not defined for {} and {}", to_string(e.bop), to_string(lt), to_string(rt)));
    }
    if (e.bop == BinaryOp::DIV) {
        double d = as_double(r);
        if (d == 0) throw ExecError("division by zero");
        return Value{as_double(l) / d};
    }
    if (lt == DataType::BigInt && rt == DataType::BigInt) {
        int64_t a = std::get<int64_t>(l), b = std::get<int64_t>(r);
        switch (e.bop) {
            case BinaryOp::ADD: return Value{a + b};
            case BinaryOp::SUB: return Value{a - b};
            case BinaryOp::MUL: return Value{a * b};
            case BinaryOp::MOD:
                if (b == 0) throw ExecError("division by zero");
                return Value{a % b};
            default: break;
        }
    }
    double a = as_double(l), b = as_double(r);
    switch (e.bop) {
        case BinaryOp::ADD: return Value{a + b};
        case BinaryOp::SUB: return Value{a - b};
        case BinaryOp::MUL: return Value{a * b};
        case BinaryOp::MOD:
            if (b == 0) throw ExecError("division by zero");
            return Value{std::fmod(a, b)};
        default: break;
    }
    throw ExecError(fmt::format("unsupported operator {}", to_string(e.bop)));
}

Value eval_function(const Expr& e, const RowFn& row, const ExecContext& ctx) {
    const std::string& fn = e.fn;
    if (fn == "now") return Value{ctx.now};
    if (fn == "coalesce") {
        for (auto& a : e.args) {
            Value v = eval(*a, row, ctx);
            if (!is_null(v)) return e.type == DataType::Null ? v : cast_value(v, e.type).value_or(v);
        }
        return Value{};
    }
    std::vector<Value> args;
    args.reserve(e.args.size());
    for (auto& a : e.args) args.push_back(eval(*a, row, ctx));
    if (fn == "least" || fn == "greatest") {
        std::optional<Value> best;
        for (auto& v : args) {
            if (is_null(v)) continue;
            if (!best) {
                best = v;
                continue;
            }
            auto c = compare_values(v, *best);
            if (!c) throw ExecError(fmt::format("{}: incomparable arguments", fn));
            if (fn == "least" ? *c < 0 : *c > 0) best = v;
        }
        if (!best) return Value{};
        return cast_value(*best, e.type).value_or(*best);
    }
    for (auto& v : args) {
        if (is_null(v)) return Value{};
    }
    if (fn == "date_trunc") {
        auto* unit_text = std::get_if<std::string>(&args[0]);
        if (!unit_text) throw ExecError("date_trunc: unit must be a string");
        auto unit = parse_time_unit(*unit_text);
        if (!unit) throw ExecError(fmt::format("date_trunc: unknown unit '{}'", *unit_text));
        auto ts = cast_value(args[1], DataType::Timestamp);
        if (!ts) throw ExecError("date_trunc: expected a timestamp");
        return Value{truncate_timestamp(std::get<Timestamp>(*ts), *unit)};
    }
    if (fn == "round") {
        if (std::holds_alternative<int64_t>(args[0])) return args[0];
        double x = as_double(args[0]);
        if (args.size() == 2) {
            double scale = std::pow(10.0, static_cast<double>(checked_int(args[1])));
            return Value{std::round(x * scale) / scale};
        }
        return Value{std::round(x)};
    }
    if (fn == "abs") {
        if (auto* i = std::get_if<int64_t>(&args[0])) return Value{*i < 0 ? -*i : *i};
        if (auto* iv = std::get_if<Interval>(&args[0])) return Value{Interval{iv->micros < 0 ? -iv->micros : iv->micros}};
        return Value{std::abs(as_double(args[0]))};
    }
    if (fn == "lower" || fn == "upper") {
        std::string s = to_display_string(args[0]);
        for (auto& c : s) c = static_cast<char>(fn == "lower" ? std::tolower(static_cast<unsigned char>(c)) : std::toupper(static_cast<unsigned char>(c)));
        return Value{s};
    }
    if (fn == "epoch_us") {
        if (auto* t = std::get_if<Timestamp>(&args[0])) return Value{t->micros};
        if (auto* iv = std::get_if<Interval>(&args[0])) return Value{iv->micros};
        return Value{checked_int(args[0])};
    }
    throw ExecError(fmt::format("unknown function '{}'", fn));
}

Value eval(const Expr& e, const RowFn& row, const ExecContext& ctx) {
    switch (e.kind) {
        case Expr::Kind::CONST: return e.value;
        case Expr::Kind::COLUMN: return row(e.column);
        case Expr::Kind::BINARY: return eval_binary(e, row, ctx);
        case Expr::Kind::UNARY: {
            Value v = eval(*e.args[0], row, ctx);
            switch (e.uop) {
                case UnaryOp::IS_NULL: return Value{is_null(v)};
                case UnaryOp::IS_NOT_NULL: return Value{!is_null(v)};
                case UnaryOp::NOT: {
                    auto t = truth(v);
                    return t ? Value{!*t} : Value{};
                }
                case UnaryOp::NEG:
                    if (is_null(v)) return v;
                    if (auto* i = std::get_if<int64_t>(&v)) return Value{-*i};
                    if (auto* d = std::get_if<double>(&v)) return Value{-*d};
                    if (auto* iv = std::get_if<Interval>(&v)) return Value{Interval{-iv->micros}};
                    throw ExecError(fmt::format("cannot negate {}", to_string(type_of(v))));
            }
            return Value{};
        }
        case Expr::Kind::FUNC: return eval_function(e, row, ctx);
        case Expr::Kind::CAST: {
            Value v = eval(*e.args[0], row, ctx);
            auto c = cast_value(v, e.cast_to);
            if (!c) throw ExecError(fmt::format("cannot cast '{}' to {}", to_display_string(v), to_string(e.cast_to)));
            return *c;
        }
    }
    return Value{};
}

// ---- binding ----

struct ScopeColumn {
    std::string qualifier;  // relation alias or name
    std::string name;       // as stored in the schema
    DataType type;
};

struct AggSpec {
    std::string fn;
    bool distinct = false;
    bool star = false;
    std::vector<ExprPtr> args;  // bound in row mode
    DataType type = DataType::Null;
};

/// Structural equality of two expressions in one arena, ignoring the root's attribute key.
bool expr_equal(const AstArena& a, uint32_t x, uint32_t y) {
    const AstNode& nx = a.node(x);
    const AstNode& ny = a.node(y);
    if (nx.node_type != ny.node_type || nx.children_count() != ny.children_count()) return false;
    switch (nx.node_type) {
        case NodeType::NAME:
            if (a.name_value(x) != a.name_value(y)) return false;
            break;
        case NodeType::STRING:
            if (a.string_value(x) != a.string_value(y)) return false;
            break;
        case NodeType::INTEGER:
        case NodeType::BOOL:
        case NodeType::ENUM:
            if (a.int_value(x) != a.int_value(y)) return false;
            break;
        case NodeType::FLOAT:
            if (a.double_value(x) != a.double_value(y)) return false;
            break;
        default: break;
    }
    for (uint32_t i = 0; i < nx.children_count(); ++i) {
        uint32_t cx = nx.children_begin() + i, cy = ny.children_begin() + i;
        if (a.node(cx).key() != a.node(cy).key() || !expr_equal(a, cx, cy)) return false;
    }
    return true;
}

DataType arith_type(BinaryOp op, DataType l, DataType r) {
    if (l == DataType::Null && r == DataType::Null) return DataType::Null;
    if (op == BinaryOp::DIV && (is_numeric(l) || l == DataType::Null) && (is_numeric(r) || r == DataType::Null)) return DataType::Double;
    if (l == DataType::Null) return op == BinaryOp::SUB && r == DataType::Timestamp ? DataType::Interval : r;
    if (r == DataType::Null) return op == BinaryOp::SUB && l == DataType::Timestamp ? DataType::Null : l;
    if (is_numeric(l) && is_numeric(r)) return (l == DataType::Double || r == DataType::Double) ? DataType::Double : DataType::BigInt;
    if (l == DataType::Timestamp && r == DataType::Timestamp && op == BinaryOp::SUB) return DataType::Interval;
    if (l == DataType::Timestamp && r == DataType::Interval && (op == BinaryOp::ADD || op == BinaryOp::SUB)) return DataType::Timestamp;
    if (l == DataType::Interval && r == DataType::Timestamp && op == BinaryOp::ADD) return DataType::Timestamp;
    if (l == DataType::Interval && r == DataType::Interval && (op == BinaryOp::ADD || op == BinaryOp::SUB)) return DataType::Interval;
    if (l == DataType::Interval && is_numeric(r) && (op == BinaryOp::MUL || op == BinaryOp::DIV)) return DataType::Interval;
    if (is_numeric(l) && r == DataType::Interval && op == BinaryOp::MUL) return DataType::Interval;
    throw ExecError(fmt::format("operator {} is not defined for {} and {}", to_string(op), to_string(l), to_string(r)));
}

bool comparable(DataType l, DataType r) {
    if (l == DataType::Null || r == DataType::Null || l == r) return true;
    if (is_numeric(l) && is_numeric(r)) return true;
    // string constants are coerced at evaluation time
    return l == DataType::Varchar || r == DataType::Varchar;
}

const std::vector<ScopeColumn> kNoScope;

class Binder {
public:
    Binder(const Catalog& catalog, const AstArena& arena, const std::vector<ScopeColumn>& scope)
        : catalog_(catalog), a_(arena), scope_(scope) {}
    /// The scope is held by reference and must outlive the binder.
    Binder(const Catalog&, const AstArena&, std::vector<ScopeColumn>&&) = delete;

    /// Row mode: column references address the FROM row.
    ExprPtr bind_row(uint32_t node) { return bind(node, false); }

    /// Grouped mode setup: group expressions, bound in row mode, become the first
    /// columns of the post-aggregation row.
    void set_groups(std::vector<uint32_t> group_nodes) {
        group_nodes_ = std::move(group_nodes);
        for (uint32_t g : group_nodes_) group_exprs_.push_back(bind_row(g));
    }
    ExprPtr bind_grouped(uint32_t node) { return bind(node, true); }

    const std::vector<ExprPtr>& group_exprs() const { return group_exprs_; }
    const std::vector<AggSpec>& aggregates() const { return aggs_; }
    bool contains_aggregate(uint32_t node) const {
        const AstNode& n = a_.node(node);
        if (n.node_type == NodeType::EXPR_FUNCTION && is_aggregate_name(a_.name_value(*a_.find_child(node, AttrKey::FUNCTION)))) return true;
        for (uint32_t i = 0; i < n.children_count(); ++i) {
            if (contains_aggregate(n.children_begin() + i)) return true;
        }
        return false;
    }

    /// Resolves a column reference to a scope index; nullopt when it names no column.
    std::optional<size_t> resolve_column(uint32_t node) const {
        auto q = a_.find_child(node, AttrKey::QUALIFIER);
        std::string name = a_.name_value(*a_.find_child(node, AttrKey::NAME));
        std::optional<size_t> found;
        for (size_t i = 0; i < scope_.size(); ++i) {
            if (!iequals(scope_[i].name, name)) continue;
            if (q && !iequals(scope_[i].qualifier, a_.name_value(*q))) continue;
            if (found) throw ExecError(fmt::format("column reference '{}' is ambiguous", name));
            found = i;
        }
        return found;
    }

private:
    ExprPtr bind(uint32_t node, bool grouped) {
        if (grouped) {
            for (size_t g = 0; g < group_nodes_.size(); ++g) {
                if (expr_equal(a_, node, group_nodes_[g])) return make_column(g, group_exprs_[g]->type);
            }
        }
        const AstNode& n = a_.node(node);
        switch (n.node_type) {
            case NodeType::INTEGER: return make_const(Value{a_.int_value(node)});
            case NodeType::FLOAT: return make_const(Value{a_.double_value(node)});
            case NodeType::STRING: return make_const(Value{a_.string_value(node)});
            case NodeType::BOOL: return make_const(Value{a_.int_value(node) != 0});
            case NodeType::NULL_LITERAL: return make_const(Value{});
            case NodeType::LIT_TIMESTAMP: {
                auto text = a_.string_value(*a_.find_child(node, AttrKey::VALUE));
                auto ts = parse_timestamp(text);
                if (!ts) throw ExecError(fmt::format("invalid timestamp literal '{}'", text));
                return make_const(Value{*ts});
            }
            case NodeType::LIT_INTERVAL: {
                auto text = a_.string_value(*a_.find_child(node, AttrKey::VALUE));
                std::optional<TimeUnit> unit;
                if (auto u = a_.find_child(node, AttrKey::UNIT)) unit = static_cast<TimeUnit>(a_.int_value(*u));
                auto iv = parse_interval(text, unit);
                if (!iv) throw ExecError(fmt::format("invalid interval literal '{}'", text));
                return make_const(Value{*iv});
            }
            case NodeType::COLUMN_REF: {
                auto q = a_.find_child(node, AttrKey::QUALIFIER);
                std::string name = a_.name_value(*a_.find_child(node, AttrKey::NAME));
                bool qualifier_is_relation = false;
                if (q) {
                    std::string qual = a_.name_value(*q);
                    for (auto& c : scope_) qualifier_is_relation |= iequals(c.qualifier, qual);
                }
                if (q && !qualifier_is_relation && a_.name_value(*q) == "main") {
                    auto type = catalog_.input_type(name);
                    if (!type) throw ExecError(fmt::format("unknown input 'main.{}'", name));
                    return make_const(catalog_.input(name), *type);
                }
                auto idx = resolve_column(node);
                if (!idx) throw ExecError(fmt::format("column '{}' does not exist", std::string(a_.node_text(node))));
                if (grouped) throw ExecError(fmt::format("column '{}' must appear in GROUP BY or be used in an aggregate", std::string(a_.node_text(node))));
                return make_column(*idx, scope_[*idx].type);
            }
            case NodeType::EXPR_BINARY: {
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::BINARY;
                e->bop = static_cast<BinaryOp>(a_.int_value(*a_.find_child(node, AttrKey::OPERATOR)));
                e->args = {bind(*a_.find_child(node, AttrKey::LEFT), grouped), bind(*a_.find_child(node, AttrKey::RIGHT), grouped)};
                DataType l = e->args[0]->type, r = e->args[1]->type;
                switch (e->bop) {
                    case BinaryOp::AND:
                    case BinaryOp::OR:
                        for (auto t : {l, r}) {
                            if (t != DataType::Bool && t != DataType::Null) throw ExecError(fmt::format("{} expects booleans", to_string(e->bop)));
                        }
                        e->type = DataType::Bool;
                        break;
                    case BinaryOp::EQ:
                    case BinaryOp::NE:
                    case BinaryOp::LT:
                    case BinaryOp::LE:
                    case BinaryOp::GT:
                    case BinaryOp::GE:
                        if (!comparable(l, r)) throw ExecError(fmt::format("cannot compare {} with {}", to_string(l), to_string(r)));
                        e->type = DataType::Bool;
                        break;
                    case BinaryOp::CONCAT: e->type = DataType::Varchar; break;
                    default: e->type = arith_type(e->bop, l, r); break;
                }
                return e;
            }
            case NodeType::EXPR_UNARY: {
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::UNARY;
                e->uop = static_cast<UnaryOp>(a_.int_value(*a_.find_child(node, AttrKey::OPERATOR)));
                uint32_t arg = *a_.find_child(node, AttrKey::EXPR);
                // `x IS NULL` with an unqualified input name tests the input, not a column of that name
                if ((e->uop == UnaryOp::IS_NULL || e->uop == UnaryOp::IS_NOT_NULL) && a_.node(arg).node_type == NodeType::COLUMN_REF &&
                    !a_.find_child(arg, AttrKey::QUALIFIER)) {
                    std::string name = a_.name_value(*a_.find_child(arg, AttrKey::NAME));
                    if (auto type = catalog_.input_type(name)) {
                        e->args = {make_const(catalog_.input(name), *type)};
                        e->type = DataType::Bool;
                        return e;
                    }
                }
                e->args = {bind(arg, grouped)};
                DataType t = e->args[0]->type;
                if (e->uop == UnaryOp::NEG) {
                    if (!is_numeric(t) && t != DataType::Interval && t != DataType::Null) throw ExecError(fmt::format("cannot negate {}", to_string(t)));
                    e->type = t;
                } else {
                    if (e->uop == UnaryOp::NOT && t != DataType::Bool && t != DataType::Null) throw ExecError("NOT expects a boolean");
                    e->type = DataType::Bool;
                }
                return e;
            }
            case NodeType::EXPR_CAST: {
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::CAST;
                e->cast_to = static_cast<DataType>(a_.int_value(*a_.find_child(node, AttrKey::TYPE)));
                e->type = e->cast_to;
                e->args = {bind(*a_.find_child(node, AttrKey::EXPR), grouped)};
                return e;
            }
            case NodeType::EXPR_FUNCTION: return bind_function(node, grouped);
            case NodeType::STAR: throw ExecError("'*' is only allowed in the select list and in count(*)");
            default: break;
        }
        throw ExecError(fmt::format("unsupported expression '{}'", std::string(a_.node_text(node))));
    }

    ExprPtr bind_function(uint32_t node, bool grouped) {
        std::string fn = a_.name_value(*a_.find_child(node, AttrKey::FUNCTION));
        bool distinct = a_.find_child(node, AttrKey::DISTINCT).has_value();
        uint32_t args_node = *a_.find_child(node, AttrKey::ARGS);
        const AstNode& an = a_.node(args_node);
        std::vector<uint32_t> arg_nodes;
        for (uint32_t i = 0; i < an.children_count(); ++i) arg_nodes.push_back(an.children_begin() + i);
        bool star = arg_nodes.size() == 1 && a_.node(arg_nodes[0]).node_type == NodeType::STAR;

        if (is_aggregate_name(fn)) {
            if (!grouped) throw ExecError(fmt::format("aggregate {}() is not allowed here", fn));
            AggSpec spec;
            spec.fn = fn;
            spec.distinct = distinct;
            spec.star = star;
            if (star && fn != "count") throw ExecError(fmt::format("{}(*) is not supported", fn));
            if (!star) {
                for (uint32_t arg : arg_nodes) {
                    if (contains_aggregate(arg)) throw ExecError("aggregate calls cannot be nested");
                    spec.args.push_back(bind_row(arg));
                }
            }
            size_t want = (fn == "arg_min" || fn == "arg_max") ? 2 : 1;
            if (!star && spec.args.size() != want) throw ExecError(fmt::format("{}() expects {} argument(s)", fn, want));
            DataType t0 = spec.args.empty() ? DataType::Null : spec.args[0]->type;
            if (fn == "count") {
                spec.type = DataType::BigInt;
            } else if (fn == "sum") {
                if (t0 == DataType::Bool || t0 == DataType::Varchar || t0 == DataType::Timestamp) throw ExecError(fmt::format("sum() is not defined for {}", to_string(t0)));
                spec.type = t0 == DataType::Null ? DataType::BigInt : t0;
            } else if (fn == "avg") {
                if (!is_numeric(t0) && t0 != DataType::Null) throw ExecError(fmt::format("avg() is not defined for {}", to_string(t0)));
                spec.type = DataType::Double;
            } else {
                spec.type = t0;
            }
            // an aggregate may repeat in the select list; evaluate it once
            for (size_t i = 0; i < aggs_.size(); ++i) {
                if (agg_nodes_[i] != node && expr_equal(a_, agg_nodes_[i], node)) return make_column(group_nodes_.size() + i, aggs_[i].type);
            }
            aggs_.push_back(std::move(spec));
            agg_nodes_.push_back(node);
            return make_column(group_nodes_.size() + aggs_.size() - 1, aggs_.back().type);
        }
        if (star) throw ExecError(fmt::format("{}(*) is not supported", fn));
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::FUNC;
        e->fn = fn;
        for (uint32_t arg : arg_nodes) e->args.push_back(bind(arg, grouped));
        auto arity = [&](size_t lo, size_t hi) {
            if (e->args.size() < lo || e->args.size() > hi) throw ExecError(fmt::format("wrong number of arguments for {}()", fn));
        };
        auto t = [&](size_t i) { return e->args[i]->type; };
        if (fn == "now") {
            arity(0, 0);
            e->type = DataType::Timestamp;
        } else if (fn == "date_trunc") {
            arity(2, 2);
            if (t(1) != DataType::Timestamp && t(1) != DataType::Null && t(1) != DataType::Varchar) throw ExecError("date_trunc expects a timestamp");
            e->type = DataType::Timestamp;
        } else if (fn == "round") {
            arity(1, 2);
            if (!is_numeric(t(0)) && t(0) != DataType::Null) throw ExecError("round expects a number");
            e->type = t(0) == DataType::BigInt ? DataType::BigInt : DataType::Double;
        } else if (fn == "abs") {
            arity(1, 1);
            e->type = t(0);
        } else if (fn == "lower" || fn == "upper") {
            arity(1, 1);
            e->type = DataType::Varchar;
        } else if (fn == "epoch_us") {
            arity(1, 1);
            e->type = DataType::BigInt;
        } else if (fn == "coalesce" || fn == "least" || fn == "greatest") {
            arity(1, SIZE_MAX);
            DataType out = DataType::Null;
            for (auto& arg : e->args) {
                DataType at = arg->type;
                if (at == DataType::Null) continue;
                if (out == DataType::Null) {
                    out = at;
                } else if (is_numeric(out) && is_numeric(at)) {
                    if (at == DataType::Double) out = DataType::Double;
                } else if (out != at) {
                    throw ExecError(fmt::format("{}() arguments have incompatible types", fn));
                }
            }
            e->type = out;
        } else {
            throw ExecError(fmt::format("unknown function '{}'", fn));
        }
        return e;
    }

    const Catalog& catalog_;
    const AstArena& a_;
    const std::vector<ScopeColumn>& scope_;
    std::vector<uint32_t> group_nodes_;
    std::vector<ExprPtr> group_exprs_;
    std::vector<AggSpec> aggs_;
    std::vector<uint32_t> agg_nodes_;
};

// ---- aggregation ----

struct KeyHash {
    size_t operator()(const std::vector<Value>& k) const {
        size_t h = 0;
        for (auto& v : k) h = h * 1000003 ^ hash_value(v);
        return h;
    }
};

struct KeyEq {
    bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
        for (size_t i = 0; i < a.size(); ++i) {
            if (!values_equal(a[i], b[i])) return false;
        }
        return true;
    }
};

Value compute_aggregate(const AggSpec& spec, const Relation& input, const std::vector<uint32_t>& rows, const ExecContext& ctx) {
    auto row_fn = [&](uint32_t r) { return RowFn([&input, r](size_t c) { return input.columns[c].get(r); }); };
    if (spec.star) return Value{static_cast<int64_t>(rows.size())};
    // argument columns
    std::vector<Column> cols;
    for (auto& arg : spec.args) {
        Column c(arg->type == DataType::Null ? DataType::Varchar : arg->type);
        for (uint32_t r : rows) c.append(eval(*arg, row_fn(r), ctx));
        cols.push_back(std::move(c));
    }
    if (spec.fn == "arg_min") return arg_min(cols[0], cols[1]);
    if (spec.fn == "arg_max") return arg_max(cols[0], cols[1]);
    std::vector<Value> vals;
    for (size_t i = 0; i < cols[0].size(); ++i) {
        if (!cols[0].is_null(i)) vals.push_back(cols[0].get(i));
    }
    if (spec.distinct) {
        std::vector<Value> uniq;
        std::unordered_map<std::vector<Value>, bool, KeyHash, KeyEq> seen;
        for (auto& v : vals) {
            if (seen.emplace(std::vector<Value>{v}, true).second) uniq.push_back(v);
        }
        vals = std::move(uniq);
    }
    if (spec.fn == "count") return Value{static_cast<int64_t>(vals.size())};
    if (vals.empty()) return Value{};
    if (spec.fn == "min" || spec.fn == "max") {
        Value best = vals[0];
        for (auto& v : vals) {
            auto c = total_order(v, best);
            if (spec.fn == "min" ? c < 0 : c > 0) best = v;
        }
        return best;
    }
    if (spec.fn == "sum") {
        if (spec.type == DataType::BigInt) {
            int64_t s = 0;
            for (auto& v : vals) s += std::get<int64_t>(v);
            return Value{s};
        }
        if (spec.type == DataType::Interval) {
            int64_t s = 0;
            for (auto& v : vals) s += std::get<Interval>(v).micros;
            return Value{Interval{s}};
        }
        double s = 0;
        for (auto& v : vals) s += as_double(v);
        return Value{s};
    }
    if (spec.fn == "avg") {
        double s = 0;
        for (auto& v : vals) s += as_double(v);
        return Value{s / static_cast<double>(vals.size())};
    }
    throw ExecError(fmt::format("unknown aggregate '{}'", spec.fn));
}

// ---- FROM ----

struct FromResult {
    Relation rel;
    std::vector<ScopeColumn> scope;
};

Relation eval_select_impl(const Catalog& catalog, const AstArena& a, uint32_t select, const ExecContext& ctx);

Relation scan_entry(const Catalog& catalog, const std::string& name, const ExecContext& ctx, const ScanOptions* pushdown) {
    auto entry = catalog.lookup(name);
    if (!entry) throw ExecError(fmt::format("relation '{}' does not exist", name));
    switch (entry->kind) {
        case CatalogEntry::Kind::TABLE: return *entry->table;
        case CatalogEntry::Kind::VIEW: {
            if (ctx.depth > 32) throw ExecError(fmt::format("view '{}' nests too deeply", name));
            ExecContext inner = ctx;
            ++inner.depth;
            try {
                return eval_select_impl(catalog, *entry->view.arena, entry->view.select, inner);
            } catch (const ExecError& e) {
                throw ExecError(fmt::format("view '{}' is blocked: {}", name, e.what()));
            }
        }
        case CatalogEntry::Kind::LAZY: return entry->lazy->scan(pushdown ? *pushdown : ScanOptions{});
    }
    return {};
}

FromResult cross_product(std::vector<FromResult> items) {
    FromResult out;
    if (items.empty()) {
        // no FROM: one row without columns
        out.rel.row_count = 1;
        return out;
    }
    out = std::move(items[0]);
    for (size_t k = 1; k < items.size(); ++k) {
        auto& rhs = items[k];
        std::vector<uint32_t> li, ri;
        li.reserve(out.rel.row_count * rhs.rel.row_count);
        for (uint32_t i = 0; i < out.rel.row_count; ++i) {
            for (uint32_t j = 0; j < rhs.rel.row_count; ++j) {
                li.push_back(i);
                ri.push_back(j);
            }
        }
        Relation joined = out.rel.gather(li);
        Relation right = rhs.rel.gather(ri);
        for (size_t c = 0; c < right.columns.size(); ++c) {
            joined.schema.push_back(right.schema[c]);
            joined.columns.push_back(std::move(right.columns[c]));
        }
        joined.row_count = li.size();
        out.rel = std::move(joined);
        out.scope.insert(out.scope.end(), rhs.scope.begin(), rhs.scope.end());
    }
    return out;
}

std::optional<CompareOp> to_compare(BinaryOp op, bool flipped) {
    switch (op) {
        case BinaryOp::EQ: return CompareOp::EQ;
        case BinaryOp::LT: return flipped ? CompareOp::GT : CompareOp::LT;
        case BinaryOp::LE: return flipped ? CompareOp::GE : CompareOp::LE;
        case BinaryOp::GT: return flipped ? CompareOp::LT : CompareOp::GT;
        case BinaryOp::GE: return flipped ? CompareOp::LE : CompareOp::GE;
        default: return std::nullopt;
    }
}

bool references_columns(const AstArena& a, uint32_t node) {
    const AstNode& n = a.node(node);
    if (n.node_type == NodeType::COLUMN_REF) {
        auto q = a.find_child(node, AttrKey::QUALIFIER);
        return !(q && a.name_value(*q) == "main");
    }
    for (uint32_t i = 0; i < n.children_count(); ++i) {
        if (references_columns(a, n.children_begin() + i)) return true;
    }
    return false;
}

void collect_conjuncts(const AstArena& a, uint32_t node, std::vector<uint32_t>& out) {
    const AstNode& n = a.node(node);
    if (n.node_type == NodeType::EXPR_BINARY && static_cast<BinaryOp>(a.int_value(*a.find_child(node, AttrKey::OPERATOR))) == BinaryOp::AND) {
        collect_conjuncts(a, *a.find_child(node, AttrKey::LEFT), out);
        collect_conjuncts(a, *a.find_child(node, AttrKey::RIGHT), out);
        return;
    }
    out.push_back(node);
}

void collect_column_names(const AstArena& a, uint32_t node, std::vector<std::string>& out, bool& star) {
    const AstNode& n = a.node(node);
    if (n.node_type == NodeType::COLUMN_REF) {
        auto q = a.find_child(node, AttrKey::QUALIFIER);
        if (q && a.name_value(*q) == "main") return;
        std::string name = a.name_value(*a.find_child(node, AttrKey::NAME));
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
        return;
    }
    if (n.node_type == NodeType::STAR && n.key() == AttrKey::EXPR) star = true;
    for (uint32_t i = 0; i < n.children_count(); ++i) collect_column_names(a, n.children_begin() + i, out, star);
}

std::vector<uint32_t> array_items(const AstArena& a, std::optional<uint32_t> node) {
    std::vector<uint32_t> out;
    if (!node) return out;
    const AstNode& n = a.node(*node);
    for (uint32_t i = 0; i < n.children_count(); ++i) out.push_back(n.children_begin() + i);
    return out;
}

}  // namespace

std::optional<ScanPushdown> analyze_scan_pushdown(const AstArena& a, uint32_t select) {
    auto from = array_items(a, a.find_child(select, AttrKey::FROM));
    if (from.size() != 1 || a.node(from[0]).node_type != NodeType::REL_NAME) return std::nullopt;
    ScanPushdown out;
    out.relation = a.name_value(*a.find_child(from[0], AttrKey::NAME));
    std::vector<std::string> names;
    bool star = false;
    const AstNode& s = a.node(select);
    for (uint32_t i = 0; i < s.children_count(); ++i) {
        uint32_t c = s.children_begin() + i;
        if (a.node(c).key() == AttrKey::FROM) continue;
        collect_column_names(a, c, names, star);
    }
    if (!star) out.projection = names;
    if (auto where = a.find_child(select, AttrKey::WHERE)) {
        std::vector<uint32_t> conjuncts;
        collect_conjuncts(a, *where, conjuncts);
        for (uint32_t c : conjuncts) {
            const AstNode& n = a.node(c);
            if (n.node_type != NodeType::EXPR_BINARY) continue;
            auto op = static_cast<BinaryOp>(a.int_value(*a.find_child(c, AttrKey::OPERATOR)));
            uint32_t l = *a.find_child(c, AttrKey::LEFT), r = *a.find_child(c, AttrKey::RIGHT);
            auto try_side = [&](uint32_t col, uint32_t other, bool flipped) {
                if (a.node(col).node_type != NodeType::COLUMN_REF || references_columns(a, other)) return false;
                auto q = a.find_child(col, AttrKey::QUALIFIER);
                if (q && a.name_value(*q) == "main") return false;
                auto cmp = to_compare(op, flipped);
                if (!cmp) return false;
                out.predicates.push_back({a.name_value(*a.find_child(col, AttrKey::NAME)), *cmp, other});
                return true;
            };
            if (!try_side(l, r, false)) try_side(r, l, true);
        }
    }
    return out;
}

namespace {

FromResult eval_from(const Catalog& catalog, const AstArena& a, uint32_t select, const ExecContext& ctx) {
    auto items = array_items(a, a.find_child(select, AttrKey::FROM));
    std::vector<FromResult> parts;
    for (uint32_t item : items) {
        FromResult part;
        std::string qualifier;
        const AstNode& n = a.node(item);
        if (n.node_type == NodeType::REL_NAME) {
            std::string name = a.name_value(*a.find_child(item, AttrKey::NAME));
            qualifier = name;
            std::optional<ScanOptions> opts;
            auto entry = catalog.lookup(name);
            if (entry && entry->kind == CatalogEntry::Kind::LAZY && ctx.pushdown && items.size() == 1) {
                if (auto pd = analyze_scan_pushdown(a, select)) {
                    ScanOptions o;
                    const auto& schema = entry->lazy->schema();
                    auto schema_name = [&](const std::string& col) -> std::optional<std::string> {
                        for (auto& d : schema) {
                            if (iequals(d.name, col)) return d.name;
                        }
                        return std::nullopt;
                    };
                    if (pd->projection) {
                        o.projection.emplace();
                        // keep schema order; names that are not columns are aliases or inputs
                        for (auto& d : schema) {
                            for (auto& want : *pd->projection) {
                                if (iequals(d.name, want)) {
                                    o.projection->push_back(d.name);
                                    break;
                                }
                            }
                        }
                    }
                    Binder consts(catalog, a, kNoScope);
                    for (auto& p : pd->predicates) {
                        auto col = schema_name(p.column);
                        if (!col) continue;
                        Value v = eval(*consts.bind_row(p.expr), [](size_t) { return Value{}; }, ctx);
                        if (is_null(v)) {
                            // `col <op> NULL` is never true; an impossible predicate prunes everything
                            o.predicates.push_back({*col, p.op, Value{}});
                            continue;
                        }
                        // only push values that compare natively against the column
                        DataType ct = std::find_if(schema.begin(), schema.end(), [&](auto& d) { return d.name == *col; })->type;
                        auto cast = cast_value(v, ct);
                        if (!cast || (!(is_numeric(ct) && is_numeric(type_of(v))) && type_of(v) != ct)) {
                            if (!cast || type_of(v) != DataType::Varchar) continue;
                        }
                        o.predicates.push_back({*col, p.op, is_numeric(ct) && is_numeric(type_of(v)) ? v : *cast});
                    }
                    opts = std::move(o);
                }
            }
            part.rel = scan_entry(catalog, name, ctx, opts ? &*opts : nullptr);
            if (auto alias = a.find_child(item, AttrKey::ALIAS)) qualifier = a.name_value(*alias);
        } else {
            ExecContext inner = ctx;
            ++inner.depth;
            part.rel = eval_select_impl(catalog, a, *a.find_child(item, AttrKey::QUERY), inner);
            if (auto alias = a.find_child(item, AttrKey::ALIAS)) qualifier = a.name_value(*alias);
        }
        for (auto& def : part.rel.schema) part.scope.push_back({qualifier, def.name, def.type});
        parts.push_back(std::move(part));
    }
    return cross_product(std::move(parts));
}

std::string output_name(const AstArena& a, uint32_t target) {
    if (auto alias = a.find_child(target, AttrKey::ALIAS)) return a.name_value(*alias);
    uint32_t expr = *a.find_child(target, AttrKey::EXPR);
    const AstNode& n = a.node(expr);
    if (n.node_type == NodeType::COLUMN_REF) return std::string(a.node_text(*a.find_child(expr, AttrKey::NAME)));
    if (n.node_type == NodeType::EXPR_FUNCTION) return a.name_value(*a.find_child(expr, AttrKey::FUNCTION));
    if (n.node_type == NodeType::EXPR_CAST) {
        uint32_t inner = *a.find_child(expr, AttrKey::EXPR);
        if (a.node(inner).node_type == NodeType::COLUMN_REF) return std::string(a.node_text(*a.find_child(inner, AttrKey::NAME)));
    }
    return "?column?";
}

struct OrderKey {
    std::optional<size_t> output;  // index into the output columns
    ExprPtr expr;                  // hidden key otherwise
    bool desc = false;
    bool nulls_first = false;
};

Relation eval_select_impl(const Catalog& catalog, const AstArena& a, uint32_t select, const ExecContext& ctx) {
    FromResult from = eval_from(catalog, a, select, ctx);
    const Relation& input = from.rel;
    Binder binder(catalog, a, from.scope);
    auto row_of = [&input](uint32_t r) { return RowFn([&input, r](size_t c) { return input.columns[c].get(r); }); };

    // WHERE
    std::vector<uint32_t> rows;
    rows.reserve(input.row_count);
    if (auto where = a.find_child(select, AttrKey::WHERE)) {
        if (binder.contains_aggregate(*where)) throw ExecError("aggregates are not allowed in WHERE");
        auto pred = binder.bind_row(*where);
        if (pred->type != DataType::Bool && pred->type != DataType::Null) throw ExecError("WHERE expects a boolean expression");
        for (uint32_t r = 0; r < input.row_count; ++r) {
            auto t = truth(eval(*pred, row_of(r), ctx));
            if (t && *t) rows.push_back(r);
        }
    } else {
        for (uint32_t r = 0; r < input.row_count; ++r) rows.push_back(r);
    }

    // select list: expand stars
    struct Target {
        std::string name;
        std::optional<uint32_t> node;     // expression node
        std::optional<size_t> star_col;   // expanded `*` column
    };
    std::vector<Target> targets;
    for (uint32_t t : array_items(a, a.find_child(select, AttrKey::TARGETS))) {
        uint32_t expr = *a.find_child(t, AttrKey::EXPR);
        if (a.node(expr).node_type == NodeType::STAR) {
            for (size_t c = 0; c < from.scope.size(); ++c) targets.push_back({from.scope[c].name, std::nullopt, c});
        } else {
            targets.push_back({output_name(a, t), expr, std::nullopt});
        }
    }
    auto target_alias_node = [&](const std::string& name) -> std::optional<uint32_t> {
        for (uint32_t t : array_items(a, a.find_child(select, AttrKey::TARGETS))) {
            auto alias = a.find_child(t, AttrKey::ALIAS);
            if (alias && a.name_value(*alias) == name) return *a.find_child(t, AttrKey::EXPR);
        }
        return std::nullopt;
    };

    auto group_items = array_items(a, a.find_child(select, AttrKey::GROUP_BY));
    bool grouped = !group_items.empty();
    for (auto& t : targets) grouped |= t.node && binder.contains_aggregate(*t.node);
    for (uint32_t o : array_items(a, a.find_child(select, AttrKey::ORDER_BY))) grouped |= binder.contains_aggregate(*a.find_child(o, AttrKey::EXPR));

    // output column expressions
    std::vector<ExprPtr> out_exprs;
    if (grouped) {
        std::vector<uint32_t> group_nodes;
        for (uint32_t g : group_items) {
            const AstNode& gn = a.node(g);
            if (gn.node_type == NodeType::INTEGER) {
                int64_t ord = a.int_value(g);
                if (ord < 1 || static_cast<size_t>(ord) > targets.size() || !targets[ord - 1].node) throw ExecError(fmt::format("GROUP BY position {} is not in the select list", ord));
                group_nodes.push_back(*targets[ord - 1].node);
                continue;
            }
            if (gn.node_type == NodeType::COLUMN_REF && !a.find_child(g, AttrKey::QUALIFIER) && !binder.resolve_column(g)) {
                if (auto alias = target_alias_node(a.name_value(*a.find_child(g, AttrKey::NAME)))) {
                    group_nodes.push_back(*alias);
                    continue;
                }
            }
            group_nodes.push_back(g);
        }
        binder.set_groups(group_nodes);
        for (auto& t : targets) {
            if (t.star_col) throw ExecError("'*' cannot be combined with GROUP BY or aggregates");
            out_exprs.push_back(binder.bind_grouped(*t.node));
        }
    } else {
        for (auto& t : targets) out_exprs.push_back(t.star_col ? make_column(*t.star_col, from.scope[*t.star_col].type) : binder.bind_row(*t.node));
    }

    // ORDER BY
    std::vector<OrderKey> order;
    for (uint32_t o : array_items(a, a.find_child(select, AttrKey::ORDER_BY))) {
        OrderKey key;
        uint32_t expr = *a.find_child(o, AttrKey::EXPR);
        if (auto d = a.find_child(o, AttrKey::DIRECTION)) key.desc = a.int_value(*d) == 1;
        key.nulls_first = key.desc;
        if (auto nf = a.find_child(o, AttrKey::NULLS_FIRST)) key.nulls_first = a.int_value(*nf) != 0;
        const AstNode& en = a.node(expr);
        if (en.node_type == NodeType::INTEGER) {
            int64_t ord = a.int_value(expr);
            if (ord < 1 || static_cast<size_t>(ord) > targets.size()) throw ExecError(fmt::format("ORDER BY position {} is not in the select list", ord));
            key.output = static_cast<size_t>(ord - 1);
        } else if (en.node_type == NodeType::COLUMN_REF && !a.find_child(expr, AttrKey::QUALIFIER)) {
            std::string name = a.name_value(*a.find_child(expr, AttrKey::NAME));
            for (size_t i = 0; i < targets.size(); ++i) {
                if (iequals(targets[i].name, name)) {
                    key.output = i;
                    break;
                }
            }
        }
        if (!key.output) key.expr = grouped ? binder.bind_grouped(expr) : binder.bind_row(expr);
        order.push_back(std::move(key));
    }

    // evaluate rows: each produced row holds output values plus hidden order keys
    std::vector<std::vector<Value>> produced;
    auto emit = [&](const RowFn& fn) {
        std::vector<Value> row;
        row.reserve(out_exprs.size() + order.size());
        for (auto& e : out_exprs) row.push_back(eval(*e, fn, ctx));
        for (auto& k : order) row.push_back(k.expr ? eval(*k.expr, fn, ctx) : Value{});
        produced.push_back(std::move(row));
    };
    if (grouped) {
        const auto& gexprs = binder.group_exprs();
        std::unordered_map<std::vector<Value>, size_t, KeyHash, KeyEq> index;
        std::vector<std::vector<Value>> keys;
        std::vector<std::vector<uint32_t>> members;
        for (uint32_t r : rows) {
            std::vector<Value> k;
            k.reserve(gexprs.size());
            for (auto& g : gexprs) k.push_back(eval(*g, row_of(r), ctx));
            auto [it, inserted] = index.emplace(k, keys.size());
            if (inserted) {
                keys.push_back(std::move(k));
                members.emplace_back();
            }
            members[it->second].push_back(r);
        }
        // aggregates without GROUP BY produce exactly one row
        if (group_items.empty() && keys.empty()) {
            keys.emplace_back();
            members.emplace_back();
        }
        const auto& aggs = binder.aggregates();
        for (size_t g = 0; g < keys.size(); ++g) {
            std::vector<Value> post = keys[g];
            for (auto& spec : aggs) post.push_back(compute_aggregate(spec, input, members[g], ctx));
            emit([&post](size_t c) { return post[c]; });
        }
    } else {
        for (uint32_t r : rows) emit(row_of(r));
    }

    if (!order.empty()) {
        const size_t nout = out_exprs.size();
        std::stable_sort(produced.begin(), produced.end(), [&](const std::vector<Value>& x, const std::vector<Value>& y) {
            for (size_t i = 0; i < order.size(); ++i) {
                size_t col = order[i].output ? *order[i].output : nout + i;
                const Value& l = x[col];
                const Value& r = y[col];
                bool ln = is_null(l), rn = is_null(r);
                if (ln || rn) {
                    if (ln && rn) continue;
                    return order[i].nulls_first ? ln : rn;
                }
                auto c = total_order(l, r);
                if (c == 0) continue;
                return order[i].desc ? c > 0 : c < 0;
            }
            return false;
        });
    }

    // DISTINCT keeps the first occurrence
    if (a.find_child(select, AttrKey::DISTINCT)) {
        std::unordered_map<std::vector<Value>, bool, KeyHash, KeyEq> seen;
        std::vector<std::vector<Value>> kept;
        for (auto& row : produced) {
            std::vector<Value> key(row.begin(), row.begin() + static_cast<ptrdiff_t>(out_exprs.size()));
            if (seen.emplace(std::move(key), true).second) kept.push_back(std::move(row));
        }
        produced = std::move(kept);
    }

    // OFFSET / LIMIT
    auto const_int = [&](AttrKey key) -> std::optional<int64_t> {
        auto node = a.find_child(select, key);
        if (!node) return std::nullopt;
        Binder consts(catalog, a, kNoScope);
        Value v = eval(*consts.bind_row(*node), [](size_t) { return Value{}; }, ctx);
        if (is_null(v)) return std::nullopt;
        int64_t n = checked_int(v);
        if (n < 0) throw ExecError(fmt::format("{} must not be negative", to_string(key)));
        return n;
    };
    size_t offset = static_cast<size_t>(const_int(AttrKey::OFFSET).value_or(0));
    auto limit = const_int(AttrKey::LIMIT);
    size_t begin = std::min(offset, produced.size());
    size_t end = limit ? std::min(produced.size(), begin + static_cast<size_t>(*limit)) : produced.size();

    // build the output relation with unique column names
    Relation out;
    std::map<std::string, int> used;
    for (size_t i = 0; i < targets.size(); ++i) {
        std::string name = targets[i].name;
        std::string lowered = name;
        std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
        int n = used[lowered]++;
        if (n > 0) name = fmt::format("{}_{}", name, n);
        DataType type = out_exprs[i]->type == DataType::Null ? DataType::Varchar : out_exprs[i]->type;
        out.schema.push_back({name, type});
        out.columns.emplace_back(type);
        out.columns.back().reserve(end - begin);
    }
    for (size_t r = begin; r < end; ++r) {
        for (size_t c = 0; c < targets.size(); ++c) out.columns[c].append(produced[r][c]);
    }
    out.row_count = end - begin;
    return out;
}

}  // namespace

Relation eval_select(const Catalog& catalog, const AstArena& arena, uint32_t select, const ExecContext& ctx) {
    return eval_select_impl(catalog, arena, select, ctx);
}

Relation read_relation(const Catalog& catalog, const std::string& name, const ExecContext& ctx) { return scan_entry(catalog, name, ctx, nullptr); }

Relation execute_sql(const Catalog& catalog, std::string sql, const ExecContext& ctx) {
    auto script = parse_script(std::move(sql));
    if (!script.errors.empty()) throw ExecError(fmt::format("syntax error: {}", script.errors[0].message));
    if (script.statements.size() != 1 || script.statements[0].kind != StatementKind::SELECT) throw ExecError("expected exactly one SELECT statement");
    return eval_select_impl(catalog, *script.arena, script.statements[0].root, ctx);
}

}  // namespace dashql
