#include "dashql/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <omp.h>

namespace dashql {

int64_t am4_bin(double x, const Am4Params& p) {
    if (p.ub == p.lb) return 0;
    double k = std::round(static_cast<double>(p.width) * (x - p.lb) / (p.ub - p.lb));
    if (!(k > 0)) return 0;  // also catches NaN
    if (k > static_cast<double>(p.width)) return p.width;
    return static_cast<int64_t>(k);
}

namespace {

/// Extrema of one bin with the partner coordinate of the first row attaining each.
struct BinAcc {
    bool seen = false;
    double min_x = 0, min_x_y = 0;
    double max_x = 0, max_x_y = 0;
    double min_y = 0, min_y_x = 0;
    double max_y = 0, max_y_x = 0;

    void add(double x, double y) {
        if (!seen) {
            seen = true;
            min_x = max_x = min_y_x = max_y_x = x;
            min_y = max_y = min_x_y = max_x_y = y;
            return;
        }
        // strict comparisons keep the earliest row on ties
        if (x < min_x) min_x = x, min_x_y = y;
        if (x > max_x) max_x = x, max_x_y = y;
        if (y < min_y) min_y = y, min_y_x = x;
        if (y > max_y) max_y = y, max_y_x = x;
    }

    /// `later` covers rows after this accumulator's rows.
    void merge(const BinAcc& later) {
        if (!later.seen) return;
        if (!seen) {
            *this = later;
            return;
        }
        if (later.min_x < min_x) min_x = later.min_x, min_x_y = later.min_x_y;
        if (later.max_x > max_x) max_x = later.max_x, max_x_y = later.max_x_y;
        if (later.min_y < min_y) min_y = later.min_y, min_y_x = later.min_y_x;
        if (later.max_y > max_y) max_y = later.max_y, max_y_x = later.max_y_x;
    }
};

void check_series(std::span<const double> x, std::span<const double> y, const Am4Params& p) {
    if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
    if (p.width < 1) throw std::invalid_argument("width must be at least 1");
    if (p.ub < p.lb) throw std::invalid_argument("ub must not be below lb");
}

std::vector<BinnedPoint> emit_bins(const std::vector<BinAcc>& bins) {
    std::vector<BinnedPoint> out;
    for (size_t b = 0; b < bins.size(); ++b) {
        const BinAcc& a = bins[b];
        if (!a.seen) continue;
        auto k = static_cast<int64_t>(b);
        BinnedPoint pts[4] = {{k, a.min_x, a.min_x_y}, {k, a.max_x, a.max_x_y}, {k, a.min_y_x, a.min_y}, {k, a.max_y_x, a.max_y}};
        std::sort(pts, pts + 4);
        auto* end = std::unique(pts, pts + 4);
        out.insert(out.end(), pts, end);
    }
    return out;
}

}  // namespace

std::vector<BinnedPoint> am4_native(std::span<const double> x, std::span<const double> y, const Am4Params& p) {
    check_series(x, y, p);
    std::vector<BinAcc> bins(static_cast<size_t>(p.width) + 1);
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        bins[static_cast<size_t>(am4_bin(x[i], p))].add(x[i], y[i]);
    }
    return emit_bins(bins);
}

std::vector<BinnedPoint> am4_parallel(std::span<const double> x, std::span<const double> y, const Am4Params& p) {
    check_series(x, y, p);
    const size_t nbins = static_cast<size_t>(p.width) + 1;
    const size_t n = x.size();
    int threads = std::max(1, omp_get_max_threads());
    std::vector<std::vector<BinAcc>> partial(static_cast<size_t>(threads));
#pragma omp parallel num_threads(threads)
    {
        int t = omp_get_thread_num();
        int nt = omp_get_num_threads();
        // contiguous row ranges in thread order, so merging in order preserves first-row ties
        size_t begin = n * static_cast<size_t>(t) / static_cast<size_t>(nt);
        size_t end = n * static_cast<size_t>(t + 1) / static_cast<size_t>(nt);
        std::vector<BinAcc> local(nbins);
        for (size_t i = begin; i < end; ++i) {
            if (std::isnan(x[i]) || std::isnan(y[i])) continue;
            local[static_cast<size_t>(am4_bin(x[i], p))].add(x[i], y[i]);
        }
        partial[static_cast<size_t>(t)] = std::move(local);
    }
    std::vector<BinAcc> bins(nbins);
    for (auto& local : partial) {
        if (local.empty()) continue;
        for (size_t b = 0; b < nbins; ++b) bins[b].merge(local[b]);
    }
    return emit_bins(bins);
}

std::vector<BinnedPoint> m4_oracle(std::span<const double> x, std::span<const double> y, const Am4Params& p) {
    check_series(x, y, p);
    struct Ext {
        double min_x, max_x, min_y, max_y;
    };
    // pass 1: GROUP BY k
    std::unordered_map<int64_t, Ext> groups;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        int64_t k = am4_bin(x[i], p);
        auto [it, inserted] = groups.try_emplace(k, Ext{x[i], x[i], y[i], y[i]});
        if (inserted) continue;
        Ext& e = it->second;
        e.min_x = std::min(e.min_x, x[i]);
        e.max_x = std::max(e.max_x, x[i]);
        e.min_y = std::min(e.min_y, y[i]);
        e.max_y = std::max(e.max_y, y[i]);
    }
    // pass 2: join back on k and keep rows touching an extremum, then DISTINCT (k, x, y)
    struct Hash {
        size_t operator()(const BinnedPoint& b) const {
            size_t h = std::hash<int64_t>()(b.bin);
            h = h * 31 + std::hash<double>()(b.x);
            return h * 31 + std::hash<double>()(b.y);
        }
    };
    std::unordered_set<BinnedPoint, Hash> distinct;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        int64_t k = am4_bin(x[i], p);
        const Ext& e = groups.at(k);
        if (y[i] == e.min_y || y[i] == e.max_y || x[i] == e.min_x || x[i] == e.max_x) distinct.insert({k, x[i], y[i]});
    }
    std::vector<BinnedPoint> out(distinct.begin(), distinct.end());
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::optional<double> numeric_of(const Value& v) {
    if (auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* t = std::get_if<Timestamp>(&v)) return static_cast<double>(t->micros);
    if (auto* iv = std::get_if<Interval>(&v)) return static_cast<double>(iv->micros);
    return std::nullopt;
}

bool plottable(DataType t) { return t == DataType::BigInt || t == DataType::Double || t == DataType::Timestamp || t == DataType::Interval; }

std::string quote_ident(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string numeric_expr(const std::string& column, DataType type) {
    if (type == DataType::Timestamp || type == DataType::Interval) return fmt::format("epoch_us({})", quote_ident(column));
    return quote_ident(column);
}

std::string literal(double v) {
    if (v == std::floor(v) && std::abs(v) < 9e15) return fmt::format("({})", static_cast<int64_t>(v));
    return fmt::format("({:.17g})", v);
}

const ColumnDef* column_named(const Relation& rel, const std::string& name) {
    auto idx = rel.column_index(name);
    return idx ? &rel.schema[*idx] : nullptr;
}

Value from_micros_like(const Value& v, DataType type) {
    if (is_null(v)) return v;
    if (type == DataType::Timestamp) return Value{Timestamp{std::get<int64_t>(v)}};
    if (type == DataType::Interval) return Value{Interval{std::get<int64_t>(v)}};
    return v;
}

constexpr std::string_view kAm4Input = "__am4_input";

}  // namespace

void series_from_columns(const Column& x, const Column& y, std::vector<double>& xs, std::vector<double>& ys) {
    xs.clear();
    ys.clear();
    xs.reserve(x.size());
    ys.reserve(y.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (x.is_null(i) || y.is_null(i)) continue;
        xs.push_back(x.as_double(i));
        ys.push_back(y.as_double(i));
    }
}

std::optional<Am4Rewrite> inject_am4(const ChartSpec& chart, const Relation& data, uint64_t input_rows, int64_t width, const ExecContext& ctx) {
    if (chart.kind != VizKind::LINE && chart.kind != VizKind::MULTI_LINE && chart.kind != VizKind::AREA) return std::nullopt;
    if (width < 1 || input_rows <= 4 * static_cast<uint64_t>(width + 1)) return std::nullopt;
    const auto& spec = chart.spec;
    if (!spec.contains("encoding") || !spec["encoding"].is_object()) return std::nullopt;
    const auto& enc = spec["encoding"];
    auto field_of = [&](const char* channel) -> std::optional<std::string> {
        if (!enc.contains(channel) || !enc[channel].is_object() || !enc[channel].contains("field") || !enc[channel]["field"].is_string()) return std::nullopt;
        return enc[channel]["field"].get<std::string>();
    };
    auto xf = field_of("x"), yf = field_of("y"), cf = field_of("color");
    if (!xf || !yf) return std::nullopt;
    const ColumnDef* xc = column_named(data, *xf);
    const ColumnDef* yc = column_named(data, *yf);
    if (!xc || !yc || !plottable(xc->type) || !plottable(yc->type)) return std::nullopt;
    const ColumnDef* cc = cf ? column_named(data, *cf) : nullptr;
    if (cf && !cc) return std::nullopt;

    Am4Rewrite rw;
    rw.relation = std::string(kAm4Input);
    rw.x_field = xc->name;
    rw.y_field = yc->name;
    if (cc) rw.color_field = cc->name;
    rw.params.width = width;

    // x domain from the chart when usable
    std::optional<std::pair<double, double>> domain;
    if (enc["x"].contains("scale") && enc["x"]["scale"].is_object() && enc["x"]["scale"].contains("domain")) {
        const auto& d = enc["x"]["scale"]["domain"];
        if (d.is_array() && d.size() == 2) {
            auto bound = [&](const nlohmann::ordered_json& v) -> std::optional<double> {
                if (v.is_number()) return v.get<double>();
                if (v.is_string() && xc->type == DataType::Timestamp) {
                    if (auto ts = parse_timestamp(v.get<std::string>())) return static_cast<double>(ts->micros);
                }
                return std::nullopt;
            };
            auto lo = bound(d[0]), hi = bound(d[1]);
            if (lo && hi && *lo <= *hi) domain = std::make_pair(*lo, *hi);
        }
    }
    if (!domain) {
        Catalog scratch;
        scratch.create_table(rw.relation, std::make_shared<Relation>(data));
        auto r = execute_sql(scratch, fmt::format("SELECT min({0}), max({0}) FROM {1}", quote_ident(xc->name), rw.relation), ctx);
        auto lo = numeric_of(r.columns[0].get(0)), hi = numeric_of(r.columns[1].get(0));
        if (!lo || !hi) return std::nullopt;
        domain = std::make_pair(*lo, *hi);
    }
    rw.params.lb = domain->first;
    rw.params.ub = domain->second;

    std::string bin = rw.params.ub == rw.params.lb
                          ? std::string("0")
                          : fmt::format("least(greatest(round({}.0 * (x - {}) / ({} - {})), 0), {})", width, literal(rw.params.lb),
                                        literal(rw.params.ub), literal(rw.params.lb), width);
    std::string inner = fmt::format("SELECT {} AS x, {} AS y{} FROM {} WHERE {} IS NOT NULL AND {} IS NOT NULL", numeric_expr(xc->name, xc->type),
                                    numeric_expr(yc->name, yc->type), cc ? fmt::format(", {} AS color", quote_ident(cc->name)) : "", rw.relation,
                                    quote_ident(xc->name), quote_ident(yc->name));
    rw.sql = fmt::format(
        "SELECT {} AS bin{}, min(x) AS min_x, arg_min(y, x) AS min_x_y, max(x) AS max_x, arg_max(y, x) AS max_x_y, "
        "min(y) AS min_y, arg_min(x, y) AS min_y_x, max(y) AS max_y, arg_max(x, y) AS max_y_x FROM ({}) AS s GROUP BY bin{}",
        bin, cc ? ", color" : "", inner, cc ? ", color" : "");
    return rw;
}

Relation run_am4_rewrite(const Am4Rewrite& rw, const Relation& data, const ExecContext& ctx) {
    Catalog scratch;
    scratch.create_table(rw.relation, std::make_shared<Relation>(data));
    Relation agg = execute_sql(scratch, rw.sql, ctx);
    DataType xt = data.schema[*data.column_index(rw.x_field)].type;
    DataType yt = data.schema[*data.column_index(rw.y_field)].type;
    std::optional<DataType> ct;
    if (rw.color_field) ct = data.schema[*data.column_index(*rw.color_field)].type;

    struct Row {
        Value color;
        int64_t bin;
        Value x, y;
    };
    std::vector<Row> rows;
    auto col = [&](const char* name) { return *agg.column_index(name); };
    size_t bin_c = col("bin"), color_c = ct ? col("color") : 0;
    const std::pair<const char*, const char*> corners[4] = {{"min_x", "min_x_y"}, {"max_x", "max_x_y"}, {"min_y_x", "min_y"}, {"max_y_x", "max_y"}};
    for (size_t r = 0; r < agg.row_count; ++r) {
        Value b = agg.columns[bin_c].get(r);
        int64_t bin = std::holds_alternative<double>(b) ? static_cast<int64_t>(std::get<double>(b)) : std::get<int64_t>(b);
        Value color = ct ? agg.columns[color_c].get(r) : Value{};
        std::vector<std::pair<Value, Value>> pts;
        for (auto& [xn, yn] : corners) {
            std::pair<Value, Value> p{agg.columns[col(xn)].get(r), agg.columns[col(yn)].get(r)};
            bool dup = std::any_of(pts.begin(), pts.end(), [&](auto& q) { return values_equal(q.first, p.first) && values_equal(q.second, p.second); });
            if (!dup) pts.push_back(std::move(p));
        }
        for (auto& [x, y] : pts) rows.push_back({color, bin, from_micros_like(x, xt), from_micros_like(y, yt)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (auto c = total_order(a.color, b.color); c != 0) return c < 0;
        if (a.bin != b.bin) return a.bin < b.bin;
        if (auto c = total_order(a.x, b.x); c != 0) return c < 0;
        return total_order(a.y, b.y) < 0;
    });
    Relation out;
    out.schema.push_back({rw.x_field, xt});
    out.schema.push_back({rw.y_field, yt});
    if (ct) out.schema.push_back({*rw.color_field, *ct});
    for (auto& d : out.schema) out.columns.emplace_back(d.type);
    for (auto& r : rows) {
        out.columns[0].append(r.x);
        out.columns[1].append(r.y);
        if (ct) out.columns[2].append(r.color);
    }
    out.row_count = rows.size();
    return out;
}

// ---- limit / offset pushdown ----

std::optional<ScanDirective> pushdown_limit_offset(const Catalog& catalog, const std::string& relation, size_t offset, size_t limit) {
    std::string name = relation;
    for (int depth = 0; depth < 32; ++depth) {
        auto entry = catalog.lookup(name);
        if (!entry) return std::nullopt;
        if (entry->kind == CatalogEntry::Kind::LAZY) return ScanDirective{name, offset, limit};
        if (entry->kind != CatalogEntry::Kind::VIEW) return std::nullopt;
        // only a bare `SELECT * FROM base` keeps row positions
        const AstArena& a = *entry->view.arena;
        uint32_t sel = entry->view.select;
        const AstNode& n = a.node(sel);
        for (uint32_t i = 0; i < n.children_count(); ++i) {
            AttrKey k = a.node(n.children_begin() + i).key();
            if (k != AttrKey::TARGETS && k != AttrKey::FROM) return std::nullopt;
        }
        auto targets = a.find_child(sel, AttrKey::TARGETS);
        auto from = a.find_child(sel, AttrKey::FROM);
        if (!targets || !from || a.node(*targets).children_count() != 1 || a.node(*from).children_count() != 1) return std::nullopt;
        uint32_t target = a.node(*targets).children_begin();
        auto expr = a.find_child(target, AttrKey::EXPR);
        if (!expr || a.node(*expr).node_type != NodeType::STAR || a.find_child(target, AttrKey::ALIAS)) return std::nullopt;
        uint32_t item = a.node(*from).children_begin();
        if (a.node(item).node_type != NodeType::REL_NAME) return std::nullopt;
        name = a.name_value(*a.find_child(item, AttrKey::NAME));
    }
    return std::nullopt;
}

// ---- materialization ----

std::string_view to_string(Materialization m) { return m == Materialization::LAZY ? "LAZY" : "MATERIALIZE"; }

const LoadPlan* MaterializationPlan::find(uint32_t stmt) const {
    auto it = loads.find(stmt);
    return it == loads.end() ? nullptr : &it->second;
}

namespace {

std::optional<LoadFormat> format_from_uri(std::string_view uri) {
    auto ends_with = [&](std::string_view suffix) {
        if (uri.size() < suffix.size()) return false;
        return std::equal(suffix.begin(), suffix.end(), uri.end() - static_cast<ptrdiff_t>(suffix.size()),
                          [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
    };
    if (ends_with(".csv")) return LoadFormat::CSV;
    if (ends_with(".json")) return LoadFormat::JSON;
    if (ends_with(".parquet")) return LoadFormat::PARQUET;
    if (ends_with(".rgf")) return LoadFormat::RGF;
    return std::nullopt;
}

std::set<std::string> select_aliases(const AstArena& a, uint32_t select) {
    std::set<std::string> out;
    auto targets = a.find_child(select, AttrKey::TARGETS);
    if (!targets) return out;
    const AstNode& tn = a.node(*targets);
    for (uint32_t i = 0; i < tn.children_count(); ++i) {
        if (auto alias = a.find_child(tn.children_begin() + i, AttrKey::ALIAS)) out.insert(a.name_value(*alias));
    }
    return out;
}

}  // namespace

std::optional<LoadFormat> effective_load_format(const ProgramDescription& desc, uint32_t stmt) {
    const auto& s = desc.statements[stmt];
    if (s.format) return s.format;
    for (const auto& name : s.consumes) {
        if (auto p = desc.producer_of(name); p && desc.statements[*p].kind == StatementKind::FETCH) return format_from_uri(desc.statements[*p].uri);
    }
    return std::nullopt;
}

MaterializationPlan decide_materialization(const ProgramDescription& desc, bool force_materialize) {
    MaterializationPlan plan;
    const AstArena& a = desc.ast();
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        const auto& s = desc.statements[i];
        if (s.kind != StatementKind::LOAD || !s.produces) continue;
        LoadPlan lp;
        lp.statement = i;
        lp.relation = *s.produces;
        lp.consumers = desc.dependents(i);
        auto format = effective_load_format(desc, i);
        bool columnar = format == LoadFormat::PARQUET || format == LoadFormat::RGF;

        // projection: union over consumers, absent when any consumer needs every column
        std::set<std::string> columns;
        bool all_columns = lp.consumers.empty();
        for (uint32_t c : lp.consumers) {
            const auto& cs = desc.statements[c];
            std::optional<ScanPushdown> pd;
            if (cs.query) pd = analyze_scan_pushdown(a, *cs.query);
            if (!pd || pd->relation != lp.relation || !pd->projection) {
                all_columns = true;
                continue;
            }
            auto aliases = select_aliases(a, *cs.query);
            for (auto& col : *pd->projection) {
                if (!aliases.count(col)) columns.insert(col);
            }
            if (lp.consumers.size() == 1) {
                for (auto& p : pd->predicates) lp.predicates.push_back(fmt::format("{} {} {}", p.column, to_string(p.op), print_node(a, p.expr)));
            }
        }
        if (!all_columns) lp.projection = columns;

        if (force_materialize) {
            lp.decision = Materialization::MATERIALIZE;
            lp.reasons.push_back("forced");
        } else if (!columnar) {
            lp.decision = Materialization::MATERIALIZE;
            lp.reasons.push_back("format requires a full parse");
        } else if (lp.consumers.size() != 1) {
            lp.decision = Materialization::MATERIALIZE;
            lp.reasons.push_back(fmt::format("{} consumers share the table", lp.consumers.size()));
        } else {
            lp.decision = Materialization::LAZY;
            lp.reasons.push_back("columnar format with a single consumer");
        }
        if (lp.decision == Materialization::LAZY) {
            lp.reasons.push_back(lp.projection ? fmt::format("projection of {} columns", lp.projection->size()) : "all columns");
        }
        plan.loads.emplace(i, std::move(lp));
    }
    return plan;
}

}  // namespace dashql
