#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dashql/analyzer.hpp"
#include "dashql/executor.hpp"
#include "dashql/vizgen.hpp"

namespace dashql {

// ---- AM4 / M4 ----

struct Am4Params {
    int64_t width = 2000;  // canvas width times device pixel ratio
    double lb = 0;         // x domain, in the units of x
    double ub = 0;
};

/// A reduced point tagged with its pixel column.
struct BinnedPoint {
    int64_t bin = 0;
    double x = 0;
    double y = 0;
    auto operator<=>(const BinnedPoint&) const = default;
};

/// clamp(round(width * (x - lb) / (ub - lb)), 0, width); every x maps to bin 0 when ub == lb.
int64_t am4_bin(double x, const Am4Params& params);

/// Single pass over the series. Per bin emits the points at min x, max x, min y and max y,
/// pairing each extremum with the other coordinate of the first row attaining it.
/// Output is de-duplicated and sorted by (bin, x, y). NaN coordinates are skipped.
std::vector<BinnedPoint> am4_native(std::span<const double> x, std::span<const double> y, const Am4Params& params);
/// OpenMP variant; returns exactly what am4_native returns.
std::vector<BinnedPoint> am4_parallel(std::span<const double> x, std::span<const double> y, const Am4Params& params);
/// Two passes as in the classic M4 query: per-bin extrema, then a join back to every row
/// touching an extremum, then DISTINCT on (bin, x, y). Sorted like am4_native.
std::vector<BinnedPoint> m4_oracle(std::span<const double> x, std::span<const double> y, const Am4Params& params);

/// Non-null (x, y) pairs of two columns as doubles; timestamps and intervals in microseconds.
void series_from_columns(const Column& x, const Column& y, std::vector<double>& xs, std::vector<double>& ys);

/// A chart query rewritten to aggregate per pixel column before rendering.
struct Am4Rewrite {
    std::string sql;  // evaluated against the chart data registered as `relation`
    std::string relation;
    Am4Params params;
    std::string x_field, y_field;
    std::optional<std::string> color_field;
};

/// Declines (nullopt) unless the chart is a line or area chart with quantitative or
/// temporal x and y, and `input_rows` exceeds 4 * (width + 1). The x domain is taken from
/// the chart when it is numeric or a timestamp, and from `data` otherwise.
std::optional<Am4Rewrite> inject_am4(const ChartSpec& chart, const Relation& data, uint64_t input_rows, int64_t width,
                                     const ExecContext& ctx);
/// Runs the rewrite and unpivots each bin row into its distinct extreme points. The result
/// has the chart's x, y (and color) columns with their original types, sorted by
/// (color, bin, x, y).
Relation run_am4_rewrite(const Am4Rewrite& rewrite, const Relation& data, const ExecContext& ctx);

// ---- limit / offset pushdown ----

struct ScanDirective {
    std::string relation;  // lazy catalog entry to scan
    size_t offset = 0;
    size_t limit = 0;
};

/// A table page over `relation` becomes a windowed scan when the relation is a lazy source
/// or a view that is a bare `SELECT *` over one. Declines otherwise.
std::optional<ScanDirective> pushdown_limit_offset(const Catalog& catalog, const std::string& relation, size_t offset, size_t limit);

// ---- materialization ----

enum class Materialization : uint8_t { LAZY, MATERIALIZE };
std::string_view to_string(Materialization m);

struct LoadPlan {
    uint32_t statement = 0;
    std::string relation;
    Materialization decision = Materialization::MATERIALIZE;
    std::vector<std::string> reasons;
    std::vector<uint32_t> consumers;
    /// Columns the consumers reference; absent when some consumer needs all of them.
    std::optional<std::set<std::string>> projection;
    /// Range predicates of a single consumer's WHERE, as `column op expression` text.
    std::vector<std::string> predicates;
};

struct MaterializationPlan {
    std::map<uint32_t, LoadPlan> loads;  // keyed by statement index
    const LoadPlan* find(uint32_t stmt) const;
};

/// The LOAD's format, or the one implied by the file extension of the fetched URI.
std::optional<LoadFormat> effective_load_format(const ProgramDescription& desc, uint32_t stmt);

/// LAZY only for columnar (PARQUET/RGF) loads with exactly one consumer; `force_materialize`
/// turns every decision into MATERIALIZE for plan-equivalence checks.
MaterializationPlan decide_materialization(const ProgramDescription& desc, bool force_materialize = false);

}  // namespace dashql
