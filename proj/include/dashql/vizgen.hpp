#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dashql/analyzer.hpp"
#include "dashql/executor.hpp"
#include "json.hpp"

namespace dashql {

struct VizError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Encoding channels a kind needs, in assignment order.
std::vector<std::string> required_channels(VizKind kind);

/// Columns whose name equals a channel name claim that channel; the remaining channels
/// take the remaining columns in schema order.
std::vector<std::pair<std::string, std::string>> assign_fields(const std::vector<ColumnDef>& schema, VizKind kind);

/// "temporal", "quantitative" or "nominal".
std::string infer_encoding_type(DataType type);

/// A lowered chart. `spec` uses the DashQL key spelling (snake_case); `inferred` holds
/// JSON pointers of every key the generator filled in rather than the author.
struct ChartSpec {
    VizKind kind = VizKind::TABLE;
    nlohmann::ordered_json spec = nlohmann::ordered_json::object();
    std::set<std::string> inferred;

    bool is_table() const { return kind == VizKind::TABLE; }
    bool user_set(const std::string& pointer) const;
};

/// Fills `scale.domain` of every encoding that lacks one: min/max for temporal and
/// quantitative channels, the sorted distinct values for nominal ones. Domains are
/// evaluated as queries over `data`. Empty relations leave domains unset.
void compute_domains(const Relation& data, ChartSpec& chart, const ExecContext& ctx);

/// Lowers a VISUALIZE statement over the relation it targets. `settings` is the verbose
/// specification or the optional settings list of the short form; both are user keys.
ChartSpec lower_to_spec(VizKind kind, const std::string& target, const nlohmann::ordered_json& settings, const Relation& data,
                        const ExecContext& ctx);
ChartSpec lower_statement(const ProgramDescription& desc, uint32_t stmt, const Relation& data, const ExecContext& ctx);

/// Rendering form: keys converted to camelCase (`tick_count` -> `tickCount`).
nlohmann::ordered_json to_vega_lite(const ChartSpec& chart);
std::string snake_to_camel(std::string_view key);

/// Verbose `VISUALIZE target USING ( ... );` text that lowers to `chart` again.
/// Tables have no verbose form; their statement text is returned unchanged by callers.
std::string expand_statement_text(const std::string& target, const ChartSpec& chart);
/// Renders a JSON value in DashQL key-value syntax.
std::string to_dashql_settings(const nlohmann::ordered_json& value);

}  // namespace dashql
