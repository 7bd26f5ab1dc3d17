#include "dashql/vizgen.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace dashql {

using nlohmann::ordered_json;

std::vector<std::string> required_channels(VizKind kind) {
    switch (kind) {
        case VizKind::TABLE: return {};
        case VizKind::LINE:
        case VizKind::BAR:
        case VizKind::AREA:
        case VizKind::SCATTER: return {"x", "y"};
        case VizKind::MULTI_LINE:
        case VizKind::STACKED_BAR:
        case VizKind::STACKED_AREA: return {"x", "y", "color"};
    }
    return {};
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y)); });
}

std::string_view mark_of(VizKind kind) {
    switch (kind) {
        case VizKind::LINE:
        case VizKind::MULTI_LINE: return "line";
        case VizKind::BAR:
        case VizKind::STACKED_BAR: return "bar";
        case VizKind::AREA:
        case VizKind::STACKED_AREA: return "area";
        case VizKind::SCATTER: return "point";
        case VizKind::TABLE: return "table";
    }
    return "table";
}

/// Deep merge; `user` wins on conflicts.
void merge_user(ordered_json& base, const ordered_json& user) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_user(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

/// Pointers of all leaves and objects under `node`, prefixed with `prefix`.
void collect_pointers(const ordered_json& node, const std::string& prefix, std::set<std::string>& out) {
    if (!node.is_object()) return;
    for (auto it = node.begin(); it != node.end(); ++it) {
        std::string p = prefix + "/" + it.key();
        out.insert(p);
        collect_pointers(it.value(), p, out);
    }
}

const ColumnDef* find_column(const std::vector<ColumnDef>& schema, const std::string& name) {
    for (auto& c : schema) {
        if (c.name == name) return &c;
    }
    for (auto& c : schema) {
        if (iequals(c.name, name)) return &c;
    }
    return nullptr;
}

std::string quote_ident(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

constexpr std::string_view kDomainRelation = "__viz_data";

}  // namespace

std::vector<std::pair<std::string, std::string>> assign_fields(const std::vector<ColumnDef>& schema, VizKind kind) {
    auto channels = required_channels(kind);
    if (schema.size() < channels.size()) {
        throw VizError(fmt::format("{} needs {} columns, the relation has {}", to_string(kind), channels.size(), schema.size()));
    }
    std::vector<std::optional<size_t>> chosen(channels.size());
    std::vector<bool> taken(schema.size(), false);
    for (size_t c = 0; c < channels.size(); ++c) {
        for (size_t i = 0; i < schema.size(); ++i) {
            if (!taken[i] && iequals(schema[i].name, channels[c])) {
                chosen[c] = i;
                taken[i] = true;
                break;
            }
        }
    }
    size_t next = 0;
    for (size_t c = 0; c < channels.size(); ++c) {
        if (chosen[c]) continue;
        while (taken[next]) ++next;
        chosen[c] = next;
        taken[next] = true;
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (size_t c = 0; c < channels.size(); ++c) out.emplace_back(channels[c], schema[*chosen[c]].name);
    return out;
}

std::string infer_encoding_type(DataType type) {
    switch (type) {
        case DataType::Timestamp: return "temporal";
        case DataType::BigInt:
        case DataType::Double:
        case DataType::Interval: return "quantitative";
        default: return "nominal";
    }
}

bool ChartSpec::user_set(const std::string& pointer) const {
    return spec.contains(nlohmann::ordered_json::json_pointer(pointer)) && !inferred.count(pointer);
}

void compute_domains(const Relation& data, ChartSpec& chart, const ExecContext& ctx) {
    if (!chart.spec.contains("encoding") || !chart.spec["encoding"].is_object()) return;
    if (data.row_count == 0) return;
    Catalog scratch;
    scratch.create_table(std::string(kDomainRelation), std::make_shared<Relation>(data));
    auto& encoding = chart.spec["encoding"];
    for (auto it = encoding.begin(); it != encoding.end(); ++it) {
        auto& enc = it.value();
        if (!enc.is_object() || !enc.contains("field") || !enc["field"].is_string() || !enc.contains("type")) continue;
        if (enc.contains("scale") && enc["scale"].is_object() && enc["scale"].contains("domain")) continue;
        std::string field = enc["field"].get<std::string>();
        const ColumnDef* col = find_column(data.schema, field);
        if (!col) throw VizError(fmt::format("encoding.{} references unknown column '{}'", it.key(), field));
        std::string type = enc["type"].is_string() ? enc["type"].get<std::string>() : "";
        ordered_json domain;
        if (type == "temporal" || type == "quantitative") {
            auto r = execute_sql(scratch, fmt::format("SELECT min({0}), max({0}) FROM {1}", quote_ident(col->name), kDomainRelation), ctx);
            if (r.columns[0].is_null(0)) continue;
            domain = ordered_json::array({to_json(r.columns[0].get(0)), to_json(r.columns[1].get(0))});
        } else if (type == "nominal" || type == "ordinal") {
            auto r = execute_sql(scratch, fmt::format("SELECT DISTINCT {0} FROM {1} WHERE {0} IS NOT NULL ORDER BY 1", quote_ident(col->name), kDomainRelation), ctx);
            domain = ordered_json::array();
            for (size_t i = 0; i < r.row_count; ++i) domain.push_back(to_json(r.columns[0].get(i)));
        } else {
            continue;
        }
        enc["scale"]["domain"] = std::move(domain);
        std::string base = "/encoding/" + it.key();
        chart.inferred.insert(base + "/scale/domain");
        if (!chart.user_set(base + "/scale")) chart.inferred.insert(base + "/scale");
    }
}

ChartSpec lower_to_spec(VizKind kind, const std::string& target, const ordered_json& settings, const Relation& data, const ExecContext& ctx) {
    ChartSpec chart;
    chart.kind = kind;
    ordered_json user = settings.is_object() ? settings : ordered_json::object();
    if (kind == VizKind::TABLE) {
        chart.spec = user;
        chart.spec["data"] = {{"name", target}};
        chart.inferred = {"/data", "/data/name"};
        return chart;
    }
    bool verbose = user.contains("mark") || user.contains("encoding");
    ordered_json inferred = ordered_json::object();
    if (!verbose) {
        inferred["mark"] = mark_of(kind);
        auto& encoding = inferred["encoding"] = ordered_json::object();
        for (auto& [channel, field] : assign_fields(data.schema, kind)) {
            encoding[channel] = {{"field", field}, {"type", infer_encoding_type(find_column(data.schema, field)->type)}};
        }
        if (kind == VizKind::STACKED_BAR || kind == VizKind::STACKED_AREA) encoding["y"]["stack"] = "zero";
    }
    inferred["data"] = {{"name", target}};
    collect_pointers(inferred, "", chart.inferred);
    chart.spec = inferred;
    merge_user(chart.spec, user);
    // user keys are not inferred, including containers the user wrote into
    std::set<std::string> user_keys;
    collect_pointers(user, "", user_keys);
    for (auto& p : user_keys) chart.inferred.erase(p);
    // the data reference goes last so that short and verbose forms serialize alike
    if (!user.contains("data")) {
        ordered_json ref = chart.spec["data"];
        chart.spec.erase("data");
        chart.spec["data"] = std::move(ref);
    }

    // verbose encodings may omit the type
    if (chart.spec.contains("encoding") && chart.spec["encoding"].is_object()) {
        for (auto it = chart.spec["encoding"].begin(); it != chart.spec["encoding"].end(); ++it) {
            auto& enc = it.value();
            if (!enc.is_object() || !enc.contains("field") || !enc["field"].is_string()) continue;
            const ColumnDef* col = find_column(data.schema, enc["field"].get<std::string>());
            if (!col) throw VizError(fmt::format("encoding.{} references unknown column '{}'", it.key(), enc["field"].get<std::string>()));
            if (!enc.contains("type")) {
                enc["type"] = infer_encoding_type(col->type);
                chart.inferred.insert("/encoding/" + it.key() + "/type");
            }
        }
    }
    compute_domains(data, chart, ctx);
    return chart;
}

ChartSpec lower_statement(const ProgramDescription& desc, uint32_t stmt, const Relation& data, const ExecContext& ctx) {
    const auto& s = desc.statements[stmt];
    if (s.kind != StatementKind::VISUALIZE || !s.viz_kind || s.consumes.empty()) throw VizError("not a visualization statement");
    return lower_to_spec(*s.viz_kind, *s.consumes.begin(), s.settings, data, ctx);
}

std::string snake_to_camel(std::string_view key) {
    std::string out;
    bool upper = false;
    for (size_t i = 0; i < key.size(); ++i) {
        char c = key[i];
        if (c == '_' && i > 0 && i + 1 < key.size()) {
            upper = true;
            continue;
        }
        out += upper ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c;
        upper = false;
    }
    return out;
}

namespace {

ordered_json camelize(const ordered_json& node) {
    if (node.is_object()) {
        ordered_json out = ordered_json::object();
        for (auto it = node.begin(); it != node.end(); ++it) out[snake_to_camel(it.key())] = camelize(it.value());
        return out;
    }
    if (node.is_array()) {
        ordered_json out = ordered_json::array();
        for (auto& v : node) out.push_back(camelize(v));
        return out;
    }
    return node;
}

bool bare_key(const std::string& key) {
    if (key.empty() || !(std::islower(static_cast<unsigned char>(key[0])) || key[0] == '_')) return false;
    for (char c : key) {
        if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    auto kw = lookup_keyword(key);
    return !kw || !is_reserved(*kw);
}

std::string quote_string(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += '\'';
        out += c;
    }
    return out + "'";
}

}  // namespace

nlohmann::ordered_json to_vega_lite(const ChartSpec& chart) { return camelize(chart.spec); }

std::string to_dashql_settings(const ordered_json& value) {
    switch (value.type()) {
        case ordered_json::value_t::object: {
            std::string out = "(";
            bool first = true;
            for (auto it = value.begin(); it != value.end(); ++it) {
                if (!first) out += ", ";
                first = false;
                out += bare_key(it.key()) ? it.key() : fmt::format("\"{}\"", it.key());
                out += " = ";
                out += to_dashql_settings(it.value());
            }
            return out + ")";
        }
        case ordered_json::value_t::array: {
            std::string out = "[";
            for (size_t i = 0; i < value.size(); ++i) {
                if (i) out += ", ";
                out += to_dashql_settings(value[i]);
            }
            return out + "]";
        }
        case ordered_json::value_t::string: return quote_string(value.get<std::string>());
        case ordered_json::value_t::boolean: return value.get<bool>() ? "true" : "false";
        case ordered_json::value_t::null: return "null";
        case ordered_json::value_t::number_float: {
            // keep a decimal point so the value re-parses as a float
            std::string s = value.dump();
            if (s.find_first_of(".eE") == std::string::npos) s += ".0";
            return s;
        }
        default: return value.dump();
    }
}

std::string expand_statement_text(const std::string& target, const ChartSpec& chart) {
    ordered_json body = chart.spec;
    body.erase("data");
    return fmt::format("VISUALIZE {} USING {};", bare_key(target) ? target : fmt::format("\"{}\"", target), to_dashql_settings(body));
}

}  // namespace dashql
