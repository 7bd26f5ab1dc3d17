#include <algorithm>
#include <charconv>
#include <regex>

#include <fmt/format.h>

#include "dashql/ingest.hpp"

namespace dashql {

namespace {

bool parses_bigint(std::string_view s) {
    if (s.empty()) return false;
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parses_double(std::string_view s) {
    if (s.empty()) return false;
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

std::vector<std::vector<std::optional<std::string>>> split_csv(std::string_view text, char delim) {
    std::vector<std::vector<std::optional<std::string>>> rows;
    std::vector<std::optional<std::string>> row;
    std::string field;
    bool quoted = false, was_quoted = false, in_field = false;
    auto end_field = [&] {
        if (!was_quoted && field.empty()) {
            row.emplace_back(std::nullopt);
        } else {
            row.emplace_back(field);
        }
        field.clear();
        was_quoted = false;
        in_field = false;
    };
    auto end_row = [&] {
        end_field();
        // a blank line is not a row
        if (!(row.size() == 1 && !row[0])) rows.push_back(std::move(row));
        row.clear();
    };
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !in_field) {
            quoted = was_quoted = in_field = true;
        } else if (c == delim) {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_row();
        } else {
            field += c;
            in_field = true;
        }
    }
    if (quoted) throw LoadError("unterminated quoted CSV field");
    if (in_field || !field.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace

DataType infer_column_type(const std::vector<std::optional<std::string>>& cells) {
    auto all = [&](auto pred) {
        return std::all_of(cells.begin(), cells.end(), [&](const auto& c) { return !c || pred(*c); });
    };
    if (std::all_of(cells.begin(), cells.end(), [](const auto& c) { return !c; })) return DataType::Varchar;
    if (all(parses_bigint)) return DataType::BigInt;
    if (all(parses_double)) return DataType::Double;
    if (all([](const std::string& s) { return parse_timestamp(s).has_value(); })) return DataType::Timestamp;
    return DataType::Varchar;
}

Relation load_csv(std::string_view text, const nlohmann::ordered_json& settings) {
    char delim = ',';
    bool header = true;
    if (settings.is_object()) {
        if (settings.contains("delimiter")) {
            auto d = settings["delimiter"].get<std::string>();
            if (d.size() != 1) throw LoadError("CSV delimiter must be a single character");
            delim = d[0];
        }
        if (settings.contains("header")) header = settings["header"].get<bool>();
    }
    auto rows = split_csv(text, delim);
    std::vector<std::string> names;
    size_t first = 0;
    if (header && !rows.empty()) {
        for (auto& h : rows[0]) names.push_back(h.value_or(""));
        first = 1;
    } else if (!rows.empty()) {
        for (size_t c = 0; c < rows[0].size(); ++c) names.push_back(fmt::format("column{}", c));
    }
    for (size_t r = first; r < rows.size(); ++r) {
        if (rows[r].size() != names.size()) {
            throw LoadError(fmt::format("ragged CSV row {}: expected {} fields, found {}", r + 1, names.size(), rows[r].size()));
        }
    }
    Relation rel;
    for (size_t c = 0; c < names.size(); ++c) {
        std::vector<std::optional<std::string>> cells;
        cells.reserve(rows.size() - first);
        for (size_t r = first; r < rows.size(); ++r) cells.push_back(rows[r][c]);
        DataType type = infer_column_type(cells);
        if (settings.is_object() && settings.contains("types") && settings["types"].contains(names[c])) {
            auto t = parse_data_type(settings["types"][names[c]].get<std::string>());
            if (!t) throw LoadError(fmt::format("unknown type for column '{}'", names[c]));
            type = *t;
        }
        Column col(type);
        col.reserve(cells.size());
        for (auto& cell : cells) {
            if (!cell) {
                col.append_null();
                continue;
            }
            auto v = cast_value(Value{*cell}, type);
            if (!v) throw LoadError(fmt::format("cannot convert '{}' in column '{}' to {}", *cell, names[c], to_string(type)));
            col.append(*v);
        }
        rel.add_column({names[c], type}, std::move(col));
    }
    rel.row_count = rows.size() - first;
    return rel;
}

// ---- JSON ----

namespace {

struct HookEntry {
    std::string name;
    JmespathHook hook;
};

std::mutex& hooks_mutex() {
    static std::mutex mu;
    return mu;
}

/// Resolves `@`, `@.a.b` or `a.b` against a document.
std::optional<nlohmann::ordered_json> resolve_path(const nlohmann::ordered_json& doc, std::string path) {
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\n"));
        s.erase(s.find_last_not_of(" \t\n") + 1);
        return s;
    };
    path = trim(path);
    if (path == "@" || path.empty()) return doc;
    if (path.rfind("@.", 0) == 0) path = path.substr(2);
    const nlohmann::ordered_json* cur = &doc;
    size_t pos = 0;
    while (pos <= path.size()) {
        size_t dot = path.find('.', pos);
        std::string part = trim(path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
        if (!cur->is_object() || !cur->contains(part)) return std::nullopt;
        cur = &(*cur)[part];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    return *cur;
}

const std::string kPath = R"((@(?:\.[A-Za-z_][A-Za-z0-9_]*)*|[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*))";

/// `{ a: keys(p), b: values(p) }`: pivots one object into two columns.
std::optional<JsonTransform> pivot_hook(std::string_view expr) {
    static const std::regex re(R"(^\s*\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(keys|values)\(\s*)" + kPath +
                               R"(\s*\)\s*,\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(keys|values)\(\s*)" + kPath + R"(\s*\)\s*\}\s*$)");
    std::cmatch m;
    if (!std::regex_match(expr.begin(), expr.end(), m, re)) return std::nullopt;
    struct Col {
        std::string name, fn, path;
    };
    std::vector<Col> cols{{m[1], m[2], m[3]}, {m[4], m[5], m[6]}};
    return JsonTransform([cols](const nlohmann::ordered_json& doc) {
        nlohmann::ordered_json out = nlohmann::ordered_json::object();
        for (auto& c : cols) {
            auto obj = resolve_path(doc, c.path);
            if (!obj || !obj->is_object()) throw LoadError(fmt::format("jmespath: '{}' is not an object", c.path));
            auto arr = nlohmann::ordered_json::array();
            for (auto& [k, v] : obj->items()) arr.push_back(c.fn == "keys" ? nlohmann::ordered_json(k) : v);
            out[c.name] = std::move(arr);
        }
        return out;
    });
}

/// `p[*].{ a: @.x, b: @.y }`: projects and renames fields of an array of objects.
std::optional<JsonTransform> rename_hook(std::string_view expr) {
    static const std::regex re(R"(^\s*)" + kPath + R"(\[\*\]\.\{(.*)\}\s*$)");
    static const std::regex field(R"(^\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*)" + kPath + R"(\s*$)");
    std::cmatch m;
    if (!std::regex_match(expr.begin(), expr.end(), m, re)) return std::nullopt;
    std::string path = m[1];
    std::string body = m[2];
    std::vector<std::pair<std::string, std::string>> fields;
    size_t pos = 0;
    while (pos <= body.size()) {
        size_t comma = body.find(',', pos);
        std::string part = body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::smatch fm;
        if (!std::regex_match(part, fm, field)) return std::nullopt;
        fields.emplace_back(fm[1], fm[2]);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return JsonTransform([path, fields](const nlohmann::ordered_json& doc) {
        auto arr = resolve_path(doc, path);
        if (!arr || !arr->is_array()) throw LoadError(fmt::format("jmespath: '{}' is not an array", path));
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (auto& elem : *arr) {
            nlohmann::ordered_json row = nlohmann::ordered_json::object();
            for (auto& [name, p] : fields) {
                auto v = resolve_path(elem, p);
                row[name] = v ? *v : nlohmann::ordered_json(nullptr);
            }
            out.push_back(std::move(row));
        }
        return out;
    });
}

std::vector<HookEntry>& hooks() {
    static std::vector<HookEntry> h{{"keys_values_pivot", pivot_hook}, {"array_field_rename", rename_hook}};
    return h;
}

Value json_scalar(const nlohmann::ordered_json& v) {
    if (v.is_null()) return Value{};
    if (v.is_boolean()) return Value{v.get<bool>()};
    if (v.is_number_integer()) return Value{v.get<int64_t>()};
    if (v.is_number_unsigned()) return Value{static_cast<int64_t>(v.get<uint64_t>())};
    if (v.is_number_float()) return Value{v.get<double>()};
    if (v.is_string()) return Value{v.get<std::string>()};
    return Value{v.dump()};
}

DataType infer_json_type(const std::vector<const nlohmann::ordered_json*>& cells) {
    bool any = false, all_int = true, all_num = true, all_bool = true, all_str = true;
    std::vector<std::optional<std::string>> strings;
    for (auto* c : cells) {
        if (!c || c->is_null()) continue;
        any = true;
        all_int &= c->is_number_integer() || c->is_number_unsigned();
        all_num &= c->is_number();
        all_bool &= c->is_boolean();
        all_str &= c->is_string();
        if (c->is_string()) strings.emplace_back(c->get<std::string>());
    }
    if (!any) return DataType::Varchar;
    if (all_bool) return DataType::Bool;
    if (all_int) return DataType::BigInt;
    if (all_num) return DataType::Double;
    if (all_str && infer_column_type(strings) == DataType::Timestamp) return DataType::Timestamp;
    return DataType::Varchar;
}

Column build_json_column(const std::vector<const nlohmann::ordered_json*>& cells, DataType type) {
    Column col(type);
    col.reserve(cells.size());
    for (auto* c : cells) {
        if (!c || c->is_null()) {
            col.append_null();
            continue;
        }
        Value v = json_scalar(*c);
        if (type == DataType::Varchar && !c->is_string()) v = Value{c->dump()};
        col.append(v);
    }
    return col;
}

}  // namespace

void register_jmespath_hook(std::string name, JmespathHook hook) {
    std::lock_guard lock(hooks_mutex());
    hooks().push_back({std::move(name), std::move(hook)});
}

std::vector<std::string> jmespath_hook_names() {
    std::lock_guard lock(hooks_mutex());
    std::vector<std::string> out;
    for (auto& h : hooks()) out.push_back(h.name);
    return out;
}

std::optional<JsonTransform> compile_jmespath(std::string_view expr) {
    std::lock_guard lock(hooks_mutex());
    for (auto& h : hooks()) {
        if (auto t = h.hook(expr)) return t;
    }
    return std::nullopt;
}

Relation relation_from_json(const nlohmann::ordered_json& doc) {
    Relation rel;
    if (doc.is_array()) {
        std::vector<std::string> names;
        for (auto& row : doc) {
            if (!row.is_object()) throw LoadError("row-major JSON must be an array of objects");
            for (auto& [k, v] : row.items()) {
                if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
            }
        }
        for (auto& name : names) {
            std::vector<const nlohmann::ordered_json*> cells;
            cells.reserve(doc.size());
            for (auto& row : doc) cells.push_back(row.contains(name) ? &row[name] : nullptr);
            DataType t = infer_json_type(cells);
            rel.add_column({name, t}, build_json_column(cells, t));
        }
        rel.row_count = doc.size();
        return rel;
    }
    if (doc.is_object()) {
        std::optional<size_t> length;
        for (auto& [k, v] : doc.items()) {
            if (!v.is_array()) throw LoadError(fmt::format("column-major JSON member '{}' is not an array", k));
            if (length && *length != v.size()) throw LoadError("column-major JSON arrays differ in length");
            length = v.size();
        }
        for (auto& [k, v] : doc.items()) {
            std::vector<const nlohmann::ordered_json*> cells;
            for (auto& c : v) cells.push_back(&c);
            DataType t = infer_json_type(cells);
            rel.add_column({k, t}, build_json_column(cells, t));
        }
        rel.row_count = length.value_or(0);
        return rel;
    }
    throw LoadError("unsupported JSON shape: expected an array of objects or an object of arrays");
}

Relation load_json(std::string_view text, const nlohmann::ordered_json& settings) {
    nlohmann::ordered_json doc;
    try {
        // key order matters for column order
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(fmt::format("invalid JSON: {}", e.what()));
    }
    if (settings.is_object() && settings.contains("jmespath")) {
        auto expr = settings["jmespath"].get<std::string>();
        auto transform = compile_jmespath(expr);
        if (!transform) throw LoadError(fmt::format("unsupported jmespath expression '{}'", expr));
        doc = (*transform)(doc);
    }
    return relation_from_json(doc);
}

}  // namespace dashql
