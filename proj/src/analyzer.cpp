#include "dashql/analyzer.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>

#include <fmt/format.h>

namespace dashql {

std::string_view to_string(VizKind k) {
    switch (k) {
        case VizKind::TABLE: return "TABLE";
        case VizKind::LINE: return "LINE";
        case VizKind::MULTI_LINE: return "MULTI_LINE";
        case VizKind::BAR: return "BAR";
        case VizKind::STACKED_BAR: return "STACKED_BAR";
        case VizKind::AREA: return "AREA";
        case VizKind::STACKED_AREA: return "STACKED_AREA";
        case VizKind::SCATTER: return "SCATTER";
    }
    return "?";
}

namespace {

void collect_relations(const AstArena& a, uint32_t idx, std::set<std::string>& out) {
    const AstNode& n = a.node(idx);
    if (n.node_type == NodeType::REL_NAME) {
        if (auto name = a.find_child(idx, AttrKey::NAME)) out.insert(a.name_value(*name));
        return;
    }
    for (uint32_t i = 0; i < n.children_count(); ++i) collect_relations(a, n.children_begin() + i, out);
}

void collect_inputs(const AstArena& a, uint32_t idx, std::set<std::string>& out) {
    const AstNode& n = a.node(idx);
    if (n.node_type == NodeType::COLUMN_REF) {
        auto q = a.find_child(idx, AttrKey::QUALIFIER);
        if (q && a.name_value(*q) == "main") out.insert(a.name_value(*a.find_child(idx, AttrKey::NAME)));
        return;
    }
    for (uint32_t i = 0; i < n.children_count(); ++i) collect_inputs(a, n.children_begin() + i, out);
}

// Unqualified names tested with IS [NOT] NULL. When such a name is a declared input it
// refers to the input, which makes `(x IS NULL OR col = main.x)` an optional filter.
void collect_null_tested(const AstArena& a, uint32_t idx, std::set<std::string>& out) {
    const AstNode& n = a.node(idx);
    if (n.node_type == NodeType::EXPR_UNARY) {
        auto op = static_cast<UnaryOp>(a.int_value(*a.find_child(idx, AttrKey::OPERATOR)));
        uint32_t arg = *a.find_child(idx, AttrKey::EXPR);
        if ((op == UnaryOp::IS_NULL || op == UnaryOp::IS_NOT_NULL) && a.node(arg).node_type == NodeType::COLUMN_REF &&
            !a.find_child(arg, AttrKey::QUALIFIER)) {
            out.insert(a.name_value(*a.find_child(arg, AttrKey::NAME)));
            return;
        }
    }
    for (uint32_t i = 0; i < n.children_count(); ++i) collect_null_tested(a, n.children_begin() + i, out);
}

std::optional<VizKind> viz_kind_of(VizType type, const std::set<VizModifier>& mods) {
    auto only = [&](std::initializer_list<VizModifier> allowed) {
        return std::all_of(mods.begin(), mods.end(), [&](VizModifier m) { return std::find(allowed.begin(), allowed.end(), m) != allowed.end(); });
    };
    bool stacked = mods.count(VizModifier::STACKED) > 0;
    bool multi = mods.count(VizModifier::MULTI) > 0;
    switch (type) {
        case VizType::TABLE:
            if (mods.empty()) return VizKind::TABLE;
            break;
        case VizType::LINE:
            if (mods.empty()) return VizKind::LINE;
            if (multi && only({VizModifier::MULTI})) return VizKind::MULTI_LINE;
            break;
        case VizType::BAR:
            if (mods.empty()) return VizKind::BAR;
            if (stacked && only({VizModifier::STACKED})) return VizKind::STACKED_BAR;
            break;
        case VizType::AREA:
            if (mods.empty()) return VizKind::AREA;
            if (stacked && only({VizModifier::STACKED})) return VizKind::STACKED_AREA;
            break;
        case VizType::SCATTER:
            if (mods.empty()) return VizKind::SCATTER;
            break;
    }
    return std::nullopt;
}

/// Best-effort kind of a verbose specification, used by the optimizer passes.
VizKind verbose_kind(const nlohmann::ordered_json& spec) {
    std::string mark;
    if (spec.contains("mark")) {
        const auto& m = spec["mark"];
        if (m.is_string()) mark = m.get<std::string>();
        if (m.is_object() && m.contains("type") && m["type"].is_string()) mark = m["type"].get<std::string>();
    }
    bool color = spec.contains("encoding") && spec["encoding"].is_object() && spec["encoding"].contains("color");
    bool stacked = false;
    if (spec.contains("encoding") && spec["encoding"].is_object() && spec["encoding"].contains("y")) {
        const auto& y = spec["encoding"]["y"];
        stacked = y.is_object() && y.contains("stack") && !y["stack"].is_null() && y["stack"] != false;
    }
    if (mark == "line") return color ? VizKind::MULTI_LINE : VizKind::LINE;
    if (mark == "area") return stacked ? VizKind::STACKED_AREA : VizKind::AREA;
    if (mark == "bar") return stacked ? VizKind::STACKED_BAR : VizKind::BAR;
    if (mark == "point" || mark == "circle") return VizKind::SCATTER;
    return VizKind::TABLE;
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::set<std::string> referenced_relations(const AstArena& arena, uint32_t select) {
    std::set<std::string> out;
    collect_relations(arena, select, out);
    return out;
}

std::set<std::string> referenced_inputs(const AstArena& arena, uint32_t node) {
    std::set<std::string> out;
    collect_inputs(arena, node, out);
    return out;
}

std::vector<uint32_t> ProgramDescription::dependencies(uint32_t stmt) const {
    std::vector<uint32_t> out;
    for (auto& [p, c] : edges) {
        if (c == stmt) out.push_back(p);
    }
    return out;
}

std::vector<uint32_t> ProgramDescription::dependents(uint32_t stmt) const {
    std::vector<uint32_t> out;
    for (auto& [p, c] : edges) {
        if (p == stmt) out.push_back(c);
    }
    return out;
}

std::vector<uint32_t> ProgramDescription::topo_order() const {
    std::vector<uint32_t> indegree(statements.size(), 0);
    for (auto& [p, c] : edges) ++indegree[c];
    std::priority_queue<uint32_t, std::vector<uint32_t>, std::greater<>> ready;
    for (uint32_t i = 0; i < statements.size(); ++i) {
        if (indegree[i] == 0) ready.push(i);
    }
    std::vector<uint32_t> out;
    while (!ready.empty()) {
        uint32_t s = ready.top();
        ready.pop();
        out.push_back(s);
        for (auto& [p, c] : edges) {
            if (p == s && --indegree[c] == 0) ready.push(c);
        }
    }
    return out;
}

std::optional<uint32_t> ProgramDescription::producer_of(std::string_view name) const {
    for (uint32_t i = 0; i < statements.size(); ++i) {
        if (statements[i].produces && *statements[i].produces == name && !statements[i].blocked) return i;
    }
    for (uint32_t i = 0; i < statements.size(); ++i) {
        if (statements[i].produces && *statements[i].produces == name) return i;
    }
    return std::nullopt;
}

ProgramDescription analyze(const ParsedScript& script) {
    ProgramDescription desc;
    desc.arena = script.arena;
    desc.diagnostics = script.errors;
    const AstArena& a = *script.arena;

    auto error = [&](StatementDesc& s, SourceLoc loc, std::string message) {
        Diagnostic d{loc, std::move(message), {}};
        s.errors.push_back(d);
        s.blocked = true;
        desc.diagnostics.push_back(std::move(d));
    };

    std::map<std::string, int> inline_names;
    for (uint32_t si = 0; si < script.statements.size(); ++si) {
        const auto& info = script.statements[si];
        StatementDesc s;
        s.root = info.root;
        s.kind = info.kind;
        s.loc = info.loc;
        s.script_index = si;
        if (auto settings = a.find_child(info.root, AttrKey::SETTINGS)) s.settings = kv_to_json(a, *settings);
        auto name_of = [&](AttrKey key) -> std::optional<std::string> {
            auto c = a.find_child(info.root, key);
            if (!c) return std::nullopt;
            return a.name_value(*c);
        };
        switch (info.kind) {
            case StatementKind::SET: break;
            case StatementKind::INPUT:
                s.produces = name_of(AttrKey::NAME);
                s.input_type = static_cast<InputType>(a.int_value(*a.find_child(info.root, AttrKey::TYPE)));
                break;
            case StatementKind::FETCH:
                s.produces = name_of(AttrKey::NAME);
                if (auto scheme = a.find_child(info.root, AttrKey::SCHEME)) s.scheme = static_cast<FetchScheme>(a.int_value(*scheme));
                if (auto uri = a.find_child(info.root, AttrKey::URI)) {
                    s.uri = a.string_value(*uri);
                } else if (s.settings.contains("url") && s.settings["url"].is_string()) {
                    s.uri = s.settings["url"].get<std::string>();
                } else if (s.settings.contains("uri") && s.settings["uri"].is_string()) {
                    s.uri = s.settings["uri"].get<std::string>();
                } else {
                    error(s, info.loc, "FETCH requires a URI");
                }
                break;
            case StatementKind::LOAD:
                s.produces = name_of(AttrKey::NAME);
                s.consumes.insert(*name_of(AttrKey::SOURCE));
                if (auto fmt = a.find_child(info.root, AttrKey::FORMAT)) s.format = static_cast<LoadFormat>(a.int_value(*fmt));
                break;
            case StatementKind::CREATE_TABLE_AS:
            case StatementKind::CREATE_VIEW_AS:
                s.produces = name_of(AttrKey::NAME);
                s.query = *a.find_child(info.root, AttrKey::QUERY);
                s.consumes = referenced_relations(a, *s.query);
                s.input_refs = referenced_inputs(a, *s.query);
                break;
            case StatementKind::SELECT:
                s.query = info.root;
                s.consumes = referenced_relations(a, info.root);
                s.input_refs = referenced_inputs(a, info.root);
                break;
            case StatementKind::VISUALIZE: {
                auto target = *a.find_child(info.root, AttrKey::TARGET);
                if (a.node(target).node_type == NodeType::SELECT) {
                    // desugar into a synthetic view preceding the VISUALIZE
                    std::string normalized = print_node(a, target);
                    std::string name = fmt::format("__inline_{:016x}", fnv1a(normalized));
                    int dup = inline_names[name]++;
                    if (dup > 0) name += fmt::format("_{}", dup);
                    StatementDesc view;
                    view.root = target;
                    view.kind = StatementKind::CREATE_VIEW_AS;
                    view.loc = {a.node(target).loc_offset, a.node(target).loc_length};
                    view.script_index = si;
                    view.synthetic = true;
                    view.produces = name;
                    view.query = target;
                    view.consumes = referenced_relations(a, target);
                    view.input_refs = referenced_inputs(a, target);
                    desc.statements.push_back(std::move(view));
                    s.consumes.insert(name);
                } else {
                    s.consumes.insert(a.name_value(target));
                }
                if (auto type = a.find_child(info.root, AttrKey::VIZ_TYPE)) {
                    std::set<VizModifier> mods;
                    if (auto m = a.find_child(info.root, AttrKey::VIZ_MODIFIERS)) {
                        const AstNode& mn = a.node(*m);
                        for (uint32_t i = 0; i < mn.children_count(); ++i) mods.insert(static_cast<VizModifier>(a.int_value(mn.children_begin() + i)));
                    }
                    s.viz_kind = viz_kind_of(static_cast<VizType>(a.int_value(*type)), mods);
                    if (!s.viz_kind) {
                        auto m = a.find_child(info.root, AttrKey::VIZ_MODIFIERS);
                        const AstNode& n = a.node(m ? *m : *type);
                        error(s, {n.loc_offset, n.loc_length}, "unsupported visualization modifier combination");
                    }
                } else {
                    s.viz_verbose = true;
                    s.viz_kind = verbose_kind(s.settings);
                }
                break;
            }
        }
        desc.statements.push_back(std::move(s));
    }

    // name resolution
    std::map<std::string, uint32_t> producers;
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        auto& s = desc.statements[i];
        if (!s.produces) continue;
        auto [it, inserted] = producers.emplace(*s.produces, i);
        if (!inserted) error(s, s.loc, fmt::format("'{}' is already defined by an earlier statement", *s.produces));
    }
    std::set<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        auto& s = desc.statements[i];
        if (s.query) {
            std::set<std::string> tested;
            collect_null_tested(a, *s.query, tested);
            for (const auto& name : tested) {
                auto it = producers.find(name);
                if (it != producers.end() && desc.statements[it->second].kind == StatementKind::INPUT) s.input_refs.insert(name);
            }
        }
        for (const auto& name : s.consumes) {
            auto it = producers.find(name);
            if (it == producers.end()) {
                error(s, s.loc, fmt::format("unresolved name '{}'", name));
                continue;
            }
            auto pk = desc.statements[it->second].kind;
            bool ok = s.kind == StatementKind::LOAD ? pk == StatementKind::FETCH
                                                    : (pk == StatementKind::LOAD || pk == StatementKind::CREATE_TABLE_AS || pk == StatementKind::CREATE_VIEW_AS);
            if (!ok) {
                error(s, s.loc, fmt::format("'{}' cannot be used here (it is produced by a {} statement)", name, to_string(pk)));
                continue;
            }
            if (it->second != i) edges.insert({it->second, i});
        }
        for (const auto& name : s.input_refs) {
            auto it = producers.find(name);
            if (it == producers.end() || desc.statements[it->second].kind != StatementKind::INPUT) {
                error(s, s.loc, fmt::format("unresolved input 'main.{}'", name));
                continue;
            }
            edges.insert({it->second, i});
        }
    }
    // SET statements configure every visualization
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        if (desc.statements[i].kind != StatementKind::SET) continue;
        for (uint32_t j = 0; j < desc.statements.size(); ++j) {
            if (desc.statements[j].kind == StatementKind::VISUALIZE) edges.insert({i, j});
        }
    }
    desc.edges.assign(edges.begin(), edges.end());

    // cycle detection: statements left out of the topological order sit on or behind a cycle
    auto order = desc.topo_order();
    if (order.size() != desc.statements.size()) {
        std::vector<bool> placed(desc.statements.size(), false);
        for (auto s : order) placed[s] = true;
        for (uint32_t i = 0; i < desc.statements.size(); ++i) {
            if (!placed[i]) error(desc.statements[i], desc.statements[i].loc, "cyclic dependency");
        }
        desc.edges.erase(std::remove_if(desc.edges.begin(), desc.edges.end(), [&](auto& e) { return !placed[e.first] && !placed[e.second]; }),
                         desc.edges.end());
    }
    return desc;
}

std::string to_dot(const ProgramDescription& desc) {
    std::string out = "digraph dashql {\n";
    for (uint32_t i = 0; i < desc.statements.size(); ++i) {
        const auto& s = desc.statements[i];
        std::string label = fmt::format("{}: {}", i, to_string(s.kind));
        if (s.produces) label += " " + *s.produces;
        if (s.kind == StatementKind::VISUALIZE && s.viz_kind) label += fmt::format(" {}", to_string(*s.viz_kind));
        out += fmt::format("  s{} [label=\"{}\"{}];\n", i, label, s.blocked ? ", color=red" : "");
    }
    for (auto& [p, c] : desc.edges) out += fmt::format("  s{} -> s{};\n", p, c);
    out += "}\n";
    return out;
}

}  // namespace dashql
