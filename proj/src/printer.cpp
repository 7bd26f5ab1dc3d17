#include <fmt/format.h>

#include "dashql/parser.hpp"
#include "dashql/value.hpp"

namespace dashql {

namespace {

class Printer {
public:
    explicit Printer(const AstArena& arena) : a_(arena) {}

    std::string print(uint32_t idx) {
        const AstNode& n = a_.node(idx);
        switch (n.node_type) {
            case NodeType::STMT_SET: return "SET " + print_child(idx, AttrKey::SETTINGS);
            case NodeType::STMT_INPUT: {
                std::string out = fmt::format("INPUT {} TYPE {}", print_child(idx, AttrKey::NAME),
                                              to_string(static_cast<InputType>(int_child(idx, AttrKey::TYPE))));
                if (a_.find_child(idx, AttrKey::COMPONENT)) out += " USING " + print_child(idx, AttrKey::COMPONENT);
                if (a_.find_child(idx, AttrKey::SETTINGS)) out += " " + print_child(idx, AttrKey::SETTINGS);
                return out;
            }
            case NodeType::STMT_FETCH: {
                std::string out = "FETCH " + print_child(idx, AttrKey::NAME) + " FROM";
                if (a_.find_child(idx, AttrKey::SCHEME)) {
                    out += fmt::format(" {}", to_string(static_cast<FetchScheme>(int_child(idx, AttrKey::SCHEME))));
                }
                if (a_.find_child(idx, AttrKey::URI)) out += " " + print_child(idx, AttrKey::URI);
                if (a_.find_child(idx, AttrKey::SETTINGS)) out += " " + print_child(idx, AttrKey::SETTINGS);
                return out;
            }
            case NodeType::STMT_LOAD: {
                std::string out = fmt::format("LOAD {} FROM {}", print_child(idx, AttrKey::NAME), print_child(idx, AttrKey::SOURCE));
                if (a_.find_child(idx, AttrKey::FORMAT)) {
                    out += fmt::format(" USING {}", to_string(static_cast<LoadFormat>(int_child(idx, AttrKey::FORMAT))));
                }
                if (a_.find_child(idx, AttrKey::SETTINGS)) out += " " + print_child(idx, AttrKey::SETTINGS);
                return out;
            }
            case NodeType::STMT_VISUALIZE: {
                std::string out = "VISUALIZE ";
                auto target = *a_.find_child(idx, AttrKey::TARGET);
                if (a_.node(target).node_type == NodeType::SELECT) {
                    out += "(" + print(target) + ")";
                } else {
                    out += print(target);
                }
                out += " USING";
                if (auto mods = a_.find_child(idx, AttrKey::VIZ_MODIFIERS)) {
                    for (uint32_t i = 0; i < a_.node(*mods).children_count(); ++i) {
                        out += fmt::format(" {}", to_string(static_cast<VizModifier>(a_.int_value(a_.node(*mods).children_begin() + i))));
                    }
                }
                if (a_.find_child(idx, AttrKey::VIZ_TYPE)) {
                    out += fmt::format(" {}", to_string(static_cast<VizType>(int_child(idx, AttrKey::VIZ_TYPE))));
                }
                if (a_.find_child(idx, AttrKey::SETTINGS)) out += " " + print_child(idx, AttrKey::SETTINGS);
                return out;
            }
            case NodeType::STMT_CREATE_TABLE:
            case NodeType::STMT_CREATE_VIEW:
                return fmt::format("CREATE {} {} AS {}", n.node_type == NodeType::STMT_CREATE_TABLE ? "TABLE" : "VIEW",
                                   print_child(idx, AttrKey::NAME), print_child(idx, AttrKey::QUERY));
            case NodeType::SELECT: return print_select(idx);
            case NodeType::REL_NAME:
            case NodeType::SUBQUERY: {
                std::string out = n.node_type == NodeType::SUBQUERY ? "(" + print_child(idx, AttrKey::QUERY) + ")" : print_child(idx, AttrKey::NAME);
                if (a_.find_child(idx, AttrKey::ALIAS)) out += " AS " + print_child(idx, AttrKey::ALIAS);
                return out;
            }
            case NodeType::RESULT_TARGET: {
                std::string out = print_child(idx, AttrKey::EXPR);
                if (a_.find_child(idx, AttrKey::ALIAS)) out += " AS " + print_child(idx, AttrKey::ALIAS);
                return out;
            }
            case NodeType::ORDER_ITEM: {
                std::string out = print_child(idx, AttrKey::EXPR);
                if (a_.find_child(idx, AttrKey::DIRECTION)) out += int_child(idx, AttrKey::DIRECTION) ? " DESC" : " ASC";
                if (a_.find_child(idx, AttrKey::NULLS_FIRST)) out += int_child(idx, AttrKey::NULLS_FIRST) ? " NULLS FIRST" : " NULLS LAST";
                return out;
            }
            case NodeType::OBJECT: {
                std::string out = "(";
                auto kids = a_.children(idx);
                for (uint32_t i = 0; i < kids.size(); ++i) {
                    if (i) out += ", ";
                    out += print(n.children_begin() + i);
                }
                return out + ")";
            }
            case NodeType::KV_PAIR: return print_child(idx, AttrKey::KEY) + " = " + print_child(idx, AttrKey::VALUE);
            case NodeType::KEY_PATH: return join_children(idx, ".");
            case NodeType::ARRAY: {
                // value arrays inside key-value lists
                return "[" + join_children(idx, ", ") + "]";
            }
            case NodeType::COLUMN_REF: {
                if (a_.find_child(idx, AttrKey::QUALIFIER)) return print_child(idx, AttrKey::QUALIFIER) + "." + print_child(idx, AttrKey::NAME);
                return print_child(idx, AttrKey::NAME);
            }
            case NodeType::STAR: return "*";
            case NodeType::EXPR_BINARY: {
                auto op = static_cast<BinaryOp>(int_child(idx, AttrKey::OPERATOR));
                return fmt::format("{} {} {}", operand(*a_.find_child(idx, AttrKey::LEFT)), to_string(op),
                                   operand(*a_.find_child(idx, AttrKey::RIGHT)));
            }
            case NodeType::EXPR_UNARY: {
                auto op = static_cast<UnaryOp>(int_child(idx, AttrKey::OPERATOR));
                auto e = operand(*a_.find_child(idx, AttrKey::EXPR));
                switch (op) {
                    case UnaryOp::NOT: return "NOT " + e;
                    case UnaryOp::NEG: return "-" + e;
                    case UnaryOp::IS_NULL: return e + " IS NULL";
                    case UnaryOp::IS_NOT_NULL: return e + " IS NOT NULL";
                }
                return e;
            }
            case NodeType::EXPR_FUNCTION: {
                std::string out = print_child(idx, AttrKey::FUNCTION) + "(";
                if (a_.find_child(idx, AttrKey::DISTINCT)) out += "DISTINCT ";
                out += join_children(*a_.find_child(idx, AttrKey::ARGS), ", ");
                return out + ")";
            }
            case NodeType::EXPR_CAST:
                return fmt::format("CAST({} AS {})", print_child(idx, AttrKey::EXPR),
                                   to_string(static_cast<DataType>(int_child(idx, AttrKey::TYPE))));
            case NodeType::LIT_TIMESTAMP: return "TIMESTAMP " + print_child(idx, AttrKey::VALUE);
            case NodeType::LIT_INTERVAL: {
                std::string out = "INTERVAL " + print_child(idx, AttrKey::VALUE);
                if (a_.find_child(idx, AttrKey::UNIT)) out += fmt::format(" {}", to_string(static_cast<TimeUnit>(int_child(idx, AttrKey::UNIT))));
                return out;
            }
            case NodeType::BOOL: return a_.int_value(idx) ? "true" : "false";
            case NodeType::NULL_LITERAL: return "NULL";
            case NodeType::INTEGER:
            case NodeType::FLOAT:
            case NodeType::NAME:
            case NodeType::STRING:
            case NodeType::ENUM:
            case NodeType::NONE: return std::string(a_.node_text(idx));
        }
        return std::string(a_.node_text(idx));
    }

private:
    std::string print_child(uint32_t idx, AttrKey key) {
        auto c = a_.find_child(idx, key);
        return c ? print(*c) : std::string{};
    }

    int64_t int_child(uint32_t idx, AttrKey key) {
        auto c = a_.find_child(idx, key);
        return c ? a_.int_value(*c) : 0;
    }

    std::string join_children(uint32_t idx, std::string_view sep) {
        std::string out;
        const AstNode& n = a_.node(idx);
        for (uint32_t i = 0; i < n.children_count(); ++i) {
            if (i) out += sep;
            out += print(n.children_begin() + i);
        }
        return out;
    }

    std::string operand(uint32_t idx) {
        auto t = a_.node(idx).node_type;
        if (t == NodeType::EXPR_BINARY || t == NodeType::EXPR_UNARY) return "(" + print(idx) + ")";
        return print(idx);
    }

    std::string print_select(uint32_t idx) {
        std::string out = "SELECT ";
        if (a_.find_child(idx, AttrKey::DISTINCT)) out += "DISTINCT ";
        out += join_children(*a_.find_child(idx, AttrKey::TARGETS), ", ");
        if (auto from = a_.find_child(idx, AttrKey::FROM)) out += " FROM " + join_children(*from, ", ");
        if (a_.find_child(idx, AttrKey::WHERE)) out += " WHERE " + print_child(idx, AttrKey::WHERE);
        if (auto g = a_.find_child(idx, AttrKey::GROUP_BY)) out += " GROUP BY " + join_children(*g, ", ");
        if (auto o = a_.find_child(idx, AttrKey::ORDER_BY)) out += " ORDER BY " + join_children(*o, ", ");
        if (a_.find_child(idx, AttrKey::LIMIT)) out += " LIMIT " + print_child(idx, AttrKey::LIMIT);
        if (a_.find_child(idx, AttrKey::OFFSET)) out += " OFFSET " + print_child(idx, AttrKey::OFFSET);
        return out;
    }

    const AstArena& a_;
};

void insert_path(nlohmann::ordered_json& obj, const std::vector<std::string>& path, nlohmann::ordered_json value) {
    nlohmann::ordered_json* cur = &obj;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        auto& next = (*cur)[path[i]];
        if (!next.is_object()) next = nlohmann::ordered_json::object();
        cur = &next;
    }
    auto& slot = (*cur)[path.back()];
    if (slot.is_object() && value.is_object()) {
        slot.update(value, true);
    } else {
        slot = std::move(value);
    }
}

}  // namespace

std::string print_node(const AstArena& arena, uint32_t node) { return Printer(arena).print(node); }

std::string print_script(const ParsedScript& script) {
    std::string out;
    for (const auto& s : script.statements) {
        out += print_node(*script.arena, s.root);
        out += ";\n";
    }
    return out;
}

nlohmann::ordered_json kv_to_json(const AstArena& arena, uint32_t idx) {
    const AstNode& n = arena.node(idx);
    switch (n.node_type) {
        case NodeType::OBJECT: {
            auto out = nlohmann::ordered_json::object();
            for (uint32_t i = 0; i < n.children_count(); ++i) {
                uint32_t pair = n.children_begin() + i;
                auto key = *arena.find_child(pair, AttrKey::KEY);
                auto value = *arena.find_child(pair, AttrKey::VALUE);
                std::vector<std::string> path;
                const AstNode& kn = arena.node(key);
                for (uint32_t j = 0; j < kn.children_count(); ++j) path.push_back(arena.name_value(kn.children_begin() + j));
                insert_path(out, path, kv_to_json(arena, value));
            }
            return out;
        }
        case NodeType::ARRAY: {
            auto out = nlohmann::ordered_json::array();
            for (uint32_t i = 0; i < n.children_count(); ++i) out.push_back(kv_to_json(arena, n.children_begin() + i));
            return out;
        }
        case NodeType::STRING: return arena.string_value(idx);
        case NodeType::INTEGER: return arena.int_value(idx);
        case NodeType::FLOAT: return arena.double_value(idx);
        case NodeType::BOOL: return arena.int_value(idx) != 0;
        case NodeType::NULL_LITERAL: return nullptr;
        case NodeType::NAME: return arena.name_value(idx);
        case NodeType::EXPR_UNARY: {
            // negative numeric literals
            auto op = arena.find_child(idx, AttrKey::OPERATOR);
            auto operand = arena.find_child(idx, AttrKey::EXPR);
            if (op && operand && static_cast<UnaryOp>(arena.int_value(*op)) == UnaryOp::NEG) {
                auto type = arena.node(*operand).node_type;
                if (type == NodeType::INTEGER) return -arena.int_value(*operand);
                if (type == NodeType::FLOAT) return -arena.double_value(*operand);
            }
            return print_node(arena, idx);
        }
        default: return print_node(arena, idx);
    }
}

}  // namespace dashql
