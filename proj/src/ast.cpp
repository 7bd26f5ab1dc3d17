#include "dashql/ast.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include <fmt/format.h>

namespace dashql {

std::string_view to_string(NodeType t) {
    switch (t) {
        case NodeType::NONE: return "NONE";
        case NodeType::STMT_SET: return "STMT_SET";
        case NodeType::STMT_INPUT: return "STMT_INPUT";
        case NodeType::STMT_FETCH: return "STMT_FETCH";
        case NodeType::STMT_LOAD: return "STMT_LOAD";
        case NodeType::STMT_VISUALIZE: return "STMT_VISUALIZE";
        case NodeType::STMT_CREATE_TABLE: return "STMT_CREATE_TABLE";
        case NodeType::STMT_CREATE_VIEW: return "STMT_CREATE_VIEW";
        case NodeType::SELECT: return "SELECT";
        case NodeType::REL_NAME: return "REL_NAME";
        case NodeType::SUBQUERY: return "SUBQUERY";
        case NodeType::RESULT_TARGET: return "RESULT_TARGET";
        case NodeType::ORDER_ITEM: return "ORDER_ITEM";
        case NodeType::KV_PAIR: return "KV_PAIR";
        case NodeType::KEY_PATH: return "KEY_PATH";
        case NodeType::ARRAY: return "ARRAY";
        case NodeType::OBJECT: return "OBJECT";
        case NodeType::COLUMN_REF: return "COLUMN_REF";
        case NodeType::STAR: return "STAR";
        case NodeType::EXPR_BINARY: return "EXPR_BINARY";
        case NodeType::EXPR_UNARY: return "EXPR_UNARY";
        case NodeType::EXPR_FUNCTION: return "EXPR_FUNCTION";
        case NodeType::EXPR_CAST: return "EXPR_CAST";
        case NodeType::NAME: return "NAME";
        case NodeType::STRING: return "STRING";
        case NodeType::INTEGER: return "INTEGER";
        case NodeType::FLOAT: return "FLOAT";
        case NodeType::BOOL: return "BOOL";
        case NodeType::NULL_LITERAL: return "NULL";
        case NodeType::ENUM: return "ENUM";
        case NodeType::LIT_TIMESTAMP: return "LIT_TIMESTAMP";
        case NodeType::LIT_INTERVAL: return "LIT_INTERVAL";
    }
    return "?";
}

std::string_view to_string(AttrKey k) {
    static constexpr std::string_view names[] = {
        "NONE",     "NAME",   "QUALIFIER", "TYPE",     "COMPONENT", "URI",       "SCHEME", "SOURCE",   "FORMAT",
        "TARGET",   "VIZ_MODIFIERS", "VIZ_TYPE", "QUERY", "DISTINCT", "TARGETS", "FROM",   "WHERE",    "GROUP_BY",
        "ORDER_BY", "LIMIT",  "OFFSET",    "EXPR",     "ALIAS",     "DIRECTION", "NULLS_FIRST", "OPERATOR", "LEFT",
        "RIGHT",    "FUNCTION", "ARGS",    "KEY",      "VALUE",     "UNIT",      "SETTINGS",
    };
    auto i = static_cast<size_t>(k);
    return i < std::size(names) ? names[i] : "?";
}

std::string_view to_string(BinaryOp op) {
    static constexpr std::string_view names[] = {"+", "-", "*", "/", "%", "=", "<>", "<", "<=", ">", ">=", "AND", "OR", "||"};
    return names[static_cast<size_t>(op)];
}

std::string_view to_string(UnaryOp op) {
    static constexpr std::string_view names[] = {"NOT", "-", "IS NULL", "IS NOT NULL"};
    return names[static_cast<size_t>(op)];
}

std::string_view to_string(VizModifier m) {
    static constexpr std::string_view names[] = {"STACKED", "MULTI", "GROUPED", "COLORED"};
    return names[static_cast<size_t>(m)];
}

std::string_view to_string(VizType t) {
    static constexpr std::string_view names[] = {"TABLE", "LINE", "BAR", "AREA", "SCATTER"};
    return names[static_cast<size_t>(t)];
}

std::string_view to_string(LoadFormat f) {
    static constexpr std::string_view names[] = {"CSV", "JSON", "PARQUET", "RGF"};
    return names[static_cast<size_t>(f)];
}

std::string_view to_string(FetchScheme s) {
    static constexpr std::string_view names[] = {"URI", "HTTP", "HTTPS", "FILE", "TEST"};
    return names[static_cast<size_t>(s)];
}

std::string_view to_string(InputType t) {
    static constexpr std::string_view names[] = {"BOOLEAN", "BIGINT", "DOUBLE", "VARCHAR", "TIMESTAMP", "INTERVAL", "FILE"};
    return names[static_cast<size_t>(t)];
}

int64_t AstNode::inline_value() const {
    uint64_t raw = (static_cast<uint64_t>(payload_hi) << 32) | payload_lo;
    // sign-extend from 48 bits
    if (raw & (uint64_t{1} << 47)) raw |= ~((uint64_t{1} << 48) - 1);
    return static_cast<int64_t>(raw);
}

void AstNode::set_inline_value(int64_t v) {
    auto raw = static_cast<uint64_t>(v);
    payload_lo = static_cast<uint32_t>(raw);
    payload_hi = static_cast<uint16_t>(raw >> 32);
    set_payload_kind(PayloadKind::Value);
}

std::span<const AstNode> AstArena::children(uint32_t idx) const {
    const auto& n = nodes_.at(idx);
    if (n.payload_kind() != PayloadKind::Children) return {};
    return {nodes_.data() + n.children_begin(), n.children_count()};
}

std::optional<uint32_t> AstArena::find_child(uint32_t idx, AttrKey key) const {
    const auto& n = nodes_.at(idx);
    if (n.payload_kind() != PayloadKind::Children) return std::nullopt;
    auto begin = nodes_.begin() + n.children_begin();
    auto end = begin + n.children_count();
    auto it = std::lower_bound(begin, end, key, [](const AstNode& c, AttrKey k) { return c.key() < k; });
    if (it == end || it->key() != key) return std::nullopt;
    return static_cast<uint32_t>(it - nodes_.begin());
}

std::string_view AstArena::node_text(uint32_t idx) const {
    const auto& n = nodes_.at(idx);
    return std::string_view(text_).substr(n.loc_offset, n.loc_length);
}

int64_t AstArena::int_value(uint32_t idx) const {
    const auto& n = nodes_.at(idx);
    switch (n.payload_kind()) {
        case PayloadKind::Value: return n.inline_value();
        case PayloadKind::SideTable: {
            const auto& s = side_.at(n.payload_lo);
            return s.is_double ? static_cast<int64_t>(s.d) : s.i;
        }
        default: return 0;
    }
}

double AstArena::double_value(uint32_t idx) const {
    const auto& n = nodes_.at(idx);
    if (n.payload_kind() == PayloadKind::SideTable) {
        const auto& s = side_.at(n.payload_lo);
        return s.is_double ? s.d : static_cast<double>(s.i);
    }
    return static_cast<double>(int_value(idx));
}

std::string AstArena::string_value(uint32_t idx) const {
    auto text = node_text(idx);
    if (text.size() < 2) return std::string(text);
    char q = text.front();
    if ((q != '\'' && q != '"') || text.back() != q) return std::string(text);
    std::string out;
    out.reserve(text.size() - 2);
    for (size_t i = 1; i + 1 < text.size(); ++i) {
        out += text[i];
        if (text[i] == q && i + 2 < text.size() && text[i + 1] == q) ++i;
    }
    return out;
}

std::string AstArena::name_value(uint32_t idx) const {
    auto text = node_text(idx);
    if (!text.empty() && (text.front() == '"' || text.front() == '\'')) return string_value(idx);
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

AstNode AstArena::make_leaf(NodeType type, AttrKey key, SourceLoc loc) const {
    AstNode n;
    n.loc_offset = loc.offset;
    n.loc_length = loc.length;
    n.node_type = type;
    n.set_key(key);
    n.set_payload_kind(PayloadKind::None);
    return n;
}

AstNode AstArena::make_value(NodeType type, AttrKey key, SourceLoc loc, int64_t value) {
    AstNode n = make_leaf(type, key, loc);
    if (value >= kInlineValueMin && value <= kInlineValueMax) {
        n.set_inline_value(value);
    } else {
        n.payload_lo = static_cast<uint32_t>(side_.size());
        n.set_payload_kind(PayloadKind::SideTable);
        side_.push_back(SideValue{false, value, 0});
    }
    return n;
}

AstNode AstArena::make_double(NodeType type, AttrKey key, SourceLoc loc, double value) {
    AstNode n = make_leaf(type, key, loc);
    n.payload_lo = static_cast<uint32_t>(side_.size());
    n.set_payload_kind(PayloadKind::SideTable);
    side_.push_back(SideValue{true, 0, value});
    return n;
}

AstNode AstArena::make_parent(NodeType type, AttrKey key, SourceLoc loc, std::vector<AstNode> children) {
    if (children.size() > std::numeric_limits<uint16_t>::max()) {
        throw ArenaOverflow(fmt::format("node has {} children, limit is 65535", children.size()));
    }
    std::stable_sort(children.begin(), children.end(), [](const AstNode& a, const AstNode& b) { return a.key() < b.key(); });
    auto begin = static_cast<uint32_t>(nodes_.size());
    for (auto& c : children) push_node(c);
    AstNode n = make_leaf(type, key, loc);
    n.payload_lo = begin;
    n.payload_hi = static_cast<uint16_t>(children.size());
    n.set_payload_kind(PayloadKind::Children);
    return n;
}

uint32_t AstArena::push_node(const AstNode& node) {
    if (nodes_.size() >= std::numeric_limits<uint32_t>::max()) throw ArenaOverflow("arena exceeds u32 node range");
    auto idx = static_cast<uint32_t>(nodes_.size());
    nodes_.push_back(node);
    nodes_.back().parent = idx;
    if (node.payload_kind() == PayloadKind::Children) {
        for (uint32_t i = 0; i < node.children_count(); ++i) nodes_[node.children_begin() + i].parent = idx;
    }
    return idx;
}

void AstArena::rollback(Checkpoint cp) {
    nodes_.resize(std::min(cp.nodes, nodes_.size()));
    side_.resize(std::min(cp.side, side_.size()));
}

std::string AstArena::dump() const {
    std::string out;
    for (uint32_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        std::string payload;
        switch (n.payload_kind()) {
            case PayloadKind::None: payload = "-"; break;
            case PayloadKind::Value: payload = fmt::format("value={}", n.inline_value()); break;
            case PayloadKind::Children: payload = fmt::format("children=[{},{})", n.children_begin(), n.children_begin() + n.children_count()); break;
            case PayloadKind::SideTable: {
                const auto& s = side_[n.payload_lo];
                payload = s.is_double ? fmt::format("side={}", s.d) : fmt::format("side={}", s.i);
                break;
            }
        }
        out += fmt::format("{}  {}  {}  {}  loc=[{},{})  {}\n", i, to_string(n.node_type), to_string(n.key()), n.parent,
                           n.loc_offset, n.loc_offset + n.loc_length, payload);
    }
    return out;
}

std::string AstArena::serialize() const {
    std::string out(nodes_.size() * sizeof(AstNode), '\0');
    auto put32 = [](char* p, uint32_t v) {
        for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    };
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        char* p = out.data() + i * sizeof(AstNode);
        put32(p, n.loc_offset);
        put32(p + 4, n.loc_length);
        p[8] = static_cast<char>(n.node_type);
        p[9] = static_cast<char>(n.key_and_kind);
        p[10] = static_cast<char>(n.payload_hi & 0xFF);
        p[11] = static_cast<char>(n.payload_hi >> 8);
        put32(p + 12, n.parent);
        put32(p + 16, n.payload_lo);
    }
    return out;
}

}  // namespace dashql
