#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dashql {

enum class NodeType : uint8_t {
    NONE = 0,
    // statements
    STMT_SET,
    STMT_INPUT,
    STMT_FETCH,
    STMT_LOAD,
    STMT_VISUALIZE,
    STMT_CREATE_TABLE,
    STMT_CREATE_VIEW,
    SELECT,  // both a statement root and a nested query
    // clause and structure nodes
    REL_NAME,
    SUBQUERY,
    RESULT_TARGET,
    ORDER_ITEM,
    KV_PAIR,
    KEY_PATH,
    ARRAY,
    OBJECT,
    // expressions
    COLUMN_REF,
    STAR,
    EXPR_BINARY,
    EXPR_UNARY,
    EXPR_FUNCTION,
    EXPR_CAST,
    // leaves
    NAME,
    STRING,
    INTEGER,
    FLOAT,
    BOOL,
    NULL_LITERAL,
    ENUM,
    LIT_TIMESTAMP,
    LIT_INTERVAL,
};

/// Role of a node under its parent. Values must stay below 64 (6 bits).
enum class AttrKey : uint8_t {
    NONE = 0,
    NAME,
    QUALIFIER,
    TYPE,
    COMPONENT,
    URI,
    SCHEME,
    SOURCE,
    FORMAT,
    TARGET,
    VIZ_MODIFIERS,
    VIZ_TYPE,
    QUERY,
    DISTINCT,
    TARGETS,
    FROM,
    WHERE,
    GROUP_BY,
    ORDER_BY,
    LIMIT,
    OFFSET,
    EXPR,
    ALIAS,
    DIRECTION,
    NULLS_FIRST,
    OPERATOR,
    LEFT,
    RIGHT,
    FUNCTION,
    ARGS,
    KEY,
    VALUE,
    UNIT,
    SETTINGS,
    COUNT_,
};
static_assert(static_cast<unsigned>(AttrKey::COUNT_) <= 64);

enum class PayloadKind : uint8_t { None = 0, Value = 1, Children = 2, SideTable = 3 };

// Enum payload domains; which one applies is implied by the attribute key.
enum class BinaryOp : uint8_t { ADD, SUB, MUL, DIV, MOD, EQ, NE, LT, LE, GT, GE, AND, OR, CONCAT };
enum class UnaryOp : uint8_t { NOT, NEG, IS_NULL, IS_NOT_NULL };
enum class VizModifier : uint8_t { STACKED, MULTI, GROUPED, COLORED };
enum class VizType : uint8_t { TABLE, LINE, BAR, AREA, SCATTER };
enum class LoadFormat : uint8_t { CSV, JSON, PARQUET, RGF };
enum class FetchScheme : uint8_t { URI, HTTP, HTTPS, FILE, TEST };
enum class InputType : uint8_t { BOOLEAN, BIGINT, DOUBLE, VARCHAR, TIMESTAMP, INTERVAL, FILE };

std::string_view to_string(NodeType t);
std::string_view to_string(AttrKey k);
std::string_view to_string(BinaryOp op);
std::string_view to_string(UnaryOp op);
std::string_view to_string(VizModifier m);
std::string_view to_string(VizType t);
std::string_view to_string(LoadFormat f);
std::string_view to_string(FetchScheme s);
std::string_view to_string(InputType t);

/// One syntax node, exactly 20 bytes.
///
/// Byte layout: loc_offset u32 @0, loc_length u32 @4, node_type u8 @8,
/// key_and_kind u8 @9 (low 6 bits attribute key, high 2 bits payload kind),
/// payload_hi u16 @10, parent u32 @12, payload_lo u32 @16.
/// Children payload: begin = payload_lo, count = payload_hi.
/// Value payload: 48-bit two's complement integer split over payload_hi:payload_lo.
/// SideTable payload: index into the arena's side table in payload_lo.
struct AstNode {
    uint32_t loc_offset = 0;
    uint32_t loc_length = 0;
    NodeType node_type = NodeType::NONE;
    uint8_t key_and_kind = 0;
    uint16_t payload_hi = 0;
    uint32_t parent = 0;
    uint32_t payload_lo = 0;

    AttrKey key() const { return static_cast<AttrKey>(key_and_kind & 0x3F); }
    PayloadKind payload_kind() const { return static_cast<PayloadKind>(key_and_kind >> 6); }
    void set_key(AttrKey k) { key_and_kind = static_cast<uint8_t>((key_and_kind & 0xC0) | (static_cast<uint8_t>(k) & 0x3F)); }
    void set_payload_kind(PayloadKind p) { key_and_kind = static_cast<uint8_t>((key_and_kind & 0x3F) | (static_cast<uint8_t>(p) << 6)); }

    uint32_t children_begin() const { return payload_lo; }
    uint16_t children_count() const { return payload_kind() == PayloadKind::Children ? payload_hi : 0; }
    int64_t inline_value() const;
    void set_inline_value(int64_t v);
};
static_assert(sizeof(AstNode) == 20, "AstNode must be exactly 20 bytes");
static_assert(offsetof(AstNode, parent) == 12 && offsetof(AstNode, payload_lo) == 16);

constexpr int64_t kInlineValueMin = -(int64_t{1} << 47);
constexpr int64_t kInlineValueMax = (int64_t{1} << 47) - 1;

struct SourceLoc {
    uint32_t offset = 0;
    uint32_t length = 0;
    uint32_t end() const { return offset + length; }
};

/// Side-table entry for payloads that do not fit inline.
struct SideValue {
    bool is_double = false;
    int64_t i = 0;
    double d = 0;
};

/// Flat post-order buffer of syntax nodes over a script text.
class AstArena {
public:
    explicit AstArena(std::string text = {}) : text_(std::move(text)) {}

    const std::string& text() const { return text_; }
    size_t size() const { return nodes_.size(); }
    const AstNode& node(uint32_t idx) const { return nodes_.at(idx); }
    const std::vector<AstNode>& nodes() const { return nodes_; }
    std::span<const AstNode> children(uint32_t idx) const;

    /// Binary search over the sorted children span.
    std::optional<uint32_t> find_child(uint32_t idx, AttrKey key) const;
    std::string_view node_text(uint32_t idx) const;

    int64_t int_value(uint32_t idx) const;
    double double_value(uint32_t idx) const;
    /// Unquoted string content of a STRING or quoted NAME node with escapes resolved.
    std::string string_value(uint32_t idx) const;
    /// Identifier value: quoted names keep case, bare names are lower-cased.
    std::string name_value(uint32_t idx) const;

    // Construction. Nodes are built bottom-up as detached values; a node's children are
    // appended to the buffer (stable-sorted by key) only when the node itself is made, so
    // every children span is contiguous and precedes its parent.
    AstNode make_leaf(NodeType type, AttrKey key, SourceLoc loc) const;
    AstNode make_value(NodeType type, AttrKey key, SourceLoc loc, int64_t value);
    AstNode make_double(NodeType type, AttrKey key, SourceLoc loc, double value);
    AstNode make_parent(NodeType type, AttrKey key, SourceLoc loc, std::vector<AstNode> children);
    /// Appends a node and points its children at it; returns its index. A node pushed
    /// without a later parent (a statement root) becomes its own parent.
    uint32_t push_node(const AstNode& node);

    struct Checkpoint {
        size_t nodes = 0;
        size_t side = 0;
    };
    Checkpoint checkpoint() const { return {nodes_.size(), side_.size()}; }
    /// Drops everything appended after the checkpoint; used for statement-level recovery.
    void rollback(Checkpoint cp);

    /// One line per node: `idx  type  key  parent  loc=[off,len)  payload`.
    std::string dump() const;
    /// Little-endian serialization of the node buffer.
    std::string serialize() const;

private:
    std::string text_;
    std::vector<AstNode> nodes_;
    std::vector<SideValue> side_;
};

/// Thrown when the arena exceeds its addressable limits.
struct ArenaOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dashql
