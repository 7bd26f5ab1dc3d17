#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dashql/ast.hpp"
#include "json.hpp"

namespace dashql {

// clang-format off
#define DASHQL_KEYWORDS(X) \
    X(SELECT, true) X(FROM, true) X(WHERE, true) X(GROUP, true) X(ORDER, true) X(BY, true) \
    X(LIMIT, true) X(OFFSET, true) X(AS, true) X(AND, true) X(OR, true) X(NOT, true) X(IS, true) \
    X(NULL_, true) X(TRUE_, true) X(FALSE_, true) X(USING, true) X(CREATE, true) X(SET, true) \
    X(INPUT, true) X(FETCH, true) X(LOAD, true) X(VISUALIZE, true) X(DISTINCT, true) X(ASC, true) \
    X(DESC, true) \
    X(TABLE, false) X(VIEW, false) X(TYPE, false) X(CAST, false) X(NULLS, false) X(FIRST, false) \
    X(LAST, false) X(TIMESTAMP, false) X(INTERVAL, false) X(BOOLEAN, false) X(BOOL, false) \
    X(BIGINT, false) X(INTEGER, false) X(INT, false) X(DOUBLE, false) X(FLOAT, false) X(VARCHAR, false) \
    X(TEXT, false) X(DATE, false) X(FILE, false) X(HTTP, false) X(HTTPS, false) X(TEST, false) \
    X(CSV, false) X(JSON, false) X(PARQUET, false) X(RGF, false) X(LINE, false) X(BAR, false) \
    X(AREA, false) X(SCATTER, false) X(CHART, false) X(STACKED, false) X(MULTI, false) \
    X(GROUPED, false) X(COLORED, false)
// clang-format on

enum class Keyword : uint8_t {
#define DASHQL_KW_ENUM(name, reserved) name,
    DASHQL_KEYWORDS(DASHQL_KW_ENUM)
#undef DASHQL_KW_ENUM
};

std::optional<Keyword> lookup_keyword(std::string_view word);
std::string_view keyword_text(Keyword kw);
bool is_reserved(Keyword kw);

enum class TokenType : uint8_t {
    IDENT,
    QUOTED_IDENT,  // "..."
    STRING,        // '...'
    INTEGER,
    FLOAT,
    KEYWORD,
    LPAREN,
    RPAREN,
    LBRACKET,
    RBRACKET,
    COMMA,
    SEMICOLON,
    DOT,
    EQ,
    NE,
    LT,
    LE,
    GT,
    GE,
    PLUS,
    MINUS,
    STAR,
    SLASH,
    PERCENT,
    CONCAT,
    DOUBLE_COLON,
    END,
};

std::string_view to_string(TokenType t);

struct Token {
    TokenType type = TokenType::END;
    Keyword keyword = Keyword::SELECT;  // valid iff type == KEYWORD
    SourceLoc loc;
};

struct Diagnostic {
    SourceLoc loc;
    std::string message;
    std::vector<std::string> expected;
};

struct TokenStream {
    std::vector<Token> tokens;  // always terminated by END
    std::vector<Diagnostic> errors;
};

/// Keywords are case-insensitive; `--` and `/* */` comments are skipped.
TokenStream tokenize(std::string_view script);

enum class StatementKind : uint8_t { SET, INPUT, FETCH, LOAD, VISUALIZE, CREATE_TABLE_AS, CREATE_VIEW_AS, SELECT };
std::string_view to_string(StatementKind k);

struct StatementInfo {
    uint32_t root = 0;
    StatementKind kind = StatementKind::SELECT;
    SourceLoc loc;  // first token through the terminating semicolon
};

struct ParsedScript {
    std::shared_ptr<const AstArena> arena;
    std::vector<StatementInfo> statements;
    std::vector<Diagnostic> errors;

    const std::string& text() const { return arena->text(); }
};

/// Parses a whole script. Statements with syntax errors are reported in `errors` and
/// dropped; parsing resumes after the next semicolon.
ParsedScript parse_script(std::string script);

/// Re-emits a subtree as normalized DashQL text (single spaces, upper-case keywords).
std::string print_node(const AstArena& arena, uint32_t node);
std::string print_script(const ParsedScript& script);

/// Converts a key-value list OBJECT node (or any value node) into JSON. Keys are
/// lower-cased unless quoted; dotted keys expand into nested objects.
nlohmann::ordered_json kv_to_json(const AstArena& arena, uint32_t node);

}  // namespace dashql
