#include "dashql/parser.hpp"

#include <charconv>

#include <fmt/format.h>

#include "dashql/value.hpp"

namespace dashql {

std::string_view to_string(StatementKind k) {
    switch (k) {
        case StatementKind::SET: return "SET";
        case StatementKind::INPUT: return "INPUT";
        case StatementKind::FETCH: return "FETCH";
        case StatementKind::LOAD: return "LOAD";
        case StatementKind::VISUALIZE: return "VISUALIZE";
        case StatementKind::CREATE_TABLE_AS: return "CREATE_TABLE_AS";
        case StatementKind::CREATE_VIEW_AS: return "CREATE_VIEW_AS";
        case StatementKind::SELECT: return "SELECT";
    }
    return "?";
}

namespace {

struct ParseError {
    Diagnostic diag;
};

bool is_statement_start(const Token& t) {
    if (t.type != TokenType::KEYWORD) return false;
    switch (t.keyword) {
        case Keyword::SET:
        case Keyword::INPUT:
        case Keyword::FETCH:
        case Keyword::LOAD:
        case Keyword::VISUALIZE:
        case Keyword::CREATE:
        case Keyword::SELECT: return true;
        default: return false;
    }
}

std::optional<DataType> keyword_data_type(Keyword kw) {
    switch (kw) {
        case Keyword::BOOLEAN:
        case Keyword::BOOL: return DataType::Bool;
        case Keyword::BIGINT:
        case Keyword::INTEGER:
        case Keyword::INT: return DataType::BigInt;
        case Keyword::DOUBLE:
        case Keyword::FLOAT: return DataType::Double;
        case Keyword::VARCHAR:
        case Keyword::TEXT: return DataType::Varchar;
        case Keyword::TIMESTAMP:
        case Keyword::DATE: return DataType::Timestamp;
        case Keyword::INTERVAL: return DataType::Interval;
        default: return std::nullopt;
    }
}

class Parser {
public:
    Parser(AstArena& arena, const std::vector<Token>& tokens) : arena_(arena), tokens_(tokens) {}

    size_t pos() const { return pos_; }
    void seek(size_t p) { pos_ = p; }
    const Token& peek(size_t k = 0) const { return tokens_[std::min(pos_ + k, tokens_.size() - 1)]; }
    bool at(TokenType t, size_t k = 0) const { return peek(k).type == t; }
    bool at_kw(Keyword kw, size_t k = 0) const { return peek(k).type == TokenType::KEYWORD && peek(k).keyword == kw; }
    const Token& advance() {
        const Token& t = tokens_[pos_];
        if (pos_ + 1 < tokens_.size()) ++pos_;
        prev_end_ = t.loc.end();
        return t;
    }
    bool accept(TokenType t) {
        if (!at(t)) return false;
        advance();
        return true;
    }
    bool accept_kw(Keyword kw) {
        if (!at_kw(kw)) return false;
        advance();
        return true;
    }

    [[noreturn]] void fail(std::vector<std::string> expected, std::string message = {}) const {
        const Token& t = peek();
        if (message.empty()) {
            std::string got = t.type == TokenType::END ? "end of input" : fmt::format("'{}'", text(t));
            message = fmt::format("unexpected {}", got);
            if (!expected.empty()) message += fmt::format(", expected {}", fmt::join(expected, " or "));
        }
        throw ParseError{{t.loc, std::move(message), std::move(expected)}};
    }
    const Token& expect(TokenType type) {
        if (!at(type)) fail({std::string(to_string(type))});
        return advance();
    }
    const Token& expect_kw(Keyword kw) {
        if (!at_kw(kw)) fail({std::string(keyword_text(kw))});
        return advance();
    }

    std::string_view text(const Token& t) const { return std::string_view(arena_.text()).substr(t.loc.offset, t.loc.length); }
    SourceLoc span_from(uint32_t begin) const { return {begin, prev_end_ > begin ? prev_end_ - begin : 0}; }

    // ---- statements ----

    AstNode parse_statement(StatementKind& kind) {
        const Token& first = peek();
        if (first.type != TokenType::KEYWORD) fail({"statement"});
        switch (first.keyword) {
            case Keyword::SET: kind = StatementKind::SET; return parse_set();
            case Keyword::INPUT: kind = StatementKind::INPUT; return parse_input();
            case Keyword::FETCH: kind = StatementKind::FETCH; return parse_fetch();
            case Keyword::LOAD: kind = StatementKind::LOAD; return parse_load();
            case Keyword::VISUALIZE: kind = StatementKind::VISUALIZE; return parse_visualize();
            case Keyword::CREATE: return parse_create(kind);
            case Keyword::SELECT: kind = StatementKind::SELECT; return parse_select(AttrKey::NONE);
            default: fail({"SET", "INPUT", "FETCH", "LOAD", "VISUALIZE", "CREATE", "SELECT"});
        }
    }

    AstNode parse_set() {
        uint32_t begin = advance().loc.offset;
        std::vector<AstNode> children;
        if (at(TokenType::LPAREN)) {
            children.push_back(parse_kv_list(AttrKey::SETTINGS));
        } else {
            AstNode pair = parse_kv_pair();
            std::vector<AstNode> pairs{pair};
            children.push_back(arena_.make_parent(NodeType::OBJECT, AttrKey::SETTINGS, {pair.loc_offset, pair.loc_length}, std::move(pairs)));
        }
        return arena_.make_parent(NodeType::STMT_SET, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_input() {
        uint32_t begin = advance().loc.offset;
        std::vector<AstNode> children;
        children.push_back(parse_name(AttrKey::NAME));
        expect_kw(Keyword::TYPE);
        const Token& type_tok = peek();
        std::optional<InputType> type;
        if (type_tok.type == TokenType::KEYWORD) {
            switch (type_tok.keyword) {
                case Keyword::BOOLEAN:
                case Keyword::BOOL: type = InputType::BOOLEAN; break;
                case Keyword::BIGINT:
                case Keyword::INTEGER:
                case Keyword::INT: type = InputType::BIGINT; break;
                case Keyword::DOUBLE:
                case Keyword::FLOAT: type = InputType::DOUBLE; break;
                case Keyword::VARCHAR:
                case Keyword::TEXT: type = InputType::VARCHAR; break;
                case Keyword::TIMESTAMP:
                case Keyword::DATE: type = InputType::TIMESTAMP; break;
                case Keyword::INTERVAL: type = InputType::INTERVAL; break;
                case Keyword::FILE: type = InputType::FILE; break;
                default: break;
            }
        }
        if (!type) fail({"VARCHAR", "INTERVAL", "FILE", "BIGINT", "DOUBLE", "BOOLEAN", "TIMESTAMP"});
        advance();
        children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::TYPE, type_tok.loc, static_cast<int64_t>(*type)));
        if (accept_kw(Keyword::USING)) children.push_back(parse_name(AttrKey::COMPONENT));
        if (at(TokenType::LPAREN)) children.push_back(parse_kv_list(AttrKey::SETTINGS));
        return arena_.make_parent(NodeType::STMT_INPUT, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_fetch() {
        uint32_t begin = advance().loc.offset;
        std::vector<AstNode> children;
        children.push_back(parse_name(AttrKey::NAME));
        expect_kw(Keyword::FROM);
        if (at(TokenType::STRING) || at(TokenType::QUOTED_IDENT)) {
            children.push_back(arena_.make_leaf(NodeType::STRING, AttrKey::URI, advance().loc));
        } else {
            const Token& t = peek();
            std::optional<FetchScheme> scheme;
            if (t.type == TokenType::KEYWORD) {
                if (t.keyword == Keyword::HTTP) scheme = FetchScheme::HTTP;
                if (t.keyword == Keyword::HTTPS) scheme = FetchScheme::HTTPS;
                if (t.keyword == Keyword::FILE) scheme = FetchScheme::FILE;
                if (t.keyword == Keyword::TEST) scheme = FetchScheme::TEST;
            }
            if (!scheme) fail({"string", "HTTP", "HTTPS", "FILE", "TEST"});
            advance();
            children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::SCHEME, t.loc, static_cast<int64_t>(*scheme)));
            if (at(TokenType::STRING) || at(TokenType::QUOTED_IDENT)) {
                children.push_back(arena_.make_leaf(NodeType::STRING, AttrKey::URI, advance().loc));
            }
            if (at(TokenType::LPAREN)) children.push_back(parse_kv_list(AttrKey::SETTINGS));
        }
        return arena_.make_parent(NodeType::STMT_FETCH, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_load() {
        uint32_t begin = advance().loc.offset;
        std::vector<AstNode> children;
        children.push_back(parse_name(AttrKey::NAME));
        expect_kw(Keyword::FROM);
        children.push_back(parse_name(AttrKey::SOURCE));
        if (accept_kw(Keyword::USING)) {
            const Token& t = peek();
            std::optional<LoadFormat> format;
            if (t.type == TokenType::KEYWORD) {
                if (t.keyword == Keyword::CSV) format = LoadFormat::CSV;
                if (t.keyword == Keyword::JSON) format = LoadFormat::JSON;
                if (t.keyword == Keyword::PARQUET) format = LoadFormat::PARQUET;
                if (t.keyword == Keyword::RGF) format = LoadFormat::RGF;
            }
            if (!format) fail({"CSV", "JSON", "PARQUET", "RGF"});
            advance();
            children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::FORMAT, t.loc, static_cast<int64_t>(*format)));
            if (at(TokenType::LPAREN)) children.push_back(parse_kv_list(AttrKey::SETTINGS));
        }
        return arena_.make_parent(NodeType::STMT_LOAD, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_visualize() {
        uint32_t begin = advance().loc.offset;
        std::vector<AstNode> children;
        if (at(TokenType::LPAREN) && at_kw(Keyword::SELECT, 1)) {
            advance();
            children.push_back(parse_select(AttrKey::TARGET));
            expect(TokenType::RPAREN);
        } else {
            children.push_back(parse_name(AttrKey::TARGET));
        }
        expect_kw(Keyword::USING);
        if (at(TokenType::LPAREN)) {
            children.push_back(parse_kv_list(AttrKey::SETTINGS));
            return arena_.make_parent(NodeType::STMT_VISUALIZE, AttrKey::NONE, span_from(begin), std::move(children));
        }
        std::vector<AstNode> modifiers;
        uint32_t mod_begin = peek().loc.offset;
        while (peek().type == TokenType::KEYWORD) {
            std::optional<VizModifier> m;
            switch (peek().keyword) {
                case Keyword::STACKED: m = VizModifier::STACKED; break;
                case Keyword::MULTI: m = VizModifier::MULTI; break;
                case Keyword::GROUPED: m = VizModifier::GROUPED; break;
                case Keyword::COLORED: m = VizModifier::COLORED; break;
                default: break;
            }
            if (!m) break;
            modifiers.push_back(arena_.make_value(NodeType::ENUM, AttrKey::NONE, advance().loc, static_cast<int64_t>(*m)));
        }
        if (!modifiers.empty()) {
            children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::VIZ_MODIFIERS, span_from(mod_begin), std::move(modifiers)));
        }
        const Token& t = peek();
        std::optional<VizType> type;
        if (t.type == TokenType::KEYWORD) {
            switch (t.keyword) {
                case Keyword::TABLE: type = VizType::TABLE; break;
                case Keyword::LINE: type = VizType::LINE; break;
                case Keyword::BAR: type = VizType::BAR; break;
                case Keyword::AREA: type = VizType::AREA; break;
                case Keyword::SCATTER: type = VizType::SCATTER; break;
                default: break;
            }
        }
        if (!type) fail({"TABLE", "LINE", "BAR", "AREA", "SCATTER", "STACKED", "MULTI", "'('"});
        advance();
        uint32_t type_begin = t.loc.offset;
        accept_kw(Keyword::CHART);
        children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::VIZ_TYPE, span_from(type_begin), static_cast<int64_t>(*type)));
        if (at(TokenType::LPAREN)) children.push_back(parse_kv_list(AttrKey::SETTINGS));
        return arena_.make_parent(NodeType::STMT_VISUALIZE, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_create(StatementKind& kind) {
        uint32_t begin = advance().loc.offset;
        NodeType type;
        if (accept_kw(Keyword::TABLE)) {
            type = NodeType::STMT_CREATE_TABLE;
            kind = StatementKind::CREATE_TABLE_AS;
        } else if (accept_kw(Keyword::VIEW)) {
            type = NodeType::STMT_CREATE_VIEW;
            kind = StatementKind::CREATE_VIEW_AS;
        } else {
            fail({"TABLE", "VIEW"});
        }
        std::vector<AstNode> children;
        children.push_back(parse_name(AttrKey::NAME));
        expect_kw(Keyword::AS);
        if (at(TokenType::LPAREN) && at_kw(Keyword::SELECT, 1)) {
            advance();
            children.push_back(parse_select(AttrKey::QUERY));
            expect(TokenType::RPAREN);
        } else {
            if (!at_kw(Keyword::SELECT)) fail({"SELECT"});
            children.push_back(parse_select(AttrKey::QUERY));
        }
        return arena_.make_parent(type, AttrKey::NONE, span_from(begin), std::move(children));
    }

    // ---- SELECT ----

    AstNode parse_select(AttrKey key) {
        uint32_t begin = expect_kw(Keyword::SELECT).loc.offset;
        std::vector<AstNode> children;
        if (at_kw(Keyword::DISTINCT)) {
            children.push_back(arena_.make_value(NodeType::BOOL, AttrKey::DISTINCT, advance().loc, 1));
        }
        {
            uint32_t list_begin = peek().loc.offset;
            std::vector<AstNode> targets;
            do {
                targets.push_back(parse_result_target());
            } while (accept(TokenType::COMMA));
            children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::TARGETS, span_from(list_begin), std::move(targets)));
        }
        bool seen[8] = {};
        auto once = [&](int slot, const char* name) {
            if (seen[slot]) fail({}, fmt::format("duplicate {} clause", name));
            seen[slot] = true;
        };
        while (peek().type == TokenType::KEYWORD) {
            if (at_kw(Keyword::FROM)) {
                once(0, "FROM");
                advance();
                uint32_t list_begin = peek().loc.offset;
                std::vector<AstNode> items;
                do {
                    items.push_back(parse_from_item());
                } while (accept(TokenType::COMMA));
                children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::FROM, span_from(list_begin), std::move(items)));
            } else if (at_kw(Keyword::WHERE)) {
                once(1, "WHERE");
                advance();
                AstNode e = parse_expr();
                e.set_key(AttrKey::WHERE);
                children.push_back(e);
            } else if (at_kw(Keyword::GROUP)) {
                once(2, "GROUP BY");
                advance();
                expect_kw(Keyword::BY);
                uint32_t list_begin = peek().loc.offset;
                std::vector<AstNode> items;
                do {
                    items.push_back(parse_expr());
                } while (accept(TokenType::COMMA));
                children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::GROUP_BY, span_from(list_begin), std::move(items)));
            } else if (at_kw(Keyword::ORDER)) {
                once(3, "ORDER BY");
                advance();
                expect_kw(Keyword::BY);
                uint32_t list_begin = peek().loc.offset;
                std::vector<AstNode> items;
                do {
                    items.push_back(parse_order_item());
                } while (accept(TokenType::COMMA));
                children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::ORDER_BY, span_from(list_begin), std::move(items)));
            } else if (at_kw(Keyword::LIMIT)) {
                once(4, "LIMIT");
                advance();
                AstNode e = parse_expr();
                e.set_key(AttrKey::LIMIT);
                children.push_back(e);
            } else if (at_kw(Keyword::OFFSET)) {
                once(5, "OFFSET");
                advance();
                AstNode e = parse_expr();
                e.set_key(AttrKey::OFFSET);
                children.push_back(e);
            } else {
                break;
            }
        }
        return arena_.make_parent(NodeType::SELECT, key, span_from(begin), std::move(children));
    }

    AstNode parse_result_target() {
        uint32_t begin = peek().loc.offset;
        std::vector<AstNode> children;
        if (at(TokenType::STAR)) {
            children.push_back(arena_.make_leaf(NodeType::STAR, AttrKey::EXPR, advance().loc));
        } else {
            AstNode e = parse_expr();
            e.set_key(AttrKey::EXPR);
            children.push_back(e);
            if (accept_kw(Keyword::AS)) {
                children.push_back(parse_name(AttrKey::ALIAS));
            } else if (at(TokenType::IDENT) || at(TokenType::QUOTED_IDENT)) {
                children.push_back(arena_.make_leaf(NodeType::NAME, AttrKey::ALIAS, advance().loc));
            }
        }
        return arena_.make_parent(NodeType::RESULT_TARGET, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_from_item() {
        uint32_t begin = peek().loc.offset;
        std::vector<AstNode> children;
        NodeType type = NodeType::REL_NAME;
        if (at(TokenType::LPAREN)) {
            advance();
            if (!at_kw(Keyword::SELECT)) fail({"SELECT"});
            children.push_back(parse_select(AttrKey::QUERY));
            expect(TokenType::RPAREN);
            type = NodeType::SUBQUERY;
        } else {
            children.push_back(parse_name(AttrKey::NAME));
        }
        if (accept_kw(Keyword::AS)) {
            children.push_back(parse_name(AttrKey::ALIAS));
        } else if (at(TokenType::IDENT) || at(TokenType::QUOTED_IDENT)) {
            children.push_back(arena_.make_leaf(NodeType::NAME, AttrKey::ALIAS, advance().loc));
        }
        return arena_.make_parent(type, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_order_item() {
        uint32_t begin = peek().loc.offset;
        std::vector<AstNode> children;
        AstNode e = parse_expr();
        e.set_key(AttrKey::EXPR);
        children.push_back(e);
        if (at_kw(Keyword::ASC) || at_kw(Keyword::DESC)) {
            bool desc = at_kw(Keyword::DESC);
            children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::DIRECTION, advance().loc, desc ? 1 : 0));
        }
        if (at_kw(Keyword::NULLS)) {
            uint32_t nb = advance().loc.offset;
            bool first;
            if (accept_kw(Keyword::FIRST)) {
                first = true;
            } else {
                expect_kw(Keyword::LAST);
                first = false;
            }
            children.push_back(arena_.make_value(NodeType::BOOL, AttrKey::NULLS_FIRST, span_from(nb), first ? 1 : 0));
        }
        return arena_.make_parent(NodeType::ORDER_ITEM, AttrKey::NONE, span_from(begin), std::move(children));
    }

    // ---- names ----

    bool at_identifier(size_t k = 0) const {
        const Token& t = peek(k);
        return t.type == TokenType::IDENT || t.type == TokenType::QUOTED_IDENT || (t.type == TokenType::KEYWORD && !is_reserved(t.keyword));
    }

    AstNode parse_name(AttrKey key) {
        if (!at_identifier()) fail({"identifier"});
        return arena_.make_leaf(NodeType::NAME, key, advance().loc);
    }

    // ---- expressions ----

    AstNode binary(BinaryOp op, SourceLoc op_loc, AstNode left, AstNode right, uint32_t begin) {
        left.set_key(AttrKey::LEFT);
        right.set_key(AttrKey::RIGHT);
        std::vector<AstNode> children{arena_.make_value(NodeType::ENUM, AttrKey::OPERATOR, op_loc, static_cast<int64_t>(op)), left, right};
        return arena_.make_parent(NodeType::EXPR_BINARY, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode unary(UnaryOp op, SourceLoc op_loc, AstNode operand, uint32_t begin) {
        operand.set_key(AttrKey::EXPR);
        std::vector<AstNode> children{arena_.make_value(NodeType::ENUM, AttrKey::OPERATOR, op_loc, static_cast<int64_t>(op)), operand};
        return arena_.make_parent(NodeType::EXPR_UNARY, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_expr() { return parse_or(); }

    AstNode parse_or() {
        uint32_t begin = peek().loc.offset;
        AstNode left = parse_and();
        while (at_kw(Keyword::OR)) {
            SourceLoc op = advance().loc;
            AstNode right = parse_and();
            left = binary(BinaryOp::OR, op, left, right, begin);
        }
        return left;
    }

    AstNode parse_and() {
        uint32_t begin = peek().loc.offset;
        AstNode left = parse_not();
        while (at_kw(Keyword::AND)) {
            SourceLoc op = advance().loc;
            AstNode right = parse_not();
            left = binary(BinaryOp::AND, op, left, right, begin);
        }
        return left;
    }

    AstNode parse_not() {
        uint32_t begin = peek().loc.offset;
        if (at_kw(Keyword::NOT)) {
            SourceLoc op = advance().loc;
            AstNode operand = parse_not();
            return unary(UnaryOp::NOT, op, operand, begin);
        }
        return parse_comparison();
    }

    AstNode parse_comparison() {
        uint32_t begin = peek().loc.offset;
        AstNode left = parse_additive();
        for (;;) {
            std::optional<BinaryOp> op;
            switch (peek().type) {
                case TokenType::EQ: op = BinaryOp::EQ; break;
                case TokenType::NE: op = BinaryOp::NE; break;
                case TokenType::LT: op = BinaryOp::LT; break;
                case TokenType::LE: op = BinaryOp::LE; break;
                case TokenType::GT: op = BinaryOp::GT; break;
                case TokenType::GE: op = BinaryOp::GE; break;
                default: break;
            }
            if (op) {
                SourceLoc op_loc = advance().loc;
                AstNode right = parse_additive();
                left = binary(*op, op_loc, left, right, begin);
                continue;
            }
            if (at_kw(Keyword::IS)) {
                uint32_t op_begin = advance().loc.offset;
                bool negated = accept_kw(Keyword::NOT);
                expect_kw(Keyword::NULL_);
                left = unary(negated ? UnaryOp::IS_NOT_NULL : UnaryOp::IS_NULL, span_from(op_begin), left, begin);
                continue;
            }
            return left;
        }
    }

    AstNode parse_additive() {
        uint32_t begin = peek().loc.offset;
        AstNode left = parse_multiplicative();
        for (;;) {
            std::optional<BinaryOp> op;
            if (at(TokenType::PLUS)) op = BinaryOp::ADD;
            if (at(TokenType::MINUS)) op = BinaryOp::SUB;
            if (at(TokenType::CONCAT)) op = BinaryOp::CONCAT;
            if (!op) return left;
            SourceLoc op_loc = advance().loc;
            AstNode right = parse_multiplicative();
            left = binary(*op, op_loc, left, right, begin);
        }
    }

    AstNode parse_multiplicative() {
        uint32_t begin = peek().loc.offset;
        AstNode left = parse_unary();
        for (;;) {
            std::optional<BinaryOp> op;
            if (at(TokenType::STAR)) op = BinaryOp::MUL;
            if (at(TokenType::SLASH)) op = BinaryOp::DIV;
            if (at(TokenType::PERCENT)) op = BinaryOp::MOD;
            if (!op) return left;
            SourceLoc op_loc = advance().loc;
            AstNode right = parse_unary();
            left = binary(*op, op_loc, left, right, begin);
        }
    }

    AstNode parse_unary() {
        uint32_t begin = peek().loc.offset;
        if (at(TokenType::MINUS)) {
            SourceLoc op = advance().loc;
            AstNode operand = parse_unary();
            return unary(UnaryOp::NEG, op, operand, begin);
        }
        if (accept(TokenType::PLUS)) return parse_unary();
        return parse_postfix();
    }

    AstNode cast(AstNode operand, uint32_t begin) {
        const Token& t = peek();
        std::optional<DataType> type;
        if (t.type == TokenType::KEYWORD) type = keyword_data_type(t.keyword);
        if (!type) fail({"type name"});
        advance();
        operand.set_key(AttrKey::EXPR);
        std::vector<AstNode> children{operand, arena_.make_value(NodeType::ENUM, AttrKey::TYPE, t.loc, static_cast<int64_t>(*type))};
        return arena_.make_parent(NodeType::EXPR_CAST, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_postfix() {
        uint32_t begin = peek().loc.offset;
        AstNode e = parse_primary();
        while (accept(TokenType::DOUBLE_COLON)) e = cast(e, begin);
        return e;
    }

    AstNode parse_literal_token() {
        const Token& t = peek();
        switch (t.type) {
            case TokenType::STRING: return arena_.make_leaf(NodeType::STRING, AttrKey::NONE, advance().loc);
            case TokenType::INTEGER: {
                auto s = text(t);
                int64_t v;
                auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                if (ec != std::errc{}) {
                    double d = std::strtod(std::string(s).c_str(), nullptr);
                    return arena_.make_double(NodeType::FLOAT, AttrKey::NONE, advance().loc, d);
                }
                return arena_.make_value(NodeType::INTEGER, AttrKey::NONE, advance().loc, v);
            }
            case TokenType::FLOAT: {
                double d = std::strtod(std::string(text(t)).c_str(), nullptr);
                return arena_.make_double(NodeType::FLOAT, AttrKey::NONE, advance().loc, d);
            }
            case TokenType::KEYWORD:
                if (t.keyword == Keyword::TRUE_) return arena_.make_value(NodeType::BOOL, AttrKey::NONE, advance().loc, 1);
                if (t.keyword == Keyword::FALSE_) return arena_.make_value(NodeType::BOOL, AttrKey::NONE, advance().loc, 0);
                if (t.keyword == Keyword::NULL_) return arena_.make_leaf(NodeType::NULL_LITERAL, AttrKey::NONE, advance().loc);
                break;
            default: break;
        }
        fail({"literal"});
    }

    AstNode parse_primary() {
        uint32_t begin = peek().loc.offset;
        const Token& t = peek();
        switch (t.type) {
            case TokenType::STRING:
            case TokenType::INTEGER:
            case TokenType::FLOAT: return parse_literal_token();
            case TokenType::LPAREN: {
                advance();
                if (at_kw(Keyword::SELECT)) fail({}, "scalar subqueries are not supported");
                AstNode e = parse_expr();
                expect(TokenType::RPAREN);
                return e;
            }
            case TokenType::KEYWORD:
                if (t.keyword == Keyword::TRUE_ || t.keyword == Keyword::FALSE_ || t.keyword == Keyword::NULL_) return parse_literal_token();
                if (t.keyword == Keyword::CAST && at(TokenType::LPAREN, 1)) {
                    advance();
                    advance();
                    AstNode e = parse_expr();
                    expect_kw(Keyword::AS);
                    AstNode c = cast(e, begin);
                    expect(TokenType::RPAREN);
                    c.loc_length = span_from(begin).length;
                    return c;
                }
                if (t.keyword == Keyword::TIMESTAMP && at(TokenType::STRING, 1)) {
                    advance();
                    std::vector<AstNode> children{arena_.make_leaf(NodeType::STRING, AttrKey::VALUE, advance().loc)};
                    return arena_.make_parent(NodeType::LIT_TIMESTAMP, AttrKey::NONE, span_from(begin), std::move(children));
                }
                if (t.keyword == Keyword::INTERVAL && at(TokenType::STRING, 1)) {
                    advance();
                    std::vector<AstNode> children{arena_.make_leaf(NodeType::STRING, AttrKey::VALUE, advance().loc)};
                    if (at(TokenType::IDENT)) {
                        if (auto unit = parse_time_unit(text(peek()))) {
                            children.push_back(arena_.make_value(NodeType::ENUM, AttrKey::UNIT, advance().loc, static_cast<int64_t>(*unit)));
                        }
                    }
                    return arena_.make_parent(NodeType::LIT_INTERVAL, AttrKey::NONE, span_from(begin), std::move(children));
                }
                break;
            default: break;
        }
        if (!at_identifier()) fail({"expression"});
        if (at(TokenType::LPAREN, 1) && !at(TokenType::QUOTED_IDENT)) return parse_function();
        std::vector<AstNode> children;
        AstNode first = arena_.make_leaf(NodeType::NAME, AttrKey::NAME, advance().loc);
        if (at(TokenType::DOT)) {
            advance();
            first.set_key(AttrKey::QUALIFIER);
            children.push_back(first);
            children.push_back(parse_name(AttrKey::NAME));
        } else {
            children.push_back(first);
        }
        return arena_.make_parent(NodeType::COLUMN_REF, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_function() {
        uint32_t begin = peek().loc.offset;
        std::vector<AstNode> children;
        children.push_back(arena_.make_leaf(NodeType::NAME, AttrKey::FUNCTION, advance().loc));
        expect(TokenType::LPAREN);
        if (at_kw(Keyword::DISTINCT)) children.push_back(arena_.make_value(NodeType::BOOL, AttrKey::DISTINCT, advance().loc, 1));
        uint32_t args_begin = peek().loc.offset;
        std::vector<AstNode> args;
        if (at(TokenType::STAR)) {
            args.push_back(arena_.make_leaf(NodeType::STAR, AttrKey::NONE, advance().loc));
        } else if (!at(TokenType::RPAREN)) {
            do {
                args.push_back(parse_expr());
            } while (accept(TokenType::COMMA));
        }
        children.push_back(arena_.make_parent(NodeType::ARRAY, AttrKey::ARGS, span_from(args_begin), std::move(args)));
        expect(TokenType::RPAREN);
        return arena_.make_parent(NodeType::EXPR_FUNCTION, AttrKey::NONE, span_from(begin), std::move(children));
    }

    // ---- key-value lists ----

    AstNode parse_kv_list(AttrKey key) {
        uint32_t begin = expect(TokenType::LPAREN).loc.offset;
        std::vector<AstNode> pairs;
        while (!at(TokenType::RPAREN)) {
            pairs.push_back(parse_kv_pair());
            if (!accept(TokenType::COMMA)) break;
        }
        expect(TokenType::RPAREN);
        return arena_.make_parent(NodeType::OBJECT, key, span_from(begin), std::move(pairs));
    }

    AstNode parse_kv_key_part() {
        const Token& t = peek();
        if (t.type == TokenType::IDENT || t.type == TokenType::QUOTED_IDENT || t.type == TokenType::STRING || t.type == TokenType::KEYWORD) {
            return arena_.make_leaf(NodeType::NAME, AttrKey::NONE, advance().loc);
        }
        fail({"key"});
    }

    AstNode parse_kv_pair() {
        uint32_t begin = peek().loc.offset;
        std::vector<AstNode> parts;
        parts.push_back(parse_kv_key_part());
        while (accept(TokenType::DOT)) parts.push_back(parse_kv_key_part());
        AstNode path = arena_.make_parent(NodeType::KEY_PATH, AttrKey::KEY, span_from(begin), std::move(parts));
        expect(TokenType::EQ);
        AstNode value = parse_kv_value();
        value.set_key(AttrKey::VALUE);
        std::vector<AstNode> children{path, value};
        return arena_.make_parent(NodeType::KV_PAIR, AttrKey::NONE, span_from(begin), std::move(children));
    }

    AstNode parse_kv_value() {
        uint32_t begin = peek().loc.offset;
        const Token& t = peek();
        switch (t.type) {
            case TokenType::STRING:
            case TokenType::INTEGER:
            case TokenType::FLOAT: return parse_literal_token();
            case TokenType::QUOTED_IDENT: return arena_.make_leaf(NodeType::STRING, AttrKey::NONE, advance().loc);
            case TokenType::MINUS: {
                advance();
                const Token& num = peek();
                if (num.type == TokenType::INTEGER) {
                    int64_t v = 0;
                    auto s = text(num);
                    std::from_chars(s.data(), s.data() + s.size(), v);
                    advance();
                    return arena_.make_value(NodeType::INTEGER, AttrKey::NONE, span_from(begin), -v);
                }
                if (num.type == TokenType::FLOAT) {
                    double d = std::strtod(std::string(text(num)).c_str(), nullptr);
                    advance();
                    return arena_.make_double(NodeType::FLOAT, AttrKey::NONE, span_from(begin), -d);
                }
                fail({"number"});
            }
            case TokenType::LBRACKET: {
                advance();
                std::vector<AstNode> items;
                while (!at(TokenType::RBRACKET)) {
                    items.push_back(parse_kv_value());
                    if (!accept(TokenType::COMMA)) break;
                }
                expect(TokenType::RBRACKET);
                return arena_.make_parent(NodeType::ARRAY, AttrKey::NONE, span_from(begin), std::move(items));
            }
            case TokenType::LPAREN: return parse_kv_list(AttrKey::NONE);
            case TokenType::KEYWORD:
                if (t.keyword == Keyword::TRUE_ || t.keyword == Keyword::FALSE_ || t.keyword == Keyword::NULL_) return parse_literal_token();
                if (t.keyword == Keyword::INTERVAL && at(TokenType::STRING, 1)) return parse_primary();
                if (t.keyword == Keyword::TIMESTAMP && at(TokenType::STRING, 1)) return parse_primary();
                return arena_.make_leaf(NodeType::NAME, AttrKey::NONE, advance().loc);
            case TokenType::IDENT: return arena_.make_leaf(NodeType::NAME, AttrKey::NONE, advance().loc);
            default: break;
        }
        fail({"value"});
    }

private:
    AstArena& arena_;
    const std::vector<Token>& tokens_;
    size_t pos_ = 0;
    uint32_t prev_end_ = 0;
};

}  // namespace

ParsedScript parse_script(std::string script) {
    auto arena = std::make_shared<AstArena>(std::move(script));
    ParsedScript out;
    TokenStream tokens = tokenize(arena->text());
    out.errors = tokens.errors;
    Parser parser(*arena, tokens.tokens);
    while (!parser.at(TokenType::END)) {
        if (parser.accept(TokenType::SEMICOLON)) continue;
        size_t start_pos = parser.pos();
        uint32_t begin = parser.peek().loc.offset;
        auto cp = arena->checkpoint();
        try {
            StatementKind kind = StatementKind::SELECT;
            AstNode root = parser.parse_statement(kind);
            if (!parser.accept(TokenType::SEMICOLON) && !parser.at(TokenType::END) && !is_statement_start(parser.peek())) {
                parser.fail({"';'"});
            }
            SourceLoc loc = parser.span_from(begin);
            root.loc_offset = loc.offset;
            root.loc_length = loc.length;
            uint32_t idx = arena->push_node(root);
            out.statements.push_back({idx, kind, loc});
        } catch (const ParseError& e) {
            arena->rollback(cp);
            out.errors.push_back(e.diag);
            // resume after the next semicolon
            parser.seek(start_pos);
            while (!parser.at(TokenType::END) && !parser.at(TokenType::SEMICOLON)) parser.advance();
            parser.accept(TokenType::SEMICOLON);
        } catch (const ArenaOverflow& e) {
            arena->rollback(cp);
            out.errors.push_back({{begin, 0}, e.what(), {}});
            parser.seek(start_pos);
            while (!parser.at(TokenType::END) && !parser.at(TokenType::SEMICOLON)) parser.advance();
            parser.accept(TokenType::SEMICOLON);
        }
    }
    out.arena = std::move(arena);
    return out;
}

}  // namespace dashql
