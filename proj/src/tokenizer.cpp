#include <algorithm>
#include <array>
#include <cctype>

#include <fmt/format.h>

#include "dashql/parser.hpp"

namespace dashql {

namespace {

struct KeywordEntry {
    std::string_view text;
    Keyword keyword;
    bool reserved;
};

constexpr std::string_view strip_underscore(std::string_view s) {
    return s.ends_with('_') ? s.substr(0, s.size() - 1) : s;
}

constexpr auto kKeywords = std::to_array<KeywordEntry>({
#define DASHQL_KW_ENTRY(name, reserved) {strip_underscore(#name), Keyword::name, reserved},
    DASHQL_KEYWORDS(DASHQL_KW_ENTRY)
#undef DASHQL_KW_ENTRY
});

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80; }
bool is_ident_char(char c) { return is_ident_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '$'; }

}  // namespace

std::optional<Keyword> lookup_keyword(std::string_view word) {
    if (word.size() > 16) return std::nullopt;
    char buf[17];
    for (size_t i = 0; i < word.size(); ++i) buf[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[i])));
    std::string_view upper(buf, word.size());
    for (const auto& e : kKeywords) {
        if (e.text == upper) return e.keyword;
    }
    return std::nullopt;
}

std::string_view keyword_text(Keyword kw) { return kKeywords[static_cast<size_t>(kw)].text; }
bool is_reserved(Keyword kw) { return kKeywords[static_cast<size_t>(kw)].reserved; }

std::string_view to_string(TokenType t) {
    switch (t) {
        case TokenType::IDENT: return "identifier";
        case TokenType::QUOTED_IDENT: return "quoted identifier";
        case TokenType::STRING: return "string";
        case TokenType::INTEGER: return "integer";
        case TokenType::FLOAT: return "number";
        case TokenType::KEYWORD: return "keyword";
        case TokenType::LPAREN: return "'('";
        case TokenType::RPAREN: return "')'";
        case TokenType::LBRACKET: return "'['";
        case TokenType::RBRACKET: return "']'";
        case TokenType::COMMA: return "','";
        case TokenType::SEMICOLON: return "';'";
        case TokenType::DOT: return "'.'";
        case TokenType::EQ: return "'='";
        case TokenType::NE: return "'<>'";
        case TokenType::LT: return "'<'";
        case TokenType::LE: return "'<='";
        case TokenType::GT: return "'>'";
        case TokenType::GE: return "'>='";
        case TokenType::PLUS: return "'+'";
        case TokenType::MINUS: return "'-'";
        case TokenType::STAR: return "'*'";
        case TokenType::SLASH: return "'/'";
        case TokenType::PERCENT: return "'%'";
        case TokenType::CONCAT: return "'||'";
        case TokenType::DOUBLE_COLON: return "'::'";
        case TokenType::END: return "end of input";
    }
    return "?";
}

TokenStream tokenize(std::string_view s) {
    TokenStream out;
    size_t i = 0;
    const size_t n = s.size();
    auto emit = [&](TokenType type, size_t begin, size_t end) {
        Token t;
        t.type = type;
        t.loc = {static_cast<uint32_t>(begin), static_cast<uint32_t>(end - begin)};
        out.tokens.push_back(t);
    };
    while (i < n) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '-' && i + 1 < n && s[i + 1] == '-') {
            while (i < n && s[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && s[i + 1] == '*') {
            size_t close = s.find("*/", i + 2);
            if (close == std::string_view::npos) {
                out.errors.push_back({{static_cast<uint32_t>(i), static_cast<uint32_t>(n - i)}, "unterminated comment", {"*/"}});
                i = n;
                break;
            }
            i = close + 2;
            continue;
        }
        size_t begin = i;
        if (c == '\'' || c == '"') {
            // doubled quotes escape the quote character
            ++i;
            bool closed = false;
            while (i < n) {
                if (s[i] == c) {
                    if (i + 1 < n && s[i + 1] == c) {
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                ++i;
            }
            if (!closed) {
                out.errors.push_back({{static_cast<uint32_t>(begin), static_cast<uint32_t>(n - begin)},
                                      c == '\'' ? "unterminated string literal" : "unterminated quoted identifier",
                                      {std::string(1, c)}});
                break;
            }
            emit(c == '\'' ? TokenType::STRING : TokenType::QUOTED_IDENT, begin, i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            bool is_float = false;
            while (i < n && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i < n && s[i] == '.' && !(i + 1 < n && s[i + 1] == '.')) {
                is_float = true;
                ++i;
                while (i < n && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            }
            if (i < n && (s[i] == 'e' || s[i] == 'E')) {
                size_t j = i + 1;
                if (j < n && (s[j] == '+' || s[j] == '-')) ++j;
                if (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) {
                    is_float = true;
                    i = j;
                    while (i < n && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
                }
            }
            emit(is_float ? TokenType::FLOAT : TokenType::INTEGER, begin, i);
            continue;
        }
        if (is_ident_start(c)) {
            while (i < n && is_ident_char(s[i])) ++i;
            auto word = s.substr(begin, i - begin);
            if (auto kw = lookup_keyword(word)) {
                emit(TokenType::KEYWORD, begin, i);
                out.tokens.back().keyword = *kw;
            } else {
                emit(TokenType::IDENT, begin, i);
            }
            continue;
        }
        auto two = i + 1 < n ? s.substr(i, 2) : std::string_view{};
        if (two == "<=") { emit(TokenType::LE, i, i + 2); i += 2; continue; }
        if (two == ">=") { emit(TokenType::GE, i, i + 2); i += 2; continue; }
        if (two == "<>" || two == "!=") { emit(TokenType::NE, i, i + 2); i += 2; continue; }
        if (two == "||") { emit(TokenType::CONCAT, i, i + 2); i += 2; continue; }
        if (two == "::") { emit(TokenType::DOUBLE_COLON, i, i + 2); i += 2; continue; }
        TokenType single;
        switch (c) {
            case '(': single = TokenType::LPAREN; break;
            case ')': single = TokenType::RPAREN; break;
            case '[': single = TokenType::LBRACKET; break;
            case ']': single = TokenType::RBRACKET; break;
            case ',': single = TokenType::COMMA; break;
            case ';': single = TokenType::SEMICOLON; break;
            case '.': single = TokenType::DOT; break;
            case '=': single = TokenType::EQ; break;
            case '<': single = TokenType::LT; break;
            case '>': single = TokenType::GT; break;
            case '+': single = TokenType::PLUS; break;
            case '-': single = TokenType::MINUS; break;
            case '*': single = TokenType::STAR; break;
            case '/': single = TokenType::SLASH; break;
            case '%': single = TokenType::PERCENT; break;
            default:
                out.errors.push_back({{static_cast<uint32_t>(i), 1}, fmt::format("unexpected character '{}'", c), {}});
                ++i;
                continue;
        }
        emit(single, i, i + 1);
        ++i;
    }
    Token end;
    end.type = TokenType::END;
    end.loc = {static_cast<uint32_t>(n), 0};
    out.tokens.push_back(end);
    return out;
}

}  // namespace dashql
