#include "dashql/value.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>

#include <fmt/format.h>

namespace dashql {

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

int type_rank(const Value& v) { return static_cast<int>(v.index()); }

}  // namespace

std::string_view to_string(DataType type) {
    switch (type) {
        case DataType::Null: return "NULL";
        case DataType::Bool: return "BOOLEAN";
        case DataType::BigInt: return "BIGINT";
        case DataType::Double: return "DOUBLE";
        case DataType::Varchar: return "VARCHAR";
        case DataType::Timestamp: return "TIMESTAMP";
        case DataType::Interval: return "INTERVAL";
    }
    return "?";
}

std::optional<DataType> parse_data_type(std::string_view name) {
    auto u = upper(trim(name));
    if (u == "BOOLEAN" || u == "BOOL") return DataType::Bool;
    if (u == "BIGINT" || u == "INTEGER" || u == "INT" || u == "INT64" || u == "SMALLINT") return DataType::BigInt;
    if (u == "DOUBLE" || u == "FLOAT" || u == "REAL" || u == "NUMERIC" || u == "DECIMAL") return DataType::Double;
    if (u == "VARCHAR" || u == "TEXT" || u == "STRING") return DataType::Varchar;
    if (u == "TIMESTAMP" || u == "DATETIME" || u == "DATE") return DataType::Timestamp;
    if (u == "INTERVAL") return DataType::Interval;
    if (u == "NULL") return DataType::Null;
    return std::nullopt;
}

bool is_numeric(DataType type) { return type == DataType::BigInt || type == DataType::Double; }
bool is_temporal(DataType type) { return type == DataType::Timestamp; }

DataType type_of(const Value& v) {
    switch (v.index()) {
        case 0: return DataType::Null;
        case 1: return DataType::Bool;
        case 2: return DataType::BigInt;
        case 3: return DataType::Double;
        case 4: return DataType::Varchar;
        case 5: return DataType::Timestamp;
        default: return DataType::Interval;
    }
}

std::optional<std::strong_ordering> compare_values(const Value& a, const Value& b) {
    if (is_null(a) || is_null(b)) return std::nullopt;
    auto as_double = [](const Value& v) -> std::optional<double> {
        if (auto* i = std::get_if<int64_t>(&v)) return static_cast<double>(*i);
        if (auto* d = std::get_if<double>(&v)) return *d;
        return std::nullopt;
    };
    if (a.index() == b.index()) {
        return std::visit(
            [&](const auto& lhs) -> std::optional<std::strong_ordering> {
                using T = std::decay_t<decltype(lhs)>;
                const auto& rhs = std::get<T>(b);
                if constexpr (std::is_same_v<T, std::monostate>) {
                    return std::strong_ordering::equal;
                } else if constexpr (std::is_same_v<T, double>) {
                    if (lhs < rhs) return std::strong_ordering::less;
                    if (lhs > rhs) return std::strong_ordering::greater;
                    return std::strong_ordering::equal;
                } else {
                    return lhs <=> rhs;
                }
            },
            a);
    }
    auto da = as_double(a), db = as_double(b);
    if (da && db) {
        // exact comparison between an integer and a double
        if (auto* ia = std::get_if<int64_t>(&a)) {
            double d = *db;
            if (static_cast<double>(*ia) < d) return std::strong_ordering::less;
            if (static_cast<double>(*ia) > d) return std::strong_ordering::greater;
            return std::strong_ordering::equal;
        }
        if (*da < *db) return std::strong_ordering::less;
        if (*da > *db) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }
    return std::nullopt;
}

std::strong_ordering total_order(const Value& a, const Value& b) {
    bool na = is_null(a), nb = is_null(b);
    if (na || nb) {
        if (na && nb) return std::strong_ordering::equal;
        return na ? std::strong_ordering::greater : std::strong_ordering::less;
    }
    if (auto c = compare_values(a, b)) return *c;
    return type_rank(a) <=> type_rank(b);
}

bool values_equal(const Value& a, const Value& b) { return total_order(a, b) == std::strong_ordering::equal; }

size_t hash_value(const Value& v) {
    return std::visit(
        [](const auto& x) -> size_t {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return 0x9e3779b97f4a7c15ull;
            } else if constexpr (std::is_same_v<T, Timestamp> || std::is_same_v<T, Interval>) {
                return std::hash<int64_t>{}(x.micros) ^ 0x5bd1e995;
            } else if constexpr (std::is_same_v<T, double>) {
                // integral doubles hash like the integer so 1 and 1.0 group together
                double ip;
                if (std::modf(x, &ip) == 0.0 && std::abs(x) < 9.2e18) return std::hash<int64_t>{}(static_cast<int64_t>(x));
                return std::hash<double>{}(x);
            } else {
                return std::hash<T>{}(x);
            }
        },
        v);
}

std::optional<Value> cast_value(const Value& v, DataType target) {
    if (is_null(v)) return Value{};
    DataType source = type_of(v);
    if (source == target || target == DataType::Null) return v;
    switch (target) {
        case DataType::Bool:
            if (auto* i = std::get_if<int64_t>(&v)) return Value{*i != 0};
            if (auto* s = std::get_if<std::string>(&v)) {
                auto l = lower(trim(*s));
                if (l == "true" || l == "t" || l == "1") return Value{true};
                if (l == "false" || l == "f" || l == "0") return Value{false};
            }
            return std::nullopt;
        case DataType::BigInt:
            if (auto* d = std::get_if<double>(&v)) return Value{static_cast<int64_t>(std::llround(*d))};
            if (auto* b = std::get_if<bool>(&v)) return Value{static_cast<int64_t>(*b)};
            if (auto* s = std::get_if<std::string>(&v)) {
                int64_t out;
                if (parse_number(trim(*s), out)) return Value{out};
            }
            return std::nullopt;
        case DataType::Double:
            if (auto* i = std::get_if<int64_t>(&v)) return Value{static_cast<double>(*i)};
            if (auto* s = std::get_if<std::string>(&v)) {
                double out;
                if (parse_number(trim(*s), out)) return Value{out};
            }
            return std::nullopt;
        case DataType::Varchar:
            return Value{to_display_string(v)};
        case DataType::Timestamp:
            if (auto* s = std::get_if<std::string>(&v)) {
                if (auto ts = parse_timestamp(*s)) return Value{*ts};
            }
            if (auto* i = std::get_if<int64_t>(&v)) return Value{Timestamp{*i}};
            return std::nullopt;
        case DataType::Interval:
            if (auto* s = std::get_if<std::string>(&v)) {
                if (auto iv = parse_interval(*s)) return Value{*iv};
            }
            if (auto* i = std::get_if<int64_t>(&v)) return Value{Interval{*i}};
            return std::nullopt;
        case DataType::Null:
            break;
    }
    return std::nullopt;
}

std::string to_display_string(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "NULL";
            } else if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, double>) {
                return fmt::format("{}", x);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return x;
            } else if constexpr (std::is_same_v<T, Timestamp>) {
                return format_timestamp(x);
            } else {
                return format_interval(x);
            }
        },
        v);
}

nlohmann::ordered_json to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, Timestamp>) {
                return format_timestamp(x);
            } else if constexpr (std::is_same_v<T, Interval>) {
                return x.micros;
            } else if constexpr (std::is_same_v<T, double>) {
                if (!std::isfinite(x)) return nullptr;
                return x;
            } else {
                return x;
            }
        },
        v);
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    text = trim(text);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned mo = 0, d = 0;
    if (!parse_number(text.substr(0, 4), y) || !parse_number(text.substr(5, 2), mo) || !parse_number(text.substr(8, 2), d))
        return std::nullopt;
    year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok()) return std::nullopt;
    int64_t micros = static_cast<int64_t>(sys_days{ymd}.time_since_epoch().count()) * kMicrosPerDay;
    auto rest = text.substr(10);
    if (!rest.empty() && (rest.back() == 'Z' || rest.back() == 'z')) rest.remove_suffix(1);
    if (rest.empty()) return Timestamp{micros};
    if (rest[0] != ' ' && rest[0] != 'T' && rest[0] != 't') return std::nullopt;
    rest.remove_prefix(1);
    unsigned hh = 0, mm = 0, ss = 0;
    if (rest.size() < 5 || rest[2] != ':') return std::nullopt;
    if (!parse_number(rest.substr(0, 2), hh) || !parse_number(rest.substr(3, 2), mm)) return std::nullopt;
    rest.remove_prefix(5);
    int64_t frac = 0;
    if (!rest.empty()) {
        if (rest[0] != ':' || rest.size() < 3 || !parse_number(rest.substr(1, 2), ss)) return std::nullopt;
        rest.remove_prefix(3);
        if (!rest.empty()) {
            if (rest[0] != '.') return std::nullopt;
            rest.remove_prefix(1);
            if (rest.empty() || rest.size() > 6) return std::nullopt;
            if (!parse_number(rest, frac)) return std::nullopt;
            for (size_t i = rest.size(); i < 6; ++i) frac *= 10;
        }
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    micros += hh * kMicrosPerHour + mm * kMicrosPerMinute + ss * kMicrosPerSecond + frac;
    return Timestamp{micros};
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    int64_t days = ts.micros / kMicrosPerDay;
    int64_t rem = ts.micros % kMicrosPerDay;
    if (rem < 0) {
        rem += kMicrosPerDay;
        days -= 1;
    }
    year_month_day ymd{sys_days{std::chrono::days{days}}};
    int64_t hh = rem / kMicrosPerHour;
    int64_t mm = (rem % kMicrosPerHour) / kMicrosPerMinute;
    int64_t ss = (rem % kMicrosPerMinute) / kMicrosPerSecond;
    int64_t frac = rem % kMicrosPerSecond;
    std::string out = fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}", static_cast<int>(ymd.year()),
                                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hh, mm, ss);
    if (frac != 0) out += fmt::format(".{:06d}", frac);
    out += 'Z';
    return out;
}

std::optional<TimeUnit> parse_time_unit(std::string_view name) {
    auto l = lower(trim(name));
    if (!l.empty() && l.back() == 's') l.pop_back();
    if (l == "second" || l == "sec") return TimeUnit::Second;
    if (l == "minute" || l == "min") return TimeUnit::Minute;
    if (l == "hour" || l == "h") return TimeUnit::Hour;
    if (l == "day" || l == "d") return TimeUnit::Day;
    if (l == "week") return TimeUnit::Week;
    if (l == "month") return TimeUnit::Month;
    if (l == "year") return TimeUnit::Year;
    return std::nullopt;
}

std::string_view to_string(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::Second: return "second";
        case TimeUnit::Minute: return "minute";
        case TimeUnit::Hour: return "hour";
        case TimeUnit::Day: return "day";
        case TimeUnit::Week: return "week";
        case TimeUnit::Month: return "month";
        case TimeUnit::Year: return "year";
    }
    return "?";
}

int64_t unit_micros(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::Second: return kMicrosPerSecond;
        case TimeUnit::Minute: return kMicrosPerMinute;
        case TimeUnit::Hour: return kMicrosPerHour;
        case TimeUnit::Day: return kMicrosPerDay;
        case TimeUnit::Week: return 7 * kMicrosPerDay;
        case TimeUnit::Month: return 30 * kMicrosPerDay;
        case TimeUnit::Year: return 365 * kMicrosPerDay;
    }
    return 0;
}

Timestamp truncate_timestamp(Timestamp ts, TimeUnit unit) {
    using namespace std::chrono;
    auto floor_div = [](int64_t a, int64_t b) {
        int64_t q = a / b;
        if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
        return q;
    };
    switch (unit) {
        case TimeUnit::Second:
        case TimeUnit::Minute:
        case TimeUnit::Hour:
        case TimeUnit::Day: {
            int64_t u = unit_micros(unit);
            return Timestamp{floor_div(ts.micros, u) * u};
        }
        case TimeUnit::Week: {
            // ISO weeks start on Monday; 1970-01-01 was a Thursday
            int64_t days = floor_div(ts.micros, kMicrosPerDay);
            int64_t weekday = ((days + 3) % 7 + 7) % 7;  // 0 = Monday
            return Timestamp{(days - weekday) * kMicrosPerDay};
        }
        case TimeUnit::Month:
        case TimeUnit::Year: {
            int64_t days = floor_div(ts.micros, kMicrosPerDay);
            year_month_day ymd{sys_days{std::chrono::days{days}}};
            year_month_day first = unit == TimeUnit::Month ? year_month_day{ymd.year(), ymd.month(), day{1}}
                                                           : year_month_day{ymd.year(), month{1}, day{1}};
            return Timestamp{static_cast<int64_t>(sys_days{first}.time_since_epoch().count()) * kMicrosPerDay};
        }
    }
    return ts;
}

std::optional<Interval> parse_interval(std::string_view text, std::optional<TimeUnit> unit) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    // HH:MM[:SS]
    if (text.find(':') != std::string_view::npos && !unit) {
        int64_t parts[3] = {0, 0, 0};
        size_t n = 0;
        while (!text.empty() && n < 3) {
            auto pos = text.find(':');
            auto piece = text.substr(0, pos);
            if (!parse_number(piece, parts[n++])) return std::nullopt;
            if (pos == std::string_view::npos) {
                text = {};
            } else {
                text.remove_prefix(pos + 1);
            }
        }
        if (!text.empty() || n < 2) return std::nullopt;
        return Interval{parts[0] * kMicrosPerHour + parts[1] * kMicrosPerMinute + parts[2] * kMicrosPerSecond};
    }
    int64_t total = 0;
    bool any = false;
    while (!text.empty()) {
        size_t i = 0;
        if (text[i] == '-' || text[i] == '+') ++i;
        while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
        double amount;
        if (!parse_number(text.substr(0, i), amount)) return std::nullopt;
        text = trim(text.substr(i));
        size_t j = 0;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
        std::optional<TimeUnit> u = unit;
        if (j > 0) {
            auto parsed = parse_time_unit(text.substr(0, j));
            if (!parsed) return std::nullopt;
            if (!u) u = parsed;
            text = trim(text.substr(j));
        }
        total += static_cast<int64_t>(std::llround(amount * static_cast<double>(unit_micros(u.value_or(TimeUnit::Second)))));
        any = true;
    }
    if (!any) return std::nullopt;
    return Interval{total};
}

std::string format_interval(Interval iv) {
    int64_t m = iv.micros;
    std::string sign = m < 0 ? "-" : "";
    if (m < 0) m = -m;
    int64_t days = m / kMicrosPerDay;
    m %= kMicrosPerDay;
    std::string out = sign;
    if (days > 0) out += fmt::format("{} day{} ", days, days == 1 ? "" : "s");
    out += fmt::format("{:02d}:{:02d}:{:02d}", m / kMicrosPerHour, (m % kMicrosPerHour) / kMicrosPerMinute,
                       (m % kMicrosPerMinute) / kMicrosPerSecond);
    if (m % kMicrosPerSecond) out += fmt::format(".{:06d}", m % kMicrosPerSecond);
    return out;
}

}  // namespace dashql
