#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"

namespace dashql {

/// Logical column types of the relational core.
enum class DataType : uint8_t {
    Null,  // type of an untyped NULL literal, coerces to anything
    Bool,
    BigInt,
    Double,
    Varchar,
    Timestamp,  // microseconds since epoch, UTC
    Interval,   // microseconds
};

std::string_view to_string(DataType type);
/// Accepts SQL spellings (BIGINT, INTEGER, INT, DOUBLE, FLOAT, VARCHAR, TEXT, ...).
std::optional<DataType> parse_data_type(std::string_view name);

bool is_numeric(DataType type);
bool is_temporal(DataType type);

struct Timestamp {
    int64_t micros = 0;
    auto operator<=>(const Timestamp&) const = default;
};

struct Interval {
    int64_t micros = 0;
    auto operator<=>(const Interval&) const = default;
};

using Value = std::variant<std::monostate, bool, int64_t, double, std::string, Timestamp, Interval>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }
DataType type_of(const Value& v);

/// Three-way comparison of two non-null values. Numeric types compare across
/// BIGINT/DOUBLE; anything else must have matching types.
std::optional<std::strong_ordering> compare_values(const Value& a, const Value& b);
/// Total order used for sorting and grouping: NULL sorts last, mixed types by type id.
std::strong_ordering total_order(const Value& a, const Value& b);
bool values_equal(const Value& a, const Value& b);
size_t hash_value(const Value& v);

/// Converts a value to the requested type; returns nullopt when not representable.
std::optional<Value> cast_value(const Value& v, DataType target);

std::string to_display_string(const Value& v);
nlohmann::ordered_json to_json(const Value& v);

constexpr int64_t kMicrosPerSecond = 1'000'000;
constexpr int64_t kMicrosPerMinute = 60 * kMicrosPerSecond;
constexpr int64_t kMicrosPerHour = 60 * kMicrosPerMinute;
constexpr int64_t kMicrosPerDay = 24 * kMicrosPerHour;

/// Parses `YYYY-MM-DD[( |T)HH:MM[:SS[.ffffff]]][Z]`.
std::optional<Timestamp> parse_timestamp(std::string_view text);
/// Formats as ISO-8601 `YYYY-MM-DDTHH:MM:SS[.ffffff]Z`.
std::string format_timestamp(Timestamp ts);

enum class TimeUnit : uint8_t { Second, Minute, Hour, Day, Week, Month, Year };
std::optional<TimeUnit> parse_time_unit(std::string_view name);
std::string_view to_string(TimeUnit unit);
/// Months and years are approximated as 30 and 365 days when used as interval lengths.
int64_t unit_micros(TimeUnit unit);
Timestamp truncate_timestamp(Timestamp ts, TimeUnit unit);

/// Parses interval text like `3 hours`, `1 day`, `90` (seconds when no unit is given),
/// or `HH:MM:SS`. An explicit unit overrides the unit in the text.
std::optional<Interval> parse_interval(std::string_view text, std::optional<TimeUnit> unit = std::nullopt);
std::string format_interval(Interval iv);

}  // namespace dashql
