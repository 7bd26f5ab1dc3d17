#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dashql/value.hpp"

namespace dashql {

struct ColumnDef {
    std::string name;
    DataType type = DataType::Varchar;
    bool operator==(const ColumnDef&) const = default;
};

/// Typed column with a validity vector. BOOL, BIGINT, TIMESTAMP and INTERVAL share the
/// integer storage; DOUBLE and VARCHAR have their own.
class Column {
public:
    explicit Column(DataType type = DataType::Varchar) : type_(type) {}

    DataType type() const { return type_; }
    size_t size() const { return valid_.size(); }
    bool is_null(size_t row) const { return !valid_[row]; }
    size_t null_count() const;

    Value get(size_t row) const;
    /// Casts to the column type; throws std::invalid_argument when impossible.
    void append(const Value& v);
    void append_null();
    void reserve(size_t n);

    // Raw access for kernels. Undefined for non-matching storage.
    const std::vector<int64_t>& ints() const { return ints_; }
    const std::vector<double>& doubles() const { return doubles_; }
    const std::vector<std::string>& strings() const { return strings_; }
    const std::vector<uint8_t>& validity() const { return valid_; }
    void append_int(int64_t v, bool valid = true);
    void append_double(double v, bool valid = true);
    void append_string(std::string v, bool valid = true);

    /// Numeric view used by kernels: BIGINT, DOUBLE, TIMESTAMP and INTERVAL as double.
    double as_double(size_t row) const;

    Column gather(const std::vector<uint32_t>& rows) const;
    Column slice(size_t offset, size_t count) const;
    void append_column(const Column& other);

private:
    bool uses_ints() const;
    DataType type_;
    std::vector<int64_t> ints_;
    std::vector<double> doubles_;
    std::vector<std::string> strings_;
    std::vector<uint8_t> valid_;
};

/// Column-major table with a typed schema.
struct Relation {
    std::vector<ColumnDef> schema;
    std::vector<Column> columns;
    size_t row_count = 0;

    static Relation with_schema(std::vector<ColumnDef> schema);

    /// Case-insensitive lookup.
    std::optional<size_t> column_index(std::string_view name) const;
    Value at(size_t row, size_t col) const { return columns[col].get(row); }
    std::vector<Value> row(size_t row) const;
    void append_row(const std::vector<Value>& values);
    void add_column(ColumnDef def, Column column);

    Relation gather(const std::vector<uint32_t>& rows) const;
    Relation slice(size_t offset, size_t limit) const;
    Relation project(const std::vector<size_t>& cols) const;

    nlohmann::ordered_json schema_json() const;
    /// Rows as arrays of JSON values.
    nlohmann::ordered_json rows_json(size_t offset = 0, size_t limit = SIZE_MAX) const;
    /// Deterministic text form (schema header plus one line per row); equality of the
    /// canonical text is the byte-identity check used across execution paths.
    std::string canonical() const;
};

using RelationPtr = std::shared_ptr<const Relation>;

bool operator==(const Relation& a, const Relation& b);

}  // namespace dashql
