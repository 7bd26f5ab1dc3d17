#include "dashql/relation.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace dashql {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) return false;
    }
    return true;
}

int64_t int_payload(const Value& v) {
    if (auto* b = std::get_if<bool>(&v)) return *b ? 1 : 0;
    if (auto* i = std::get_if<int64_t>(&v)) return *i;
    if (auto* t = std::get_if<Timestamp>(&v)) return t->micros;
    if (auto* iv = std::get_if<Interval>(&v)) return iv->micros;
    return 0;
}

}  // namespace

bool Column::uses_ints() const {
    return type_ == DataType::Bool || type_ == DataType::BigInt || type_ == DataType::Timestamp ||
           type_ == DataType::Interval || type_ == DataType::Null;
}

size_t Column::null_count() const { return static_cast<size_t>(std::count(valid_.begin(), valid_.end(), uint8_t{0})); }

Value Column::get(size_t row) const {
    if (!valid_[row]) return Value{};
    switch (type_) {
        case DataType::Bool: return Value{ints_[row] != 0};
        case DataType::BigInt: return Value{ints_[row]};
        case DataType::Double: return Value{doubles_[row]};
        case DataType::Varchar: return Value{strings_[row]};
        case DataType::Timestamp: return Value{Timestamp{ints_[row]}};
        case DataType::Interval: return Value{Interval{ints_[row]}};
        case DataType::Null: return Value{};
    }
    return Value{};
}

void Column::append(const Value& v) {
    if (dashql::is_null(v)) {
        append_null();
        return;
    }
    const Value* src = &v;
    std::optional<Value> cast;
    if (type_of(v) != type_) {
        cast = cast_value(v, type_);
        if (!cast) {
            throw std::invalid_argument(
                fmt::format("cannot store {} value '{}' in {} column", to_string(type_of(v)), to_display_string(v), to_string(type_)));
        }
        src = &*cast;
    }
    switch (type_) {
        case DataType::Double: append_double(std::get<double>(*src)); break;
        case DataType::Varchar: append_string(std::get<std::string>(*src)); break;
        case DataType::Null: append_null(); break;
        default: append_int(int_payload(*src)); break;
    }
}

void Column::append_null() {
    if (type_ == DataType::Double) {
        doubles_.push_back(0);
    } else if (type_ == DataType::Varchar) {
        strings_.emplace_back();
    } else {
        ints_.push_back(0);
    }
    valid_.push_back(0);
}

void Column::reserve(size_t n) {
    valid_.reserve(n);
    if (type_ == DataType::Double) {
        doubles_.reserve(n);
    } else if (type_ == DataType::Varchar) {
        strings_.reserve(n);
    } else {
        ints_.reserve(n);
    }
}

void Column::append_int(int64_t v, bool valid) {
    ints_.push_back(valid ? v : 0);
    valid_.push_back(valid ? 1 : 0);
}

void Column::append_double(double v, bool valid) {
    doubles_.push_back(valid ? v : 0);
    valid_.push_back(valid ? 1 : 0);
}

void Column::append_string(std::string v, bool valid) {
    strings_.push_back(valid ? std::move(v) : std::string{});
    valid_.push_back(valid ? 1 : 0);
}

double Column::as_double(size_t row) const {
    if (type_ == DataType::Double) return doubles_[row];
    if (uses_ints()) return static_cast<double>(ints_[row]);
    return 0.0;
}

Column Column::gather(const std::vector<uint32_t>& rows) const {
    Column out(type_);
    out.valid_.reserve(rows.size());
    for (uint32_t r : rows) out.valid_.push_back(valid_[r]);
    if (type_ == DataType::Double) {
        out.doubles_.reserve(rows.size());
        for (uint32_t r : rows) out.doubles_.push_back(doubles_[r]);
    } else if (type_ == DataType::Varchar) {
        out.strings_.reserve(rows.size());
        for (uint32_t r : rows) out.strings_.push_back(strings_[r]);
    } else {
        out.ints_.reserve(rows.size());
        for (uint32_t r : rows) out.ints_.push_back(ints_[r]);
    }
    return out;
}

Column Column::slice(size_t offset, size_t count) const {
    Column out(type_);
    size_t begin = std::min(offset, size());
    size_t end = std::min(size(), begin + std::min(count, size()));
    out.valid_.assign(valid_.begin() + begin, valid_.begin() + end);
    if (type_ == DataType::Double) {
        out.doubles_.assign(doubles_.begin() + begin, doubles_.begin() + end);
    } else if (type_ == DataType::Varchar) {
        out.strings_.assign(strings_.begin() + begin, strings_.begin() + end);
    } else {
        out.ints_.assign(ints_.begin() + begin, ints_.begin() + end);
    }
    return out;
}

void Column::append_column(const Column& other) {
    if (other.type_ != type_) {
        for (size_t i = 0; i < other.size(); ++i) append(other.get(i));
        return;
    }
    valid_.insert(valid_.end(), other.valid_.begin(), other.valid_.end());
    ints_.insert(ints_.end(), other.ints_.begin(), other.ints_.end());
    doubles_.insert(doubles_.end(), other.doubles_.begin(), other.doubles_.end());
    strings_.insert(strings_.end(), other.strings_.begin(), other.strings_.end());
}

Relation Relation::with_schema(std::vector<ColumnDef> schema) {
    Relation r;
    for (auto& def : schema) r.columns.emplace_back(def.type);
    r.schema = std::move(schema);
    return r;
}

std::optional<size_t> Relation::column_index(std::string_view name) const {
    for (size_t i = 0; i < schema.size(); ++i) {
        if (iequals(schema[i].name, name)) return i;
    }
    return std::nullopt;
}

std::vector<Value> Relation::row(size_t r) const {
    std::vector<Value> out;
    out.reserve(columns.size());
    for (auto& c : columns) out.push_back(c.get(r));
    return out;
}

void Relation::append_row(const std::vector<Value>& values) {
    if (values.size() != columns.size()) {
        throw std::invalid_argument(fmt::format("row has {} values, relation has {} columns", values.size(), columns.size()));
    }
    for (size_t i = 0; i < values.size(); ++i) columns[i].append(values[i]);
    ++row_count;
}

void Relation::add_column(ColumnDef def, Column column) {
    if (!columns.empty() && column.size() != row_count) throw std::invalid_argument("column length mismatch");
    if (columns.empty()) row_count = column.size();
    schema.push_back(std::move(def));
    columns.push_back(std::move(column));
}

Relation Relation::gather(const std::vector<uint32_t>& rows) const {
    Relation out;
    out.schema = schema;
    for (auto& c : columns) out.columns.push_back(c.gather(rows));
    out.row_count = rows.size();
    return out;
}

Relation Relation::slice(size_t offset, size_t limit) const {
    Relation out;
    out.schema = schema;
    for (auto& c : columns) out.columns.push_back(c.slice(offset, limit));
    size_t begin = std::min(offset, row_count);
    out.row_count = std::min(row_count - begin, limit);
    return out;
}

Relation Relation::project(const std::vector<size_t>& cols) const {
    Relation out;
    for (size_t c : cols) {
        out.schema.push_back(schema[c]);
        out.columns.push_back(columns[c]);
    }
    out.row_count = row_count;
    return out;
}

nlohmann::ordered_json Relation::schema_json() const {
    auto out = nlohmann::ordered_json::array();
    for (auto& def : schema) out.push_back({{"name", def.name}, {"type", std::string(to_string(def.type))}});
    return out;
}

nlohmann::ordered_json Relation::rows_json(size_t offset, size_t limit) const {
    auto out = nlohmann::ordered_json::array();
    size_t end = offset >= row_count ? offset : offset + std::min(limit, row_count - offset);
    for (size_t r = offset; r < end; ++r) {
        auto row = nlohmann::ordered_json::array();
        for (auto& c : columns) row.push_back(to_json(c.get(r)));
        out.push_back(std::move(row));
    }
    return out;
}

std::string Relation::canonical() const {
    std::string out;
    for (size_t i = 0; i < schema.size(); ++i) {
        if (i) out += '|';
        out += schema[i].name;
        out += ':';
        out += to_string(schema[i].type);
    }
    out += '\n';
    for (size_t r = 0; r < row_count; ++r) {
        for (size_t c = 0; c < columns.size(); ++c) {
            if (c) out += '|';
            Value v = columns[c].get(r);
            if (auto* d = std::get_if<double>(&v)) {
                out += fmt::format("{:.17g}", *d);
            } else {
                out += to_display_string(v);
            }
        }
        out += '\n';
    }
    return out;
}

bool operator==(const Relation& a, const Relation& b) {
    if (a.schema != b.schema || a.row_count != b.row_count) return false;
    for (size_t c = 0; c < a.columns.size(); ++c) {
        for (size_t r = 0; r < a.row_count; ++r) {
            Value x = a.columns[c].get(r), y = b.columns[c].get(r);
            if (x.index() != y.index() || !values_equal(x, y)) return false;
        }
    }
    return true;
}

}  // namespace dashql
