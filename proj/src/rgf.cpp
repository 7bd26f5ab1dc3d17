#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "dashql/ingest.hpp"

namespace dashql {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(std::string_view in, size_t pos) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

uint64_t get_u64(std::string_view in, size_t pos) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

/// Statistics values are stored raw: integers as integers, doubles as doubles.
nlohmann::ordered_json stat_to_json(const Value& v) {
    if (is_null(v)) return nullptr;
    if (auto* b = std::get_if<bool>(&v)) return *b;
    if (auto* i = std::get_if<int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    if (auto* t = std::get_if<Timestamp>(&v)) return t->micros;
    if (auto* iv = std::get_if<Interval>(&v)) return iv->micros;
    return nullptr;
}

Value stat_from_json(const nlohmann::ordered_json& j, DataType type) {
    if (j.is_null()) return Value{};
    switch (type) {
        case DataType::Bool: return Value{j.get<bool>()};
        case DataType::BigInt: return Value{j.get<int64_t>()};
        case DataType::Double: return Value{j.get<double>()};
        case DataType::Varchar: return Value{j.get<std::string>()};
        case DataType::Timestamp: return Value{Timestamp{j.get<int64_t>()}};
        case DataType::Interval: return Value{Interval{j.get<int64_t>()}};
        case DataType::Null: return Value{};
    }
    return Value{};
}

std::string encode_chunk(const Column& col, size_t begin, size_t count, RgfChunk& stats) {
    std::string out;
    size_t bitmap_bytes = (count + 7) / 8;
    out.assign(bitmap_bytes, '\0');
    const auto& valid = col.validity();
    for (size_t i = 0; i < count; ++i) {
        if (valid[begin + i]) out[i / 8] = static_cast<char>(out[i / 8] | (1 << (i % 8)));
    }
    stats.null_count = 0;
    stats.min = stats.max = Value{};
    for (size_t i = 0; i < count; ++i) {
        size_t r = begin + i;
        if (!valid[r]) {
            ++stats.null_count;
        } else {
            Value v = col.get(r);
            if (is_null(stats.min) || total_order(v, stats.min) < 0) stats.min = v;
            if (is_null(stats.max) || total_order(v, stats.max) > 0) stats.max = v;
        }
        switch (col.type()) {
            case DataType::Double: {
                uint64_t bits;
                double d = col.doubles()[r];
                std::memcpy(&bits, &d, 8);
                put_u64(out, bits);
                break;
            }
            case DataType::Varchar:
                put_u32(out, static_cast<uint32_t>(col.strings()[r].size()));
                out += col.strings()[r];
                break;
            case DataType::Bool: out.push_back(col.ints()[r] ? 1 : 0); break;
            case DataType::Null: break;
            default: put_u64(out, static_cast<uint64_t>(col.ints()[r])); break;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(CompareOp op) {
    switch (op) {
        case CompareOp::EQ: return "=";
        case CompareOp::LT: return "<";
        case CompareOp::LE: return "<=";
        case CompareOp::GT: return ">";
        case CompareOp::GE: return ">=";
    }
    return "?";
}

uint64_t RgfFooter::row_count() const {
    uint64_t n = 0;
    for (auto& g : row_groups) n += g.row_count;
    return n;
}

bool predicate_holds(const Value& v, const RangePredicate& pred) {
    if (is_null(v) || is_null(pred.value)) return false;
    auto c = compare_values(v, pred.value);
    if (!c) return false;
    switch (pred.op) {
        case CompareOp::EQ: return *c == 0;
        case CompareOp::LT: return *c < 0;
        case CompareOp::LE: return *c <= 0;
        case CompareOp::GT: return *c > 0;
        case CompareOp::GE: return *c >= 0;
    }
    return false;
}

bool stats_exclude(const RgfChunk& chunk, const RangePredicate& pred) {
    // all-null chunks can never satisfy a comparison
    if (is_null(chunk.min) || is_null(chunk.max)) return true;
    if (is_null(pred.value)) return true;
    auto lo = compare_values(chunk.min, pred.value);
    auto hi = compare_values(chunk.max, pred.value);
    if (!lo || !hi) return false;  // incomparable: no proof
    switch (pred.op) {
        case CompareOp::EQ: return *lo > 0 || *hi < 0;
        case CompareOp::LT: return *lo >= 0;
        case CompareOp::LE: return *lo > 0;
        case CompareOp::GT: return *hi <= 0;
        case CompareOp::GE: return *hi < 0;
    }
    return false;
}

std::string write_rgf(const Relation& rel, size_t row_group_size) {
    if (row_group_size == 0) throw std::invalid_argument("row group size must be positive");
    std::string out(kRgfMagic);
    nlohmann::ordered_json footer;
    footer["schema"] = rel.schema_json();
    auto groups = nlohmann::ordered_json::array();
    for (size_t begin = 0; begin < rel.row_count; begin += row_group_size) {
        size_t count = std::min(row_group_size, rel.row_count - begin);
        nlohmann::ordered_json g;
        g["row_offset"] = begin;
        g["row_count"] = count;
        auto cols = nlohmann::ordered_json::array();
        for (const auto& col : rel.columns) {
            RgfChunk stats;
            std::string bytes = encode_chunk(col, begin, count, stats);
            stats.offset = out.size();
            stats.length = bytes.size();
            out += bytes;
            cols.push_back({{"offset", stats.offset},
                            {"length", stats.length},
                            {"min", stat_to_json(stats.min)},
                            {"max", stat_to_json(stats.max)},
                            {"null_count", stats.null_count}});
        }
        g["columns"] = std::move(cols);
        groups.push_back(std::move(g));
    }
    footer["row_groups"] = std::move(groups);
    std::string json = footer.dump();
    out += json;
    put_u32(out, static_cast<uint32_t>(json.size()));
    out += kRgfMagic;
    return out;
}

RgfFooter parse_rgf_footer(std::string_view footer_json) {
    RgfFooter footer;
    try {
        auto j = nlohmann::ordered_json::parse(footer_json);
        for (auto& c : j.at("schema")) {
            auto type = parse_data_type(c.at("type").get<std::string>());
            if (!type) throw LoadError("RGF footer: unknown column type");
            footer.schema.push_back({c.at("name").get<std::string>(), *type});
        }
        for (auto& g : j.at("row_groups")) {
            RgfRowGroup group;
            group.row_offset = g.at("row_offset").get<uint64_t>();
            group.row_count = g.at("row_count").get<uint64_t>();
            size_t ci = 0;
            for (auto& c : g.at("columns")) {
                if (ci >= footer.schema.size()) throw LoadError("RGF footer: too many column chunks");
                RgfChunk chunk;
                chunk.offset = c.at("offset").get<uint64_t>();
                chunk.length = c.at("length").get<uint64_t>();
                chunk.min = stat_from_json(c.at("min"), footer.schema[ci].type);
                chunk.max = stat_from_json(c.at("max"), footer.schema[ci].type);
                chunk.null_count = c.at("null_count").get<uint64_t>();
                group.columns.push_back(std::move(chunk));
                ++ci;
            }
            if (ci != footer.schema.size()) throw LoadError("RGF footer: missing column chunks");
            footer.row_groups.push_back(std::move(group));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(fmt::format("corrupt RGF footer: {}", e.what()));
    }
    return footer;
}

Column decode_rgf_chunk(std::string_view bytes, DataType type, size_t rows) {
    Column col(type);
    col.reserve(rows);
    size_t bitmap_bytes = (rows + 7) / 8;
    if (bytes.size() < bitmap_bytes) throw LoadError("corrupt RGF chunk: truncated bitmap");
    size_t pos = bitmap_bytes;
    auto need = [&](size_t n) {
        if (pos + n > bytes.size()) throw LoadError("corrupt RGF chunk: truncated values");
    };
    for (size_t i = 0; i < rows; ++i) {
        bool valid = (static_cast<unsigned char>(bytes[i / 8]) >> (i % 8)) & 1;
        switch (type) {
            case DataType::Double: {
                need(8);
                uint64_t bits = get_u64(bytes, pos);
                double d;
                std::memcpy(&d, &bits, 8);
                col.append_double(d, valid);
                pos += 8;
                break;
            }
            case DataType::Varchar: {
                need(4);
                uint32_t len = get_u32(bytes, pos);
                pos += 4;
                need(len);
                col.append_string(std::string(bytes.substr(pos, len)), valid);
                pos += len;
                break;
            }
            case DataType::Bool:
                need(1);
                col.append_int(bytes[pos] ? 1 : 0, valid);
                pos += 1;
                break;
            case DataType::Null: col.append_null(); break;
            default:
                need(8);
                col.append_int(static_cast<int64_t>(get_u64(bytes, pos)), valid);
                pos += 8;
                break;
        }
    }
    return col;
}

RgfReader::RgfReader(std::shared_ptr<RemoteFile> file) : file_(std::move(file)) {
    uint64_t size = file_->size();
    if (size < 12) throw LoadError(fmt::format("{}: too small to be an RGF file", file_->uri()));
    std::string tail = file_->read(size - 8, 8);
    if (tail.substr(4) != kRgfMagic) throw LoadError(fmt::format("{}: bad RGF magic", file_->uri()));
    uint32_t footer_len = get_u32(tail, 0);
    if (footer_len > size - 12) throw LoadError(fmt::format("{}: corrupt RGF footer length", file_->uri()));
    footer_ = parse_rgf_footer(file_->read(size - 8 - footer_len, footer_len));
}

Column RgfReader::chunk(size_t group, size_t column) {
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find({group, column});
        if (it != cache_.end()) return it->second;
    }
    const auto& c = footer_.row_groups[group].columns[column];
    Column col = decode_rgf_chunk(file_->read(c.offset, c.length), footer_.schema[column].type, footer_.row_groups[group].row_count);
    std::lock_guard lock(mu_);
    cache_.emplace(std::make_pair(group, column), col);
    return col;
}

Relation RgfReader::scan(const ScanOptions& options) {
    std::vector<size_t> cols;
    if (options.projection) {
        for (const auto& name : *options.projection) {
            auto it = std::find_if(footer_.schema.begin(), footer_.schema.end(), [&](const ColumnDef& d) {
                return d.name.size() == name.size() &&
                       std::equal(d.name.begin(), d.name.end(), name.begin(), [](char a, char b) { return std::tolower(a) == std::tolower(b); });
            });
            if (it == footer_.schema.end()) throw LoadError(fmt::format("unknown column '{}' in scan", name));
            size_t idx = static_cast<size_t>(it - footer_.schema.begin());
            if (std::find(cols.begin(), cols.end(), idx) == cols.end()) cols.push_back(idx);
        }
    } else {
        for (size_t i = 0; i < footer_.schema.size(); ++i) cols.push_back(i);
    }
    struct BoundPred {
        size_t column;
        const RangePredicate* pred;
    };
    std::vector<BoundPred> preds;
    for (const auto& p : options.predicates) {
        bool found = false;
        for (size_t i = 0; i < footer_.schema.size(); ++i) {
            if (footer_.schema[i].name == p.column) {
                preds.push_back({i, &p});
                found = true;
                break;
            }
        }
        if (!found) throw LoadError(fmt::format("unknown column '{}' in scan predicate", p.column));
    }

    Relation out;
    for (size_t c : cols) {
        out.schema.push_back(footer_.schema[c]);
        out.columns.emplace_back(footer_.schema[c].type);
    }
    const size_t want = options.limit ? options.offset + *options.limit : SIZE_MAX;
    size_t matched = 0;  // rows that passed the predicates so far, including skipped offset rows
    size_t extra_groups = 0;
    for (size_t g = 0; g < footer_.row_groups.size(); ++g) {
        const auto& group = footer_.row_groups[g];
        if (matched >= want) {
            // readahead for sequential paging: fetch, do not emit
            if (extra_groups++ >= options.readahead_groups) break;
            for (size_t c : cols) chunk(g, c);
            continue;
        }
        bool excluded = false;
        for (auto& bp : preds) excluded |= stats_exclude(group.columns[bp.column], *bp.pred);
        if (excluded) continue;
        if (preds.empty() && matched + group.row_count <= options.offset) {
            // window pruning is only exact without predicates
            matched += group.row_count;
            continue;
        }
        // predicate columns first, then the projected ones for surviving rows
        std::vector<uint32_t> rows;
        rows.reserve(group.row_count);
        if (preds.empty()) {
            for (uint32_t r = 0; r < group.row_count; ++r) rows.push_back(r);
        } else {
            std::vector<uint8_t> keep(group.row_count, 1);
            for (auto& bp : preds) {
                Column pc = chunk(g, bp.column);
                for (uint32_t r = 0; r < group.row_count; ++r) keep[r] &= predicate_holds(pc.get(r), *bp.pred) ? 1 : 0;
            }
            for (uint32_t r = 0; r < group.row_count; ++r) {
                if (keep[r]) rows.push_back(r);
            }
        }
        // apply the offset/limit window to the surviving rows
        std::vector<uint32_t> emit;
        for (uint32_t r : rows) {
            if (matched >= want) break;
            if (matched >= options.offset) emit.push_back(r);
            ++matched;
        }
        if (emit.empty()) continue;
        for (size_t i = 0; i < cols.size(); ++i) out.columns[i].append_column(chunk(g, cols[i]).gather(emit));
        out.row_count += emit.size();
    }
    return out;
}

}  // namespace dashql
