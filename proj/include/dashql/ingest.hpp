#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dashql/relation.hpp"
#include "json.hpp"

namespace dashql {

struct FetchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ReadRecord {
    std::string source;
    uint64_t offset = 0;
    uint64_t length = 0;
    bool degraded = false;  // server ignored the range; the full body was transferred
};

/// Append-only log of byte ranges requested from sources.
class ReadLedger {
public:
    void record(ReadRecord r);
    std::vector<ReadRecord> records() const;
    std::vector<ReadRecord> records_for(std::string_view source) const;
    uint64_t total_bytes() const;
    uint64_t total_bytes(std::string_view source) const;
    size_t size() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::vector<ReadRecord> records_;
};

/// Random-access byte source. Every read goes through the ledger.
class RemoteFile {
public:
    RemoteFile(std::string uri, std::shared_ptr<ReadLedger> ledger) : uri_(std::move(uri)), ledger_(std::move(ledger)) {}
    virtual ~RemoteFile() = default;

    const std::string& uri() const { return uri_; }
    virtual uint64_t size() = 0;
    /// Throws FetchError when the range exceeds the file.
    std::string read(uint64_t offset, uint64_t length);
    std::string read_all();

protected:
    virtual std::string do_read(uint64_t offset, uint64_t length, bool& degraded) = 0;

private:
    std::string uri_;
    std::shared_ptr<ReadLedger> ledger_;
};

std::shared_ptr<RemoteFile> make_memory_file(std::string uri, std::string bytes, std::shared_ptr<ReadLedger> ledger);

/// Resolves FETCH URIs. Mounts map a URI prefix to a local path and win over schemes,
/// which lets tests stand in for remote locations (s3://, https://) with fixture files.
class Fetcher {
public:
    explicit Fetcher(std::shared_ptr<ReadLedger> ledger = std::make_shared<ReadLedger>());

    void add_mount(std::string prefix, std::string path);
    /// Root directory of the test:// scheme.
    void set_test_root(std::string path) { test_root_ = std::move(path); }
    const std::string& test_root() const { return test_root_; }

    /// Settings keys: `method` (GET only), `header.<name>`.
    std::shared_ptr<RemoteFile> open(const std::string& uri, const nlohmann::ordered_json& settings = {}) const;
    std::shared_ptr<ReadLedger> ledger() const { return ledger_; }

private:
    std::shared_ptr<ReadLedger> ledger_;
    std::vector<std::pair<std::string, std::string>> mounts_;
    std::string test_root_ = ".";
};

/// Loopback HTTP server for fixtures. Honors single Range requests unless disabled.
class TestHttpServer {
public:
    explicit TestHttpServer(std::string root, bool honor_ranges = true);
    ~TestHttpServer();
    TestHttpServer(const TestHttpServer&) = delete;
    TestHttpServer& operator=(const TestHttpServer&) = delete;

    int port() const { return port_; }
    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

// ---- CSV / JSON ----

/// Settings: `delimiter` (single character), `header` (bool, default true),
/// `types` (object of column -> SQL type name).
Relation load_csv(std::string_view text, const nlohmann::ordered_json& settings = {});
/// Per-column inference: BIGINT, then DOUBLE, then TIMESTAMP, then VARCHAR.
DataType infer_column_type(const std::vector<std::optional<std::string>>& cells);

/// A compiled jmespath transform.
using JsonTransform = std::function<nlohmann::ordered_json(const nlohmann::ordered_json&)>;
/// A hook compiles an expression it understands and declines (nullopt) otherwise.
using JmespathHook = std::function<std::optional<JsonTransform>(std::string_view expr)>;

void register_jmespath_hook(std::string name, JmespathHook hook);
/// Built-ins: `{ a: keys(path), b: values(path) }` and `path[*].{ a: @.x, b: @.y }`.
std::vector<std::string> jmespath_hook_names();
std::optional<JsonTransform> compile_jmespath(std::string_view expr);

/// Row-major (array of objects) or column-major (object of arrays), auto-detected.
/// A `jmespath` setting is applied first.
Relation load_json(std::string_view text, const nlohmann::ordered_json& settings = {});
Relation relation_from_json(const nlohmann::ordered_json& doc);

// ---- RGF ----
//
// File layout: "RGF1" | column chunks | footer JSON | u32 footer length | "RGF1".
// A chunk is a validity bitmap (ceil(n/8) bytes, LSB first) followed by the values:
// i64 for BIGINT/TIMESTAMP/INTERVAL, f64 for DOUBLE, u8 for BOOL, and u32 length plus
// bytes for VARCHAR. All integers are little-endian.

constexpr std::string_view kRgfMagic = "RGF1";

struct RgfChunk {
    uint64_t offset = 0;
    uint64_t length = 0;
    Value min;  // NULL for all-null chunks
    Value max;
    uint64_t null_count = 0;
};

struct RgfRowGroup {
    uint64_t row_offset = 0;
    uint64_t row_count = 0;
    std::vector<RgfChunk> columns;
};

struct RgfFooter {
    std::vector<ColumnDef> schema;
    std::vector<RgfRowGroup> row_groups;
    uint64_t row_count() const;
};

enum class CompareOp : uint8_t { EQ, LT, LE, GT, GE };
std::string_view to_string(CompareOp op);

/// `column <op> value`; a conjunction of these is pushed into scans.
struct RangePredicate {
    std::string column;
    CompareOp op = CompareOp::EQ;
    Value value;
    bool operator==(const RangePredicate&) const = default;
};

/// True when the chunk statistics prove that no row satisfies the predicate.
bool stats_exclude(const RgfChunk& chunk, const RangePredicate& pred);
/// Row-level evaluation; NULL never satisfies.
bool predicate_holds(const Value& v, const RangePredicate& pred);

struct ScanOptions {
    std::optional<std::vector<std::string>> projection;  // all columns when absent
    std::vector<RangePredicate> predicates;              // conjunctive
    size_t offset = 0;
    std::optional<size_t> limit;
    /// Extra row groups read past a limit window for sequential paging.
    size_t readahead_groups = 0;
};

std::string write_rgf(const Relation& rel, size_t row_group_size);
RgfFooter parse_rgf_footer(std::string_view footer_json);

/// Reads the footer on open and caches decoded chunks, so repeated pages only pay for
/// chunks they have not seen.
class RgfReader {
public:
    explicit RgfReader(std::shared_ptr<RemoteFile> file);

    const RgfFooter& footer() const { return footer_; }
    const std::shared_ptr<RemoteFile>& file() const { return file_; }
    /// Reads only chunks of projected columns in row groups that survive statistics
    /// pruning and the offset/limit window. Predicates are applied to rows as well.
    Relation scan(const ScanOptions& options);

private:
    Column chunk(size_t group, size_t column);

    std::shared_ptr<RemoteFile> file_;
    RgfFooter footer_;
    std::mutex mu_;
    std::map<std::pair<size_t, size_t>, Column> cache_;
};

/// Decodes one chunk. Exposed for the stats-honesty tests.
Column decode_rgf_chunk(std::string_view bytes, DataType type, size_t rows);

}  // namespace dashql
