#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dashql/engine.hpp"

namespace dashql::test {

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string fixture_dir() { return DASHQL_FIXTURE_DIR; }
inline std::string script_dir() { return DASHQL_SCRIPT_DIR; }
inline std::string script(const std::string& name) { return read_text(std::filesystem::path(script_dir()) / (name + ".dashql")); }

/// Every corpus script, sorted by file name.
inline std::vector<std::pair<std::string, std::string>> corpus() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : std::filesystem::directory_iterator(script_dir())) {
        if (e.path().extension() == ".dashql") out.emplace_back(e.path().stem().string(), read_text(e.path()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// The clock every test engine uses; the hourly activity fixture ends one day earlier.
inline Timestamp test_now() { return *parse_timestamp("2022-10-24 00:00:00"); }

/// Fixture mounts, fixed clock, no readahead (ledger-exact), two workers.
inline EngineOptions engine_options(std::shared_ptr<ReadLedger> ledger = std::make_shared<ReadLedger>()) {
    EngineOptions opts;
    opts.fetcher = std::make_shared<Fetcher>(std::move(ledger));
    mount_fixture_data(*opts.fetcher, fixture_dir());
    opts.workers = 2;
    opts.now = [] { return test_now(); };
    opts.readahead_groups = 0;
    return opts;
}

inline std::vector<StatementKind> kinds(const ParsedScript& s) {
    std::vector<StatementKind> out;
    for (const auto& st : s.statements) out.push_back(st.kind);
    return out;
}

}  // namespace dashql::test
