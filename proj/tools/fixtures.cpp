// Writes the generated fixture files and copies the committed ones next to them.
// Output is a pure function of the fixed seeds below.
//
//   dashql_fixtures <out-dir> [<committed-data-dir>]

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <fmt/format.h>

#include "dashql/ingest.hpp"

namespace fs = std::filesystem;
using namespace dashql;

namespace {

constexpr int64_t kMinute = 60'000'000;
constexpr int64_t kHour = 60 * kMinute;

Timestamp ts(std::string_view text) { return *parse_timestamp(text); }

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Hourly hits per site over the nine days before the engine clock used in tests.
Relation activity_relation() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int64_t> hits(0, 500);
    auto rel = Relation::with_schema({{"ts", DataType::Timestamp}, {"hits", DataType::BigInt}, {"site", DataType::Varchar}});
    const char* sites[] = {"app", "docs", "www"};
    Timestamp start = ts("2022-10-15 00:00:00");
    for (int64_t h = 0; h < 9 * 24; ++h) {
        for (const char* s : sites) rel.append_row({Timestamp{start.micros + h * kHour}, hits(rng), std::string(s)});
    }
    return rel;
}

// 10 row groups of 1000 rows, timestamps strictly increasing by one minute.
Relation infovis() {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int64_t> views(0, 100);
    std::uniform_int_distribution<int> site(0, 3);
    const char* sites[] = {"https://app.dashql.com", "https://www.dashql.com", "https://github.com/dashql", "https://docs.dashql.com"};
    auto rel = Relation::with_schema({{"timestamp", DataType::Timestamp}, {"website", DataType::Varchar}, {"views", DataType::BigInt}});
    Timestamp start = ts("2022-10-01 00:00:00");
    for (int64_t i = 0; i < 10'000; ++i) {
        rel.append_row({Timestamp{start.micros + i * kMinute}, std::string(sites[site(rng)]), views(rng)});
    }
    return rel;
}

// Hourly hits of three sites from 15.10 00:00 to 23.10 00:00; extrema pinned to 1205 and 4178.
std::string site_activity_csv() {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int64_t> hits(1206, 4177);
    const char* sites[] = {"https://github.com/dashql", "https://app.dashql.com", "https://www.dashql.com"};
    Timestamp start = ts("2022-10-15 00:00:00");
    const int64_t hours = 8 * 24;
    std::string out = "time,hits,site\n";
    for (int64_t h = 0; h <= hours; ++h) {
        for (int s = 0; s < 3; ++s) {
            int64_t v = hits(rng);
            if (h == 37 && s == 1) v = 1205;
            if (h == 131 && s == 2) v = 4178;
            out += fmt::format("{},{},{}\n", format_timestamp(Timestamp{start.micros + h * kHour}), v, sites[s]);
        }
    }
    return out;
}

// Three sensors, 20000 readings each, as a random walk.
Relation readings() {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> step(0.0, 1.0);
    auto rel = Relation::with_schema({{"t", DataType::Timestamp}, {"v", DataType::Double}, {"sensor", DataType::Varchar}});
    Timestamp start = ts("2022-10-01 00:00:00");
    const char* sensors[] = {"north", "south", "east"};
    double level[] = {20, 15, 10};
    for (int64_t i = 0; i < 20'000; ++i) {
        for (int s = 0; s < 3; ++s) {
            level[s] += step(rng);
            rel.append_row({Timestamp{start.micros + i * 10'000'000}, level[s], std::string(sensors[s])});
        }
    }
    return rel;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2 || argc > 3) {
        std::cerr << "usage: dashql_fixtures <out-dir> [<committed-data-dir>]\n";
        return 2;
    }
    try {
        fs::path out = argv[1];
        fs::create_directories(out);
        if (argc == 3) {
            for (const auto& entry : fs::directory_iterator(argv[2])) {
                if (entry.is_regular_file()) fs::copy_file(entry.path(), out / entry.path().filename(), fs::copy_options::overwrite_existing);
            }
        }
        write_file(out / "activity.rgf", write_rgf(activity_relation(), 72));
        write_file(out / "infovis.parquet", write_rgf(infovis(), 1000));
        write_file(out / "site_activity.csv", site_activity_csv());
        write_file(out / "b.parquet", write_rgf(readings(), 10'000));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
