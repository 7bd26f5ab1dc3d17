// dashql command-line entry point.
// Exit codes: 0 success, 1 script errors (diagnostics or failed tasks), 2 usage errors.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "dashql/engine.hpp"
#include "dashql/service.hpp"

namespace fs = std::filesystem;
using namespace dashql;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kScriptError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError(fmt::format("cannot read '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1-based line and column of a byte offset.
std::pair<size_t, size_t> line_col(const std::string& text, size_t offset) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

bool print_diagnostics(const std::string& path, const ProgramDescription& desc) {
    for (const auto& d : desc.diagnostics) {
        auto [line, col] = line_col(desc.ast().text(), d.loc.offset);
        std::cerr << fmt::format("{}:{}:{}: error: {} [{},{})\n", path, line, col, d.message, d.loc.offset, d.loc.offset + d.loc.length);
    }
    return !desc.diagnostics.empty();
}

ProgramDescription load_program(const std::string& path) { return analyze(parse_script(read_file(path))); }

void strip_timings(ordered_json& j) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "duration_ms" || it.key() == "wall_ms") {
                it.value() = 0;
            } else {
                strip_timings(it.value());
            }
        }
    } else if (j.is_array()) {
        for (auto& v : j) strip_timings(v);
    }
}

std::atomic<bool> g_interrupted{false};

// ---- subcommands ----

int cmd_parse(const std::string& path, bool dump_ast) {
    ParsedScript script = parse_script(read_file(path));
    ProgramDescription desc = analyze(script);
    if (dump_ast) {
        std::cout << script.arena->dump();
    } else {
        for (size_t i = 0; i < script.statements.size(); ++i) {
            const auto& s = script.statements[i];
            std::cout << fmt::format("{:>3}  {:<15} [{},{})  {}\n", i, to_string(s.kind), s.loc.offset, s.loc.offset + s.loc.length,
                                     print_node(*script.arena, s.root));
        }
    }
    return print_diagnostics(path, desc) ? kScriptError : kOk;
}

int cmd_diff(const std::string& prev_path, const std::string& next_path) {
    ProgramDescription prev = load_program(prev_path);
    ProgramDescription next = load_program(next_path);
    bool errors = print_diagnostics(prev_path, prev);
    errors = print_diagnostics(next_path, next) || errors;
    std::cout << format_diff(diff_scripts(prev, next), prev, next);
    return errors ? kScriptError : kOk;
}

int cmd_plan(const std::string& path) {
    ProgramDescription desc = load_program(path);
    std::cout << to_dot(desc);
    return print_diagnostics(path, desc) ? kScriptError : kOk;
}

struct RunFlags {
    std::string fixtures_dir = "fixtures/data";
    size_t workers = 0;
    std::string now;
    bool json = false;
    bool outputs = false;
    bool no_timings = false;
    bool no_am4 = false;
};

EngineOptions engine_options(const RunFlags& flags) {
    EngineOptions opts;
    opts.fetcher = std::make_shared<Fetcher>();
    mount_fixture_data(*opts.fetcher, flags.fixtures_dir);
    opts.workers = flags.workers;
    opts.am4 = !flags.no_am4;
    if (!flags.now.empty()) {
        auto ts = parse_timestamp(flags.now);
        if (!ts) throw UsageError(fmt::format("--now: cannot parse '{}'", flags.now));
        opts.now = [t = *ts] { return t; };
    }
    return opts;
}

void print_update(const UpdateResult& result, const Engine& engine, const RunFlags& flags) {
    if (flags.json) {
        ordered_json j = result.to_json();
        if (flags.outputs) j["outputs"] = engine.outputs_json(true);
        if (flags.no_timings) strip_timings(j);
        std::cout << j.dump(2) << "\n";
        return;
    }
    const auto& desc = *result.program;
    std::cout << fmt::format("generation {}: {} executed, {} migrated, {} failed, {} skipped\n", result.report.generation,
                             result.report.executed, result.report.migrated, result.report.failed, result.report.skipped);
    for (const auto& t : result.report.tasks) {
        std::string stmt = t.origin ? fmt::format("stmt {}", *t.origin) : std::string("undo");
        std::string what = t.artifact.value_or("");
        if (t.origin && desc.statements[*t.origin].produces) what = *desc.statements[*t.origin].produces;
        std::cout << fmt::format("{:>3}  {:<13} {:<8} {:<10} {}{}\n", t.id, to_string(t.kind), stmt, to_string(t.status), what,
                                 t.error.empty() ? "" : "  error: " + t.error);
    }
    if (flags.outputs) std::cout << engine.outputs_json(false).dump(2) << "\n";
}

bool update_failed(const UpdateResult& r) { return !r.program->diagnostics.empty() || r.report.failed > 0; }

int cmd_run(const std::string& path, const RunFlags& flags) {
    Engine engine(engine_options(flags));
    auto result = engine.update_script(read_file(path));
    print_diagnostics(path, *result.program);
    print_update(result, engine, flags);
    return update_failed(result) ? kScriptError : kOk;
}

int cmd_watch(const std::string& path, const RunFlags& flags, int interval_ms, int max_updates) {
    Engine engine(engine_options(flags));
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::optional<fs::file_time_type> seen;
    int updates = 0;
    bool last_failed = false;
    while (!g_interrupted) {
        std::error_code ec;
        auto mtime = fs::last_write_time(path, ec);
        if (ec) throw UsageError(fmt::format("cannot stat '{}'", path));
        if (!seen || mtime != *seen) {
            seen = mtime;
            auto result = engine.update_script(read_file(path));
            if (result.previous) std::cout << format_diff(result.diff, *result.previous, *result.program);
            print_diagnostics(path, *result.program);
            print_update(result, engine, flags);
            std::cout.flush();
            last_failed = update_failed(result);
            if (max_updates > 0 && ++updates >= max_updates) break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms));
    }
    return last_failed ? kScriptError : kOk;
}

int cmd_serve(int port, const std::string& fixtures_dir, size_t workers) {
    ServiceOptions opts;
    opts.fixtures_dir = fixtures_dir;
    opts.workers = workers;
    Service service(opts);
    int bound = service.bind(port);
    if (bound <= 0) throw std::runtime_error(fmt::format("cannot bind port {}", port));
    std::cout << fmt::format("listening on http://127.0.0.1:{}\n", bound) << std::flush;
    service.listen();
    return kOk;
}

int cmd_rgf_pack(const std::string& csv, const std::string& out, size_t row_group) {
    if (row_group == 0) throw UsageError("--row-group must be positive");
    Relation rel = load_csv(read_file(csv));
    std::ofstream f(out, std::ios::binary);
    std::string bytes = write_rgf(rel, row_group);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", out));
    std::cout << fmt::format("{} rows, {} row groups, {} bytes\n", rel.row_count, (rel.row_count + row_group - 1) / row_group, bytes.size());
    return kOk;
}

int cmd_rgf_stats(const std::string& path) {
    Fetcher fetcher;
    RgfReader reader(fetcher.open(fs::absolute(path).string()));
    const auto& footer = reader.footer();
    ordered_json j;
    j["rows"] = footer.row_count();
    auto schema = ordered_json::array();
    for (const auto& c : footer.schema) schema.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    j["schema"] = std::move(schema);
    auto groups = ordered_json::array();
    for (const auto& g : footer.row_groups) {
        ordered_json gj{{"row_offset", g.row_offset}, {"row_count", g.row_count}};
        auto cols = ordered_json::array();
        for (size_t c = 0; c < g.columns.size(); ++c) {
            const auto& ch = g.columns[c];
            cols.push_back({{"column", footer.schema[c].name},
                            {"offset", ch.offset},
                            {"length", ch.length},
                            {"min", to_json(ch.min)},
                            {"max", to_json(ch.max)},
                            {"null_count", ch.null_count}});
        }
        gj["columns"] = std::move(cols);
        groups.push_back(std::move(gj));
    }
    j["row_groups"] = std::move(groups);
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_bench_am4(size_t rows, int64_t width, const std::string& algo, int repeat, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, 1.0);
    std::vector<double> xs(rows), ys(rows);
    double level = 0;
    for (size_t i = 0; i < rows; ++i) {
        xs[i] = static_cast<double>(i);
        ys[i] = level += step(rng);
    }
    Am4Params params{width, 0.0, rows ? static_cast<double>(rows - 1) : 0.0};
    std::vector<std::string> algos;
    if (algo == "all") {
        algos = {"am4", "am4-parallel", "m4"};
    } else {
        algos = {algo};
    }
    for (const auto& a : algos) {
        for (int r = 0; r < repeat; ++r) {
            auto t0 = std::chrono::steady_clock::now();
            std::vector<BinnedPoint> out;
            if (a == "am4") {
                out = am4_native(xs, ys, params);
            } else if (a == "am4-parallel") {
                out = am4_parallel(xs, ys, params);
            } else {
                out = m4_oracle(xs, ys, params);
            }
            double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            ordered_json j{{"algo", a}, {"rows_in", rows}, {"width", width}, {"rows_out", out.size()}, {"wall_ms", ms}};
            std::cout << j.dump() << "\n";
        }
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DashQL engine: parse, diff, plan, run and serve dashboard scripts"};
    app.require_subcommand(1);

    std::string file, prev_file, next_file;
    bool dump_ast = false;
    auto* parse = app.add_subcommand("parse", "parse a script and list its statements");
    parse->add_option("file", file, "script file")->required();
    parse->add_flag("--dump-ast", dump_ast, "print the AST node buffer");

    auto* diff = app.add_subcommand("diff", "map the statements of two script versions");
    diff->add_option("prev", prev_file, "previous script")->required();
    diff->add_option("next", next_file, "next script")->required();

    auto* plan = app.add_subcommand("plan", "print the statement dependency graph as DOT");
    plan->add_option("file", file, "script file")->required();

    RunFlags flags;
    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("file", file, "script file")->required();
        cmd->add_option("--fixtures-dir", flags.fixtures_dir, "directory behind the test:// scheme and example mounts");
        cmd->add_option("--workers", flags.workers, "task workers (default: DASHQL_WORKERS or all cores)");
        cmd->add_option("--now", flags.now, "fixed timestamp for now()");
        cmd->add_flag("--json", flags.json, "print the report as JSON");
        cmd->add_flag("--outputs", flags.outputs, "also print the outputs");
        cmd->add_flag("--no-timings", flags.no_timings, "zero durations in JSON output");
        cmd->add_flag("--no-am4", flags.no_am4, "disable AM4 downsampling");
    };
    auto* run = app.add_subcommand("run", "execute a script");
    add_run_flags(run);
    int interval_ms = 300, max_updates = 0;
    auto* watch = app.add_subcommand("watch", "re-run a script incrementally whenever the file changes");
    add_run_flags(watch);
    watch->add_option("--interval", interval_ms, "poll interval in milliseconds")->check(CLI::PositiveNumber);
    watch->add_option("--max-updates", max_updates, "stop after this many updates (0: run until interrupted)");

    int port = 8080;
    std::string serve_fixtures = "fixtures/data";
    size_t serve_workers = 0;
    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    serve->add_option("--port", port, "port on 127.0.0.1 (0: any)");
    serve->add_option("--fixtures-dir", serve_fixtures, "fixture data directory");
    serve->add_option("--workers", serve_workers, "task workers");

    std::string csv, out, rgf_file;
    size_t row_group = 1000;
    auto* rgf = app.add_subcommand("rgf", "row-group file tools");
    rgf->require_subcommand(1);
    auto* pack = rgf->add_subcommand("pack", "convert a CSV file");
    pack->add_option("csv", csv, "input CSV")->required();
    pack->add_option("out", out, "output file")->required();
    pack->add_option("--row-group", row_group, "rows per row group");
    auto* stats = rgf->add_subcommand("stats", "print the footer statistics");
    stats->add_option("file", rgf_file, "RGF file")->required();

    size_t rows = 500'000;
    int64_t width = 2000;
    std::string algo = "all";
    int repeat = 1;
    uint64_t seed = 42;
    auto* bench = app.add_subcommand("bench", "micro benchmarks");
    bench->require_subcommand(1);
    auto* bench_am4 = bench->add_subcommand("am4", "AM4 vs M4 on a random walk");
    bench_am4->add_option("--rows", rows, "input rows");
    bench_am4->add_option("--width", width, "pixel width")->check(CLI::PositiveNumber);
    bench_am4->add_option("--algo", algo, "am4, am4-parallel, m4 or all")->check(CLI::IsMember({"am4", "am4-parallel", "m4", "all"}));
    bench_am4->add_option("--repeat", repeat, "repetitions")->check(CLI::PositiveNumber);
    bench_am4->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (parse->parsed()) return cmd_parse(file, dump_ast);
        if (diff->parsed()) return cmd_diff(prev_file, next_file);
        if (plan->parsed()) return cmd_plan(file);
        if (run->parsed()) return cmd_run(file, flags);
        if (watch->parsed()) return cmd_watch(file, flags, interval_ms, max_updates);
        if (serve->parsed()) return cmd_serve(port, serve_fixtures, serve_workers);
        if (pack->parsed()) return cmd_rgf_pack(csv, out, row_group);
        if (stats->parsed()) return cmd_rgf_stats(rgf_file);
        if (bench_am4->parsed()) return cmd_bench_am4(rows, width, algo, repeat, seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kScriptError;
    }
    return kUsageError;
}
