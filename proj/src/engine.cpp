#include "dashql/engine.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>

namespace dashql {

using nlohmann::ordered_json;

Value value_from_json(const ordered_json& v) {
    switch (v.type()) {
        case ordered_json::value_t::null: return Value{};
        case ordered_json::value_t::boolean: return Value{v.get<bool>()};
        case ordered_json::value_t::number_integer:
        case ordered_json::value_t::number_unsigned: return Value{v.get<int64_t>()};
        case ordered_json::value_t::number_float: return Value{v.get<double>()};
        case ordered_json::value_t::string: return Value{v.get<std::string>()};
        default: return Value{v.dump()};
    }
}

void mount_fixture_data(Fetcher& fetcher, const std::string& data_dir) {
    fetcher.add_mount("https://static.dashql.com/data/examples/", data_dir);
    fetcher.add_mount("s3://bucket/file1", data_dir + "/activity.rgf");
    fetcher.add_mount("https://api", data_dir + "/json_hooks.json");
    fetcher.add_mount("https://a/", data_dir);
    fetcher.set_test_root(data_dir);
}

namespace {

DataType input_data_type(InputType t) {
    switch (t) {
        case InputType::BOOLEAN: return DataType::Bool;
        case InputType::BIGINT: return DataType::BigInt;
        case InputType::DOUBLE: return DataType::Double;
        case InputType::VARCHAR:
        case InputType::FILE: return DataType::Varchar;
        case InputType::TIMESTAMP: return DataType::Timestamp;
        case InputType::INTERVAL: return DataType::Interval;
    }
    return DataType::Varchar;
}

std::string_view to_string(OutputArtifact::Kind k) {
    switch (k) {
        case OutputArtifact::Kind::TABLE: return "table";
        case OutputArtifact::Kind::CHART: return "chart";
        case OutputArtifact::Kind::QUERY: return "query";
    }
    return "?";
}

void merge_settings(ordered_json& base, const ordered_json& add) {
    for (auto it = add.begin(); it != add.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_settings(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

ordered_json script_settings(const ProgramDescription& desc) {
    ordered_json out = ordered_json::object();
    for (const auto& s : desc.statements) {
        if (s.kind == StatementKind::SET && !s.blocked) merge_settings(out, s.settings);
    }
    return out;
}

SignatureFn make_signature_fn(bool force_materialize) {
    auto cache = std::make_shared<std::map<const ProgramDescription*, MaterializationPlan>>();
    auto mu = std::make_shared<std::mutex>();
    return [cache, mu, force_materialize](const ProgramDescription& desc, uint32_t stmt) -> std::string {
        if (desc.statements[stmt].kind != StatementKind::LOAD) return "";
        std::lock_guard lock(*mu);
        auto it = cache->find(&desc);
        if (it == cache->end()) it = cache->emplace(&desc, decide_materialization(desc, force_materialize)).first;
        const LoadPlan* lp = it->second.find(stmt);
        if (!lp) return "";
        std::string sig(to_string(lp->decision));
        if (lp->projection) {
            sig += " [";
            for (const auto& c : *lp->projection) sig += c + ",";
            sig += "]";
        }
        return sig;
    };
}

std::string fetch_uri(const StatementDesc& s) {
    if (s.uri.find("://") != std::string::npos || !s.scheme) return s.uri;
    switch (*s.scheme) {
        case FetchScheme::HTTP: return "http://" + s.uri;
        case FetchScheme::HTTPS: return "https://" + s.uri;
        case FetchScheme::FILE: return "file://" + s.uri;
        case FetchScheme::TEST: return "test://" + s.uri;
        default: return s.uri;
    }
}

std::string artifact_suffix(const std::string& artifact) {
    auto colon = artifact.find(':');
    return colon == std::string::npos ? artifact : artifact.substr(colon + 1);
}

}  // namespace

ordered_json OutputArtifact::to_json(bool include_data) const {
    ordered_json j;
    j["kind"] = to_string(kind);
    j["key"] = key;
    j["relation"] = relation;
    auto schema_json = ordered_json::array();
    for (const auto& c : schema) schema_json.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    j["schema"] = std::move(schema_json);
    j["row_count"] = row_count;
    if (chart) {
        j["viz_kind"] = to_string(chart->kind);
        j["spec"] = to_vega_lite(*chart);
        j["inferred"] = chart->inferred;
        j["am4"] = am4_applied;
        j["data_rows"] = data.row_count;
    }
    if (include_data && kind != Kind::TABLE) {
        j["data"] = {{"schema", data.schema_json()}, {"rows", data.rows_json()}};
    }
    return j;
}

ordered_json UpdateResult::to_json() const {
    ordered_json j;
    auto diags = ordered_json::array();
    for (const auto& d : program->diagnostics) diags.push_back({{"message", d.message}, {"offset", d.loc.offset}, {"length", d.loc.length}});
    j["diagnostics"] = std::move(diags);
    auto entries = ordered_json::array();
    for (const auto& e : diff.entries) {
        entries.push_back({{"prev", e.prev ? ordered_json(*e.prev) : ordered_json(nullptr)},
                           {"next", e.next ? ordered_json(*e.next) : ordered_json(nullptr)},
                           {"verdict", to_string(e.verdict)},
                           {"similarity", e.similarity}});
    }
    j["diff"] = std::move(entries);
    j["report"] = report.to_json(program.get());
    return j;
}

// ---- runtime ----

class Engine::Runtime final : public TaskRuntime {
public:
    Runtime(Engine& engine, const MaterializationPlan& plan, const ordered_json& settings, ExecContext ctx)
        : e_(engine), plan_(plan), settings_(settings), ctx_(ctx) {}

    /// A replace task that did not complete leaves the previous generation's artifact behind;
    /// a fresh run would have none, so remove it unless a completed task owns the same name.
    void discard_stale(const TaskGraph& graph) {
        std::set<std::string> live;
        for (const auto& t : graph.tasks) {
            if (t.artifact && t.status == TaskStatus::COMPLETED && t.origin) live.insert(*t.artifact);
        }
        for (const auto& t : graph.tasks) {
            if (!t.replace || !t.artifact || t.status == TaskStatus::COMPLETED || live.count(*t.artifact)) continue;
            const std::string& a = *t.artifact;
            Task u;
            u.artifact = a;
            if (a.rfind("buffer:", 0) == 0) u.kind = TaskKind::DROP_BUFFER;
            else if (a.rfind("viz:", 0) == 0) u.kind = TaskKind::DROP_VIZ;
            else if (a.rfind("input:", 0) == 0) u.kind = TaskKind::DROP_INPUT;
            else u.kind = TaskKind::DROP_TABLE;
            undo(u);
        }
    }

    void execute(const TaskGraph& graph, Task& task) override {
        if (is_undo(task.kind)) return undo(task);
        const ProgramDescription& desc = *graph.desc;
        const StatementDesc& s = desc.statements[*task.origin];
        Catalog& cat = e_.catalog_;
        switch (task.kind) {
            case TaskKind::SET: return;
            case TaskKind::INPUT: {
                cat.declare_input(*s.produces, input_data_type(s.input_type.value_or(InputType::VARCHAR)));
                if (s.settings.contains("default_value")) cat.set_input(*s.produces, value_from_json(s.settings["default_value"]));
                return;
            }
            case TaskKind::FETCH: {
                auto file = e_.options_.fetcher->open(fetch_uri(s), s.settings);
                std::lock_guard lock(e_.state_mu_);
                e_.buffers_[*task.artifact] = std::move(file);
                return;
            }
            case TaskKind::LOAD: return load(desc, *task.origin, task);
            case TaskKind::CREATE_TABLE: {
                auto rel = eval_select(cat, desc.ast(), *s.query, ctx_);
                cat.create_table(*s.produces, std::make_shared<Relation>(std::move(rel)), task.replace);
                return;
            }
            case TaskKind::CREATE_VIEW:
                cat.create_view(*s.produces, ViewDef{desc.arena, *s.query}, task.replace);
                return;
            case TaskKind::QUERY: {
                OutputArtifact out;
                out.kind = OutputArtifact::Kind::QUERY;
                out.key = *task.artifact;
                out.data = eval_select(cat, desc.ast(), *s.query, ctx_);
                out.schema = out.data.schema;
                out.row_count = out.data.row_count;
                return publish(std::move(out));
            }
            case TaskKind::VISUALIZE: return visualize(s, task);
            default: throw EngineError(fmt::format("no runtime for {}", to_string(task.kind)));
        }
    }

private:
    void undo(const Task& task) {
        const std::string& artifact = *task.artifact;
        switch (task.kind) {
            case TaskKind::DROP_TABLE:
            case TaskKind::DROP_VIEW:
                if (e_.catalog_.contains(artifact)) e_.catalog_.drop(artifact);
                return;
            case TaskKind::DROP_INPUT: e_.catalog_.drop_input(artifact_suffix(artifact)); return;
            case TaskKind::DROP_BUFFER: {
                std::lock_guard lock(e_.state_mu_);
                e_.buffers_.erase(artifact);
                return;
            }
            case TaskKind::DROP_VIZ: {
                std::lock_guard lock(e_.state_mu_);
                e_.outputs_.erase(artifact);
                return;
            }
            default: return;
        }
    }

    void load(const ProgramDescription& desc, uint32_t stmt, const Task& task) {
        const StatementDesc& s = desc.statements[stmt];
        std::shared_ptr<RemoteFile> file;
        {
            std::lock_guard lock(e_.state_mu_);
            for (const auto& name : s.consumes) {
                auto it = e_.buffers_.find("buffer:" + name);
                if (it != e_.buffers_.end()) file = it->second;
            }
        }
        if (!file) throw LoadError(fmt::format("no fetched data for '{}'", s.consumes.empty() ? "" : *s.consumes.begin()));
        auto format = effective_load_format(desc, stmt);
        if (!format) throw LoadError("cannot determine the data format; add USING CSV, JSON, PARQUET or RGF");
        Catalog& cat = e_.catalog_;
        const std::string& name = *s.produces;
        switch (*format) {
            case LoadFormat::CSV:
                cat.create_table(name, std::make_shared<Relation>(load_csv(file->read_all(), s.settings)), task.replace);
                return;
            case LoadFormat::JSON:
                cat.create_table(name, std::make_shared<Relation>(load_json(file->read_all(), s.settings)), task.replace);
                return;
            case LoadFormat::PARQUET:
            case LoadFormat::RGF: {
                auto reader = std::make_shared<RgfReader>(file);
                const LoadPlan* lp = plan_.find(stmt);
                if (lp && lp->decision == Materialization::LAZY) {
                    cat.create_lazy(name, std::make_shared<RgfLazySource>(reader), task.replace);
                    return;
                }
                ScanOptions opts;
                if (lp && lp->projection) {
                    opts.projection.emplace();
                    for (const auto& col : reader->footer().schema) {
                        std::string lower = col.name;
                        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
                        if (lp->projection->count(lower) || lp->projection->count(col.name)) opts.projection->push_back(col.name);
                    }
                }
                cat.create_table(name, std::make_shared<Relation>(reader->scan(opts)), task.replace);
                return;
            }
        }
    }

    void visualize(const StatementDesc& s, const Task& task) {
        const std::string& target = *s.consumes.begin();
        OutputArtifact out;
        out.key = *task.artifact;
        out.relation = target;
        auto entry = e_.catalog_.lookup(target);
        if (!entry) throw ExecError(fmt::format("relation '{}' does not exist", target));
        VizKind kind = s.viz_kind.value_or(VizKind::TABLE);
        if (kind == VizKind::TABLE && !s.viz_verbose) {
            out.kind = OutputArtifact::Kind::TABLE;
            if (entry->kind == CatalogEntry::Kind::LAZY) {
                out.schema = entry->lazy->schema();
                out.row_count = entry->lazy->row_count();
            } else {
                Relation rel = read_relation(e_.catalog_, target, ctx_);
                out.schema = rel.schema;
                out.row_count = rel.row_count;
            }
            return publish(std::move(out));
        }
        Relation rel = read_relation(e_.catalog_, target, ctx_);
        out.kind = OutputArtifact::Kind::CHART;
        out.schema = rel.schema;
        out.row_count = rel.row_count;
        out.chart = lower_to_spec(kind, target, s.settings, rel, ctx_);
        bool am4 = e_.options_.am4;
        int64_t width = e_.options_.am4_width;
        if (settings_.contains("am4") && settings_["am4"].is_boolean()) am4 = settings_["am4"].get<bool>();
        if (settings_.contains("am4_width") && settings_["am4_width"].is_number_integer()) width = settings_["am4_width"].get<int64_t>();
        std::optional<Am4Rewrite> rw;
        if (am4) rw = inject_am4(*out.chart, rel, rel.row_count, width, ctx_);
        if (rw) {
            out.data = run_am4_rewrite(*rw, rel, ctx_);
            out.am4_applied = true;
        } else {
            out.data = std::move(rel);
        }
        publish(std::move(out));
    }

    void publish(OutputArtifact out) {
        std::lock_guard lock(e_.state_mu_);
        e_.outputs_[out.key] = std::move(out);
    }

    Engine& e_;
    const MaterializationPlan& plan_;
    const ordered_json& settings_;
    ExecContext ctx_;
};

// ---- engine ----

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
    if (!options_.fetcher) options_.fetcher = std::make_shared<Fetcher>();
    if (!options_.now) {
        options_.now = [] {
            auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch());
            return Timestamp{us.count()};
        };
    }
    run_now_ = options_.now();
}

Engine::~Engine() = default;

ExecContext Engine::context() const {
    ExecContext ctx;
    ctx.now = run_now_;
    ctx.pushdown = options_.pushdown;
    return ctx;
}

void Engine::emit(const TaskEvent& ev) {
    std::lock_guard lock(listener_mu_);
    for (auto& [id, fn] : listeners_) fn(ev);
}

size_t Engine::subscribe(Listener listener) {
    std::lock_guard lock(listener_mu_);
    listeners_[next_listener_] = std::move(listener);
    return next_listener_++;
}

void Engine::unsubscribe(size_t id) {
    std::lock_guard lock(listener_mu_);
    listeners_.erase(id);
}

UpdateResult Engine::update_script(std::string text) {
    std::lock_guard mutation(mutation_mu_);
    auto desc = std::make_shared<const ProgramDescription>(analyze(parse_script(std::move(text))));
    std::shared_ptr<const ProgramDescription> prev;
    TaskGraph prev_graph;
    {
        std::lock_guard lock(state_mu_);
        prev = program_;
        prev_graph = graph_;
    }
    UpdateResult result;
    result.program = desc;
    result.previous = prev;
    auto signature = make_signature_fn(options_.force_materialize);
    TaskGraph next;
    if (prev) {
        result.diff = diff_scripts(*prev, *desc);
        next = derive_next(prev_graph, result.diff, desc, signature);
    } else {
        ProgramDescription empty = analyze(parse_script(""));
        result.diff = diff_scripts(empty, *desc);
        next = derive_initial(desc, signature);
        next.generation = 1;
    }
    MaterializationPlan plan = decide_materialization(*desc, options_.force_materialize);
    ordered_json settings = script_settings(*desc);
    run_now_ = options_.now();
    Runtime runtime(*this, plan, settings, context());
    RunOptions opts;
    opts.workers = options_.workers;
    opts.on_event = [this](const TaskEvent& ev) { emit(ev); };
    result.report = run(next, runtime, opts);
    runtime.discard_stale(next);
    {
        std::lock_guard lock(state_mu_);
        program_ = desc;
        graph_ = std::move(next);
        plan_ = std::move(plan);
        settings_ = std::move(settings);
    }
    return result;
}

RunReport Engine::set_input(const std::string& name, const Value& value) {
    std::lock_guard mutation(mutation_mu_);
    TaskGraph graph;
    std::shared_ptr<const ProgramDescription> desc;
    MaterializationPlan plan;
    ordered_json settings;
    {
        std::lock_guard lock(state_mu_);
        graph = graph_;
        desc = program_;
        plan = plan_;
        settings = settings_;
    }
    std::optional<uint32_t> input_task;
    for (const auto& t : graph.tasks) {
        if (t.kind == TaskKind::INPUT && t.origin && desc->statements[*t.origin].produces == name) input_task = t.id;
    }
    if (!input_task) throw EngineError(fmt::format("unknown input '{}'", name));
    if (graph.tasks[*input_task].status != TaskStatus::COMPLETED) throw EngineError(fmt::format("input '{}' is not available", name));
    auto type = catalog_.input_type(name);
    if (!type) throw EngineError(fmt::format("unknown input '{}'", name));
    auto cast = cast_value(value, *type);
    if (!cast) throw EngineError(fmt::format("input '{}' expects {}, got '{}'", name, to_string(*type), to_display_string(value)));

    RunReport report;
    report.generation = graph.generation;
    Value current = catalog_.input(name);
    if ((is_null(current) && is_null(*cast)) || (!is_null(current) && !is_null(*cast) && values_equal(current, *cast))) {
        report.tasks = graph.tasks;
        for (const auto& t : graph.tasks) report.migrated += t.migrated ? 1 : 0;
        return report;
    }
    catalog_.set_input(name, *cast);
    ++graph.generation;
    for (auto& t : graph.tasks) t.migrated = false;
    for (uint32_t d : graph.downstream(*input_task)) {
        Task& t = graph.tasks[d];
        t.status = TaskStatus::PENDING;
        t.replace = true;
        t.error.clear();
    }
    run_now_ = options_.now();
    Runtime runtime(*this, plan, settings, context());
    RunOptions opts;
    opts.workers = options_.workers;
    opts.on_event = [this](const TaskEvent& ev) { emit(ev); };
    report = run(graph, runtime, opts);
    runtime.discard_stale(graph);
    std::lock_guard lock(state_mu_);
    graph_ = std::move(graph);
    return report;
}

std::shared_ptr<const ProgramDescription> Engine::program() const {
    std::lock_guard lock(state_mu_);
    return program_;
}

TaskGraph Engine::graph() const {
    std::lock_guard lock(state_mu_);
    return graph_;
}

MaterializationPlan Engine::plan() const {
    std::lock_guard lock(state_mu_);
    return plan_;
}

ordered_json Engine::settings() const {
    std::lock_guard lock(state_mu_);
    return settings_;
}

std::optional<OutputArtifact> Engine::output_for_statement(uint32_t stmt) const {
    std::lock_guard lock(state_mu_);
    for (const auto& t : graph_.tasks) {
        if (t.origin != stmt || !t.artifact || t.status != TaskStatus::COMPLETED) continue;
        auto it = outputs_.find(*t.artifact);
        if (it != outputs_.end()) return it->second;
    }
    return std::nullopt;
}

ordered_json Engine::outputs_json(bool include_data) const {
    std::lock_guard lock(state_mu_);
    ordered_json j;
    j["generation"] = graph_.generation;
    j["settings"] = settings_;
    auto inputs = ordered_json::array();
    auto statements = ordered_json::array();
    if (program_) {
        for (const auto& t : graph_.tasks) {
            if (!t.origin) continue;
            const auto& s = program_->statements[*t.origin];
            ordered_json sj;
            sj["statement"] = *t.origin;
            sj["kind"] = to_string(s.kind);
            if (s.produces) sj["name"] = *s.produces;
            sj["synthetic"] = s.synthetic;
            sj["offset"] = s.loc.offset;
            sj["length"] = s.loc.length;
            sj["status"] = to_string(t.status);
            if (!t.error.empty()) sj["error"] = t.error;
            if (t.artifact) {
                auto it = outputs_.find(*t.artifact);
                if (it != outputs_.end() && t.status == TaskStatus::COMPLETED) sj["output"] = it->second.to_json(include_data);
            }
            statements.push_back(std::move(sj));
            if (s.kind == StatementKind::INPUT && s.produces) {
                ordered_json ij;
                ij["name"] = *s.produces;
                ij["type"] = to_string(input_data_type(s.input_type.value_or(InputType::VARCHAR)));
                if (s.input_type == InputType::FILE) ij["file"] = true;
                const AstArena& a = program_->ast();
                if (auto comp = a.find_child(s.root, AttrKey::COMPONENT)) ij["component"] = a.name_value(*comp);
                ij["settings"] = s.settings;
                ij["value"] = catalog_.input_type(*s.produces) ? to_json(catalog_.input(*s.produces)) : ordered_json(nullptr);
                inputs.push_back(std::move(ij));
            }
        }
    }
    j["inputs"] = std::move(inputs);
    j["statements"] = std::move(statements);
    return j;
}

Relation Engine::table_page(const std::string& relation, size_t offset, size_t limit, bool* pushed) const {
    if (pushed) *pushed = false;
    if (options_.pushdown) {
        if (auto d = pushdown_limit_offset(catalog_, relation, offset, limit)) {
            auto entry = catalog_.lookup(d->relation);
            ScanOptions opts;
            opts.offset = d->offset;
            opts.limit = d->limit;
            opts.readahead_groups = options_.readahead_groups;
            if (pushed) *pushed = true;
            return entry->lazy->scan(opts);
        }
    }
    return read_relation(catalog_, relation, context()).slice(offset, limit);
}

Engine::Expansion Engine::expand(uint32_t stmt) const {
    auto desc = program();
    if (!desc || stmt >= desc->statements.size()) throw EngineError(fmt::format("no statement {}", stmt));
    const auto& s = desc->statements[stmt];
    Expansion ex;
    ex.loc = s.loc;
    ex.text = std::string(desc->ast().text().substr(s.loc.offset, s.loc.length));
    if (s.kind != StatementKind::VISUALIZE || s.viz_verbose) return ex;
    auto out = output_for_statement(stmt);
    if (!out || !out->chart) return ex;
    ex.text = expand_statement_text(out->relation, *out->chart);
    return ex;
}

ordered_json Engine::state_snapshot() const {
    ordered_json j;
    auto relations = ordered_json::object();
    auto names = catalog_.names();
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        try {
            relations[name] = read_relation(catalog_, name, context()).canonical();
        } catch (const std::exception& e) {
            relations[name] = std::string("error: ") + e.what();
        }
    }
    j["relations"] = std::move(relations);
    auto outputs = ordered_json::object();
    auto desc = program();
    if (desc) {
        for (uint32_t i = 0; i < desc->statements.size(); ++i) {
            auto out = output_for_statement(i);
            if (!out) continue;
            ordered_json o;
            o["kind"] = to_string(out->kind);
            o["relation"] = out->relation;
            o["row_count"] = out->row_count;
            if (out->chart) o["spec"] = to_vega_lite(*out->chart).dump();
            if (out->kind != OutputArtifact::Kind::TABLE) o["data"] = out->data.canonical();
            outputs[std::to_string(i)] = std::move(o);
        }
    }
    j["outputs"] = std::move(outputs);
    auto inputs = ordered_json::object();
    for (auto& [name, v] : catalog_.inputs()) inputs[name] = to_json(v);
    j["inputs"] = std::move(inputs);
    return j;
}

}  // namespace dashql
