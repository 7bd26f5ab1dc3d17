#include "dashql/service.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"

namespace dashql {

using nlohmann::ordered_json;

namespace {

void reply(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view message) {
    reply(res, status, ordered_json{{"error", message}});
}

std::optional<ordered_json> parse_body(const httplib::Request& req, httplib::Response& res) {
    auto body = ordered_json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
        reply_error(res, 400, "request body must be a JSON object");
        return std::nullopt;
    }
    return body;
}

std::optional<size_t> parse_count(const httplib::Request& req, const char* key, size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos || v.size() > 18) return std::nullopt;
    return static_cast<size_t>(std::stoull(v));
}

/// Buffered event frames; SSE connections keep their own cursor into it.
class EventHub {
public:
    void push(std::string_view event, const ordered_json& data) {
        std::lock_guard lock(mu_);
        uint64_t id = base_ + frames_.size();
        frames_.push_back(fmt::format("id: {}\nevent: {}\ndata: {}\n\n", id, event, data.dump()));
        while (frames_.size() > kCapacity) {
            frames_.pop_front();
            ++base_;
        }
        cv_.notify_all();
    }

    /// Frames from `cursor` on, waiting up to `wait` when there are none.
    std::vector<std::string> take(uint64_t& cursor, std::chrono::milliseconds wait) {
        std::unique_lock lock(mu_);
        if (wait.count() > 0) cv_.wait_for(lock, wait, [&] { return stopped_ || cursor < base_ + frames_.size(); });
        std::vector<std::string> out;
        cursor = std::max(cursor, base_);
        for (; cursor < base_ + frames_.size(); ++cursor) out.push_back(frames_[cursor - base_]);
        return out;
    }

    void stop() {
        std::lock_guard lock(mu_);
        stopped_ = true;
        cv_.notify_all();
    }

    bool stopped() const {
        std::lock_guard lock(mu_);
        return stopped_;
    }

private:
    static constexpr size_t kCapacity = 10000;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> frames_;
    uint64_t base_ = 0;
    bool stopped_ = false;
};

}  // namespace

struct Service::Impl {
    explicit Impl(ServiceOptions opts) : options(std::move(opts)) {
        auto fetcher = options.engine.fetcher ? options.engine.fetcher : std::make_shared<Fetcher>();
        mount_fixture_data(*fetcher, options.fixtures_dir);
        EngineOptions eo = options.engine;
        eo.fetcher = fetcher;
        if (options.workers) eo.workers = options.workers;
        engine = std::make_unique<Engine>(eo);
        engine->subscribe([this](const TaskEvent& ev) { events.push("task", ev.to_json()); });
        routes();
    }

    template <typename F>
    void mutate(httplib::Response& res, F&& f) {
        std::unique_lock lock(mutation, std::defer_lock);
        if (!lock.try_lock_for(options.queue_timeout)) {
            reply_error(res, 409, "another script or input change is still running");
            return;
        }
        f();
    }

    void routes() {
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                reply_error(res, 500, e.what());
            } catch (...) {
                reply_error(res, 500, "unknown error");
            }
        });

        server.Post("/script", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            if (!body->contains("text") || !(*body)["text"].is_string()) return reply_error(res, 400, "'text' must be a string");
            mutate(res, [&] {
                try {
                    auto result = engine->update_script((*body)["text"].get<std::string>());
                    {
                        std::lock_guard lock(script_mu);
                        script = (*body)["text"].get<std::string>();
                    }
                    auto j = result.to_json();
                    events.push("run", ordered_json{{"generation", result.report.generation},
                                                    {"executed", result.report.executed},
                                                    {"failed", result.report.failed},
                                                    {"migrated", result.report.migrated}});
                    reply(res, 200, j);
                } catch (const std::exception& e) {
                    reply_error(res, 422, e.what());
                }
            });
        });

        server.Get("/script", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(script_mu);
            reply(res, 200, ordered_json{{"text", script}});
        });

        server.Get("/outputs", [this](const httplib::Request& req, httplib::Response& res) {
            bool data = !req.has_param("data") || req.get_param_value("data") != "0";
            reply(res, 200, engine->outputs_json(data));
        });

        server.Get(R"(/table/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::string name = req.matches[1];
            auto offset = parse_count(req, "offset", 0);
            auto limit = parse_count(req, "limit", 50);
            if (!offset || !limit) return reply_error(res, 400, "offset and limit must be non-negative integers");
            if (!engine->catalog().contains(name)) return reply_error(res, 404, fmt::format("unknown relation '{}'", name));
            bool pushed = false;
            Relation page = engine->table_page(name, *offset, *limit, &pushed);
            ordered_json j;
            j["name"] = name;
            j["offset"] = *offset;
            j["limit"] = *limit;
            j["pushed_down"] = pushed;
            j["schema"] = page.schema_json();
            j["rows"] = page.rows_json();
            reply(res, 200, j);
        });

        server.Post("/input", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            if (!body->contains("name") || !(*body)["name"].is_string() || !body->contains("value")) {
                return reply_error(res, 400, "expected {name, value}");
            }
            std::string name = (*body)["name"].get<std::string>();
            if (!engine->catalog().input_type(name)) return reply_error(res, 404, fmt::format("unknown input '{}'", name));
            mutate(res, [&] {
                try {
                    auto report = engine->set_input(name, value_from_json((*body)["value"]));
                    events.push("run", ordered_json{{"generation", report.generation},
                                                    {"executed", report.executed},
                                                    {"failed", report.failed},
                                                    {"migrated", report.migrated}});
                    reply(res, 200, report.to_json(engine->program().get()));
                } catch (const EngineError& e) {
                    reply_error(res, 400, e.what());
                }
            });
        });

        server.Post("/expand", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            if (!body->contains("statement") || !(*body)["statement"].is_number_unsigned()) {
                return reply_error(res, 400, "'statement' must be a statement index");
            }
            try {
                auto ex = engine->expand((*body)["statement"].get<uint32_t>());
                reply(res, 200, ordered_json{{"statement", (*body)["statement"]},
                                             {"text", ex.text},
                                             {"offset", ex.loc.offset},
                                             {"length", ex.loc.length}});
            } catch (const EngineError& e) {
                reply_error(res, 404, e.what());
            }
        });

        server.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
            bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
            auto cursor = std::make_shared<uint64_t>(0);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, cursor, follow](size_t, httplib::DataSink& sink) {
                auto frames = events.take(*cursor, follow ? std::chrono::milliseconds(500) : std::chrono::milliseconds(0));
                if (frames.empty() && follow && !events.stopped()) {
                    static constexpr std::string_view ping = ": ping\n\n";
                    return sink.write(ping.data(), ping.size());
                }
                for (const auto& f : frames) {
                    if (!sink.write(f.data(), f.size())) return false;
                }
                if (!follow || events.stopped()) sink.done();
                return true;
            });
        });
    }

    ServiceOptions options;
    std::unique_ptr<Engine> engine;
    httplib::Server server;
    std::timed_mutex mutation;
    std::mutex script_mu;
    std::string script;
    EventHub events;
    std::thread thread;
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind(int port) {
    if (port == 0) return impl_->server.bind_to_any_port("127.0.0.1");
    if (!impl_->server.bind_to_port("127.0.0.1", port)) throw std::runtime_error(fmt::format("cannot bind port {}", port));
    return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

int Service::start(int port) {
    int bound = bind(port);
    if (bound < 0) throw std::runtime_error("cannot bind a port");
    impl_->thread = std::thread([this] { listen(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Service::stop() {
    if (!impl_) return;
    impl_->events.stop();
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

Engine& Service::engine() { return *impl_->engine; }

}  // namespace dashql
