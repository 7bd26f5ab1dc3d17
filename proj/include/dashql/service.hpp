#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "dashql/engine.hpp"

namespace dashql {

struct ServiceOptions {
    std::string fixtures_dir = "fixtures/data";  // mounted via mount_fixture_data
    size_t workers = 0;
    /// How long a mutation waits for a running one before answering 409.
    std::chrono::milliseconds queue_timeout{30000};
    EngineOptions engine;  // fetcher and workers are filled in by the service
};

/// Single-session HTTP service.
///
///   POST /script {text}          diagnostics, diff and run report
///   GET  /script                 current script text
///   GET  /outputs[?data=0]       per-statement artifacts
///   GET  /table/{name}?offset&limit
///   POST /input {name, value}    run report of the re-run
///   POST /expand {statement}     verbose VISUALIZE text and the span it replaces
///   GET  /events[?follow=0]      server-sent task events; `follow=0` replays and closes
///
/// Mutations are queued behind the running one; 409 once queue_timeout expires.
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds 127.0.0.1; port 0 picks a free port. Returns the bound port.
    int bind(int port);
    /// Blocks until stop().
    void listen();
    /// bind + listen on a background thread.
    int start(int port = 0);
    void stop();

    Engine& engine();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dashql
