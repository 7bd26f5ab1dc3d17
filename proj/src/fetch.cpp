#include <algorithm>
#include <filesystem>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "dashql/ingest.hpp"
#include "httplib.h"

namespace dashql {

namespace fs = std::filesystem;

void ReadLedger::record(ReadRecord r) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(r));
}

std::vector<ReadRecord> ReadLedger::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<ReadRecord> ReadLedger::records_for(std::string_view source) const {
    std::lock_guard lock(mu_);
    std::vector<ReadRecord> out;
    for (auto& r : records_) {
        if (r.source == source) out.push_back(r);
    }
    return out;
}

uint64_t ReadLedger::total_bytes() const {
    std::lock_guard lock(mu_);
    uint64_t n = 0;
    for (auto& r : records_) n += r.length;
    return n;
}

uint64_t ReadLedger::total_bytes(std::string_view source) const {
    std::lock_guard lock(mu_);
    uint64_t n = 0;
    for (auto& r : records_) {
        if (r.source == source) n += r.length;
    }
    return n;
}

size_t ReadLedger::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

void ReadLedger::clear() {
    std::lock_guard lock(mu_);
    records_.clear();
}

std::string RemoteFile::read(uint64_t offset, uint64_t length) {
    uint64_t total = size();
    if (offset > total || length > total - offset) {
        throw FetchError(fmt::format("{}: range [{}, {}) beyond end of file ({} bytes)", uri_, offset, offset + length, total));
    }
    bool degraded = false;
    std::string bytes = do_read(offset, length, degraded);
    if (ledger_) ledger_->record({uri_, offset, degraded ? total : length, degraded});
    return bytes;
}

std::string RemoteFile::read_all() { return read(0, size()); }

namespace {

class MemoryFile final : public RemoteFile {
public:
    MemoryFile(std::string uri, std::string bytes, std::shared_ptr<ReadLedger> ledger)
        : RemoteFile(std::move(uri), std::move(ledger)), bytes_(std::move(bytes)) {}
    uint64_t size() override { return bytes_.size(); }

protected:
    std::string do_read(uint64_t offset, uint64_t length, bool&) override { return bytes_.substr(offset, length); }

private:
    std::string bytes_;
};

class LocalFile final : public RemoteFile {
public:
    LocalFile(std::string uri, fs::path path, std::shared_ptr<ReadLedger> ledger)
        : RemoteFile(std::move(uri), std::move(ledger)), path_(std::move(path)) {
        std::error_code ec;
        size_ = fs::file_size(path_, ec);
        if (ec) throw FetchError(fmt::format("cannot open '{}': {}", path_.string(), ec.message()));
    }
    uint64_t size() override { return size_; }

protected:
    std::string do_read(uint64_t offset, uint64_t length, bool&) override {
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw FetchError(fmt::format("cannot open '{}'", path_.string()));
        std::string out(length, '\0');
        in.seekg(static_cast<std::streamoff>(offset));
        in.read(out.data(), static_cast<std::streamsize>(length));
        if (static_cast<uint64_t>(in.gcount()) != length) throw FetchError(fmt::format("short read from '{}'", path_.string()));
        return out;
    }

private:
    fs::path path_;
    uint64_t size_ = 0;
};

class HttpFile final : public RemoteFile {
public:
    HttpFile(std::string uri, httplib::Headers headers, std::shared_ptr<ReadLedger> ledger)
        : RemoteFile(uri, std::move(ledger)), headers_(std::move(headers)) {
        // split scheme://host[:port] from the path
        auto scheme_end = uri.find("://");
        auto path_begin = uri.find('/', scheme_end + 3);
        origin_ = path_begin == std::string::npos ? uri : uri.substr(0, path_begin);
        path_ = path_begin == std::string::npos ? "/" : uri.substr(path_begin);
    }

    uint64_t size() override {
        std::lock_guard lock(mu_);
        if (size_) return *size_;
        httplib::Client cli(origin_);
        auto res = cli.Head(path_, headers_);
        if (res && res->status == 200 && res->has_header("Content-Length")) {
            size_ = std::stoull(res->get_header_value("Content-Length"));
            return *size_;
        }
        // no usable HEAD: fall back to downloading once
        auto full = cli.Get(path_, headers_);
        if (!full || full->status != 200) throw FetchError(fmt::format("GET {} failed", uri()));
        body_ = full->body;
        size_ = body_->size();
        return *size_;
    }

protected:
    std::string do_read(uint64_t offset, uint64_t length, bool& degraded) override {
        {
            std::lock_guard lock(mu_);
            if (body_) {
                degraded = true;
                return body_->substr(offset, length);
            }
        }
        if (length == 0) return {};
        httplib::Client cli(origin_);
        auto headers = headers_;
        headers.emplace("Range", fmt::format("bytes={}-{}", offset, offset + length - 1));
        auto res = cli.Get(path_, headers);
        if (!res) throw FetchError(fmt::format("GET {} failed: {}", uri(), httplib::to_string(res.error())));
        if (res->status == 206) return res->body;
        if (res->status == 200) {
            // server ignored the range: keep the body and slice locally
            std::lock_guard lock(mu_);
            body_ = res->body;
            degraded = true;
            if (offset + length > body_->size()) throw FetchError(fmt::format("{}: short body", uri()));
            return body_->substr(offset, length);
        }
        throw FetchError(fmt::format("GET {} returned HTTP {}", uri(), res->status));
    }

private:
    httplib::Headers headers_;
    std::string origin_;
    std::string path_;
    std::mutex mu_;
    std::optional<uint64_t> size_;
    std::optional<std::string> body_;
};

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

}  // namespace

std::shared_ptr<RemoteFile> make_memory_file(std::string uri, std::string bytes, std::shared_ptr<ReadLedger> ledger) {
    return std::make_shared<MemoryFile>(std::move(uri), std::move(bytes), std::move(ledger));
}

Fetcher::Fetcher(std::shared_ptr<ReadLedger> ledger) : ledger_(std::move(ledger)) {}

void Fetcher::add_mount(std::string prefix, std::string path) {
    mounts_.emplace_back(std::move(prefix), std::move(path));
    // longest prefix first
    std::stable_sort(mounts_.begin(), mounts_.end(), [](auto& a, auto& b) { return a.first.size() > b.first.size(); });
}

std::shared_ptr<RemoteFile> Fetcher::open(const std::string& uri, const nlohmann::ordered_json& settings) const {
    for (auto& [prefix, path] : mounts_) {
        if (!starts_with(uri, prefix)) continue;
        std::string rest = uri.substr(prefix.size());
        fs::path p = rest.empty() ? fs::path(path) : fs::path(path) / rest;
        return std::make_shared<LocalFile>(uri, p, ledger_);
    }
    if (starts_with(uri, "test://")) return std::make_shared<LocalFile>(uri, fs::path(test_root_) / uri.substr(7), ledger_);
    if (starts_with(uri, "file://")) return std::make_shared<LocalFile>(uri, fs::path(uri.substr(7)), ledger_);
    if (starts_with(uri, "http://") || starts_with(uri, "https://")) {
        httplib::Headers headers;
        if (settings.is_object()) {
            if (settings.contains("method") && settings["method"] != "GET" && settings["method"] != "get") {
                throw FetchError("only GET requests are supported");
            }
            if (settings.contains("header") && settings["header"].is_object()) {
                for (auto& [k, v] : settings["header"].items()) headers.emplace(k, v.is_string() ? v.get<std::string>() : v.dump());
            }
        }
        return std::make_shared<HttpFile>(uri, std::move(headers), ledger_);
    }
    if (uri.find("://") == std::string::npos) return std::make_shared<LocalFile>(uri, fs::path(uri), ledger_);
    throw FetchError(fmt::format("no handler for '{}' (unsupported scheme and no matching mount)", uri));
}

struct TestHttpServer::Impl {
    httplib::Server server;
    std::thread thread;
};

TestHttpServer::TestHttpServer(std::string root, bool honor_ranges) : impl_(std::make_unique<Impl>()) {
    impl_->server.Get(R"(/(.*))", [root, honor_ranges](const httplib::Request& req, httplib::Response& res) {
        fs::path p = fs::path(root) / req.matches[1].str();
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            res.status = 404;
            return;
        }
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        res.set_content(std::move(body), "application/octet-stream");
        // an explicit 200 makes the server skip range slicing
        if (!honor_ranges) res.status = 200;
    });
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

TestHttpServer::~TestHttpServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string TestHttpServer::base_url() const { return fmt::format("http://127.0.0.1:{}", port_); }

}  // namespace dashql
