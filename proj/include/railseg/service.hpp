#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace railseg::service {

struct ServiceOptions {
    std::optional<std::filesystem::path> static_dir;  // mounted at / when set
    int lock_timeout_ms = 2000;
};

/// HTTP front end over one dataset. Holds the manifest lock for its whole
/// lifetime. Reads run concurrently; every mutation is executed by a single
/// writer thread, and scoring / evaluation run there as jobs.
class Service {
public:
    explicit Service(std::filesystem::path manifest_path, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds without serving; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();
    /// Blocks until the server accepts connections.
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace railseg::service
