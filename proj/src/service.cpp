#include "railseg/service.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "railseg/dataset.hpp"
#include "railseg/image_io.hpp"
#include "railseg/io.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace railseg::service {

namespace fs = std::filesystem;
using nlohmann::json;
using dataset::Access;
using dataset::ScanStatus;

namespace {

constexpr const char* kJson = "application/json";

struct HttpError : Error {
    HttpError(int status, std::string message) : Error(std::move(message)), status(status) {}
    int status;
};

json error_json(const std::exception& e, std::string_view type) {
    json body{{"type", type}, {"message", e.what()}};
    if (const auto* missing = dynamic_cast<const dataset::MissingFilesError*>(&e)) body["missing"] = missing->missing();
    return {{"error", body}};
}

std::pair<int, json> classify(const std::exception& e) {
    if (const auto* h = dynamic_cast<const HttpError*>(&e)) return {h->status, error_json(e, "request")};
    if (dynamic_cast<const dataset::IsolationError*>(&e)) return {403, error_json(e, "isolation")};
    if (dynamic_cast<const dataset::MissingFilesError*>(&e)) return {409, error_json(e, "missing_files")};
    if (dynamic_cast<const ValidationError*>(&e)) return {400, error_json(e, "validation")};
    if (dynamic_cast<const FormatError*>(&e)) return {422, error_json(e, "format")};
    if (dynamic_cast<const json::exception*>(&e)) return {400, error_json(e, "json")};
    return {500, error_json(e, "internal")};
}

void reply_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw HttpError(400, "request body is not valid JSON");
    return j;
}

struct Job {
    std::string id;
    std::string kind;
    std::string state = "queued";  // queued, running, done, failed
    json result;
    json error;
    double created = 0.0;
    double finished = 0.0;

    json to_json() const {
        json j{{"job_id", id}, {"kind", kind}, {"state", state}, {"created", created}};
        if (state == "done") j["result"] = result;
        if (state == "failed") j["error"] = error;
        if (finished > 0.0) j["finished"] = finished;
        return j;
    }
};

}  // namespace

struct Service::Impl {
    Impl(fs::path manifest_path, ServiceOptions opts)
        : options(std::move(opts)),
          lock(manifest_path, options.lock_timeout_ms),
          ds(std::move(manifest_path)),
          writer([this] { writer_loop(); }) {
        const auto latest = ds.resolve("reports/latest.json");
        if (fs::exists(latest)) {
            const auto bytes = io::read_file(latest);
            auto j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
            if (!j.is_discarded()) latest_report = std::move(j);
        }
        routes();
    }

    ~Impl() {
        server.stop();
        {
            std::lock_guard g(queue_mutex);
            stopping = true;
        }
        queue_cv.notify_all();
        writer.join();
    }

    // Writer thread: the only place the manifest or label files change.
    void writer_loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock g(queue_mutex);
                queue_cv.wait(g, [this] { return stopping || !queue.empty(); });
                if (queue.empty()) return;
                task = std::move(queue.front());
                queue.pop_front();
            }
            std::unique_lock exclusive(data_mutex);
            task();
        }
    }

    void post(std::function<void()> task) {
        {
            std::lock_guard g(queue_mutex);
            queue.push_back(std::move(task));
        }
        queue_cv.notify_one();
    }

    template <typename F>
    auto write_sync(F fn) -> decltype(fn()) {
        std::packaged_task<decltype(fn())()> task(std::move(fn));
        auto future = task.get_future();
        post([&task] { task(); });
        return future.get();
    }

    std::string submit_job(std::string kind, std::function<json()> work) {
        std::string id;
        {
            std::lock_guard g(jobs_mutex);
            id = fmt::format("job-{}", ++job_counter);
            jobs[id] = Job{id, kind, "queued", {}, {}, dataset::now_seconds(), 0.0};
        }
        post([this, id, work = std::move(work)] {
            set_job_state(id, "running");
            try {
                auto result = work();
                std::lock_guard g(jobs_mutex);
                auto& job = jobs.at(id);
                job.state = "done";
                job.result = std::move(result);
                job.finished = dataset::now_seconds();
            } catch (const std::exception& e) {
                std::lock_guard g(jobs_mutex);
                auto& job = jobs.at(id);
                job.state = "failed";
                job.error = classify(e).second.at("error");
                job.finished = dataset::now_seconds();
            }
        });
        return id;
    }

    void set_job_state(const std::string& id, std::string state) {
        std::lock_guard g(jobs_mutex);
        jobs.at(id).state = std::move(state);
    }

    const dataset::ScanEntry& scan_or_404(const std::string& id) const {
        const auto* s = ds.manifest().find_scan(id);
        if (!s) throw HttpError(404, fmt::format("unknown scan '{}'", id));
        return *s;
    }

    json scan_summary(const dataset::ScanEntry& s) const {
        json j{{"scan_id", s.scan_id},
               {"status", dataset::to_string(s.status)},
               {"t_scan", s.t_scan},
               {"v_current", s.v_current},
               {"has_labels", s.labels.has_value()},
               {"has_image", s.image_id.has_value()}};
        std::error_code ec;
        const auto size = fs::file_size(ds.resolve(s.cloud), ec);
        j["n_points"] = ec ? json(nullptr) : json(size / io::kPointRecordBytes);
        j["image_id"] = s.image_id ? json(*s.image_id) : json(nullptr);
        return j;
    }

    json run_metrics(const std::string& run_name) {
        const auto eval = dataset::evaluate_test_split(ds, std::nullopt, std::nullopt);
        auto report = dataset::report_to_json(eval, ds.classes(), run_name);
        const auto bytes = report.dump(2);
        fs::create_directories(ds.resolve("reports"));
        io::write_file_atomic(ds.resolve("reports/latest.json"),
                              {reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
        std::lock_guard g(jobs_mutex);
        latest_report = report;
        metrics_job.reset();
        return report;
    }

    // Wraps a handler so that library errors become structured JSON replies.
    httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
        return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const std::exception& e) {
                auto [status, body] = classify(e);
                reply_json(res, body, status);
            }
        };
    }

    void routes() {
        server.Get("/scans", guarded([this](const auto&, auto& res) {
            std::shared_lock g(data_mutex);
            json out = json::array();
            for (const auto& s : ds.manifest().scans) out.push_back(scan_summary(s));
            reply_json(res, out);
        }));

        server.Get("/scans/:id", guarded([this](const auto& req, auto& res) {
            std::shared_lock g(data_mutex);
            const auto& s = scan_or_404(req.path_params.at("id"));
            auto j = scan_summary(s);
            if (s.labels && s.status != ScanStatus::Test) {
                const auto st = transfer::label_status(ds.load_labels(s, Access::Serve));
                j["label_status"] = {{"auto", st.auto_count},
                                     {"corrected", st.corrected_count},
                                     {"unlabeled", st.unlabeled_count}};
            }
            reply_json(res, j);
        }));

        server.Get("/scans/:id/points", guarded([this](const auto& req, auto& res) {
            std::shared_lock g(data_mutex);
            const auto& s = scan_or_404(req.path_params.at("id"));
            const auto bytes = io::encode_cloud(ds.load_cloud(s, Access::Serve));
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "application/octet-stream");
        }));

        server.Get("/scans/:id/labels", guarded([this](const auto& req, auto& res) {
            std::shared_lock g(data_mutex);
            const auto& s = scan_or_404(req.path_params.at("id"));
            if (!s.labels) throw HttpError(404, fmt::format("scan '{}' has no labels yet", s.scan_id));
            const auto labels = ds.load_labels(s, Access::Serve);
            if (req.get_param_value("format") == "json") {
                json prov = json::array();
                for (auto p : labels.provenance) prov.push_back(p == Provenance::Corrected ? "CORRECTED" : "AUTO");
                reply_json(res, {{"scan_id", s.scan_id}, {"labels", labels.labels}, {"provenance", prov}});
                return;
            }
            const auto bytes = io::encode_labels(labels);
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "application/octet-stream");
        }));

        server.Get("/scans/:id/image", guarded([this](const auto& req, auto& res) {
            std::shared_lock g(data_mutex);
            const auto& s = scan_or_404(req.path_params.at("id"));
            if (!s.image_id) throw HttpError(404, fmt::format("scan '{}' has no paired image", s.scan_id));
            const auto png = io::encode_palette_png(ds.load_image(s, Access::Serve));
            res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
        }));

        server.Put("/scans/:id/corrections", guarded([this](const auto& req, auto& res) {
            const auto id = req.path_params.at("id");
            auto batch = dataset::corrections_from_json(parse_body(req));
            if (!batch.scan_id.empty() && batch.scan_id != id) {
                throw HttpError(400, fmt::format("body is for scan '{}', path for '{}'", batch.scan_id, id));
            }
            batch.scan_id = id;
            const auto st = write_sync([&] {
                const auto& s = scan_or_404(id);
                if (!s.labels) throw HttpError(409, fmt::format("scan '{}' has no labels to correct", id));
                return transfer::label_status(dataset::ingest_corrections(ds, batch));
            });
            reply_json(res, {{"scan_id", id},
                             {"accepted", batch.entries.size()},
                             {"label_status",
                              {{"auto", st.auto_count}, {"corrected", st.corrected_count}, {"unlabeled", st.unlabeled_count}}}});
        }));

        server.Put("/scans/:id/status", guarded([this](const auto& req, auto& res) {
            const auto id = req.path_params.at("id");
            const auto to = dataset::parse_status(parse_body(req).at("status").template get<std::string>());
            write_sync([&] {
                scan_or_404(id);
                ds.manifest().set_status(id, to, dataset::now_seconds());
                ds.save();
            });
            std::shared_lock g(data_mutex);
            reply_json(res, scan_summary(scan_or_404(id)));
        }));

        server.Get("/classes", guarded([this](const auto&, auto& res) {
            json out = json::array();
            for (const auto& c : ds.classes().classes()) {
                const auto rgb = io::class_color(c.id);
                out.push_back({{"id", c.id}, {"name", c.name}, {"is_3d", c.is_3d}, {"color", rgb}});
            }
            reply_json(res, out);
        }));

        server.Post("/selection/run", guarded([this](const auto& req, auto& res) {
            const auto body = parse_body(req);
            const auto n = body.value("n", static_cast<std::int64_t>(al::kDefaultBatchSize));
            const auto iteration = body.value("iteration", 0);
            if (n < 1) throw HttpError(400, "n must be at least 1");
            const auto job = submit_job("selection", [this, n, iteration] {
                const auto result = dataset::select_for_labeling(ds, static_cast<std::size_t>(n), iteration,
                                                                 dataset::now_seconds());
                return dataset::to_json(result);
            });
            reply_json(res, {{"job_id", job}}, 202);
        }));

        server.Get("/selection/latest", guarded([this](const auto&, auto& res) {
            std::shared_lock g(data_mutex);
            const auto& runs = ds.manifest().al_iterations;
            if (runs.empty()) throw HttpError(404, "no selection has been run yet");
            auto j = dataset::to_json(runs.back().result);
            j["time"] = runs.back().time;
            reply_json(res, j);
        }));

        server.Get("/jobs/:id", guarded([this](const auto& req, auto& res) {
            std::lock_guard g(jobs_mutex);
            const auto it = jobs.find(req.path_params.at("id"));
            if (it == jobs.end()) throw HttpError(404, "unknown job");
            reply_json(res, it->second.to_json());
        }));

        server.Post("/metrics/run", guarded([this](const auto& req, auto& res) {
            const auto run = parse_body(req).value("run", std::string("current"));
            const auto job = submit_job("metrics", [this, run] { return run_metrics(run); });
            reply_json(res, {{"job_id", job}}, 202);
        }));

        server.Get("/metrics/report", guarded([this](const auto&, auto& res) {
            std::unique_lock g(jobs_mutex);
            if (latest_report) {
                reply_json(res, *latest_report);
                return;
            }
            if (!metrics_job) {
                g.unlock();
                auto job = submit_job("metrics", [this] { return run_metrics("current"); });
                g.lock();
                if (!metrics_job) metrics_job = job;
            }
            reply_json(res, {{"job_id", *metrics_job}}, 202);
        }));

        if (options.static_dir && !server.set_mount_point("/", options.static_dir->string())) {
            throw ValidationError(fmt::format("static directory '{}' does not exist", options.static_dir->string()));
        }
    }

    ServiceOptions options;
    dataset::ManifestLock lock;
    dataset::Dataset ds;
    httplib::Server server;

    mutable std::shared_mutex data_mutex;

    std::mutex queue_mutex;
    std::condition_variable queue_cv;
    std::deque<std::function<void()>> queue;
    bool stopping = false;

    std::mutex jobs_mutex;
    std::map<std::string, Job> jobs;
    std::uint64_t job_counter = 0;
    std::optional<json> latest_report;
    std::optional<std::string> metrics_job;

    std::thread writer;  // last: starts once everything above exists
};

Service::Service(fs::path manifest_path, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(manifest_path), std::move(options))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw IoError(fmt::format("cannot bind to {}", host));
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError(fmt::format("cannot bind to {}:{}", host, port));
    return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace railseg::service
