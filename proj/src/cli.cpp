#include "railseg/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "railseg/dataset.hpp"
#include "railseg/io.hpp"
#include "railseg/service.hpp"

namespace railseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
    const auto bytes = io::read_file(path);
    auto j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw ValidationError(fmt::format("'{}' is not valid JSON", path.string()));
    return j;
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto text = j.dump(2) + "\n";
    io::write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

int report_error(std::ostream& err, const std::exception& e, std::string_view type, int code) {
    json body{{"type", type}, {"message", e.what()}};
    if (const auto* m = dynamic_cast<const dataset::MissingFilesError*>(&e)) body["missing"] = m->missing();
    err << json{{"error", body}}.dump() << "\n";
    return code;
}

json pairs_json(const std::vector<preprocess::SyncPair>& pairs) {
    json out = json::array();
    for (const auto& p : pairs) out.push_back({{"scan_id", p.scan_id}, {"image_id", p.image_id}, {"dt", p.dt}});
    return out;
}

int serve(const fs::path& manifest, const std::string& host, int port, const std::optional<fs::path>& static_dir,
          std::ostream& out) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::Service svc(manifest, {static_dir});
    const int bound = svc.bind(host, port);
    std::thread server([&] { svc.run(); });
    svc.wait_until_ready();
    out << json{{"listening", fmt::format("{}:{}", host, bound)}}.dump() << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    svc.stop();
    server.join();
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Railway LiDAR annotation toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    fs::path manifest_path;
    auto add_manifest = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
    };

    dataset::PreprocessOptions pre;
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Drop reflections and statistical outliers");
    add_manifest(preprocess_cmd);
    preprocess_cmd->add_option("--min-range", pre.min_range, "Points closer than this are reflections (m)")
        ->check(CLI::NonNegativeNumber);
    preprocess_cmd->add_option("--knn-k", pre.knn_k, "Neighbours per point")->check(CLI::PositiveNumber);
    preprocess_cmd->add_option("--knn-alpha", pre.knn_alpha, "Std-dev multiplier")->check(CLI::NonNegativeNumber);

    double max_dt_ms = preprocess::kDefaultMaxSyncDt * 1000.0;
    auto* sync_cmd = app.add_subcommand("sync", "Pair scans with camera images");
    add_manifest(sync_cmd);
    sync_cmd->add_option("--max-dt-ms", max_dt_ms, "Pairing gate (ms)")->check(CLI::PositiveNumber);

    std::string speed_source = "manifest";
    auto* motion_cmd = app.add_subcommand("motion-correct", "Undo the sweep distortion of each scan");
    add_manifest(motion_cmd);
    motion_cmd->add_option("--speed-source", speed_source, "Where the vehicle speed comes from")
        ->check(CLI::IsMember({"manifest"}));

    std::optional<fs::path> class_map_path;
    auto* transfer_cmd = app.add_subcommand("transfer", "Project label images onto paired RAW scans");
    add_manifest(transfer_cmd);
    transfer_cmd->add_option("--class-map", class_map_path, "Replace the manifest's image-class map with this file")
        ->check(CLI::ExistingFile);

    std::size_t select_n = al::kDefaultBatchSize;
    std::string iteration_arg = "auto";
    auto* select_cmd = app.add_subcommand("select", "Rank COARSE scans and flag the next batch for annotation");
    add_manifest(select_cmd);
    select_cmd->add_option("--n", select_n, "Batch size")->check(CLI::PositiveNumber);
    select_cmd->add_option("--iteration", iteration_arg, "Iteration number or 'auto'");

    std::optional<fs::path> pred_dir, gt_dir, report_path;
    std::string run_name = "current";
    std::vector<fs::path> compare;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "IoU report over the TEST split");
    add_manifest(evaluate_cmd);
    evaluate_cmd->add_option("--pred-dir", pred_dir, "Directory of <scan_id>.label or .pred files")
        ->check(CLI::ExistingDirectory);
    evaluate_cmd->add_option("--gt-dir", gt_dir, "Directory of <scan_id>.label ground truth")
        ->check(CLI::ExistingDirectory);
    evaluate_cmd->add_option("--report", report_path, "Write the JSON report here");
    evaluate_cmd->add_option("--run-name", run_name, "Name stored in the report");
    evaluate_cmd->add_option("--compare", compare, "Earlier reports to compute improvements against")
        ->check(CLI::ExistingFile);

    dataset::SynthDatasetOptions synth_opts;
    fs::path synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_opts.seed, "Random seed");
    synth_cmd->add_option("--scans", synth_opts.scans, "Number of scans")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--test-scans", synth_opts.test_scans, "Scans reserved for TEST");
    synth_cmd->add_option("--points", synth_opts.points_per_scan, "Scene points per scan")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--speed", synth_opts.speed, "Vehicle speed (m/s)")->check(CLI::Range(0.0, 60.0));

    double mock_noise = 0.5;
    auto* mock_cmd = app.add_subcommand(
        "mock-predict", "Write stand-in prediction matrices derived from the current labels (for trying the loop)");
    add_manifest(mock_cmd);
    mock_cmd->add_option("--noise", mock_noise, "0 = one-hot, 1 = random")->check(CLI::Range(0.0, 1.0));

    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<fs::path> static_dir;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP API for the annotation client");
    add_manifest(serve_cmd);
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--static-dir", static_dir, "Serve a built client from this directory")
        ->check(CLI::ExistingDirectory);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        return report_error(err, e, "usage", kUsage);
    }

    try {
        if (synth_cmd->parsed()) {
            const auto m = dataset::synth_dataset(synth_out, synth_opts);
            out << json{{"manifest", (synth_out / "manifest.json").string()},
                        {"scans", m.scans.size()},
                        {"images", m.images.size()}}
                       .dump()
                << "\n";
            return kOk;
        }
        if (serve_cmd->parsed()) return serve(manifest_path, host, port, static_dir, out);

        dataset::ManifestLock lock(manifest_path, 0);
        dataset::Dataset ds(manifest_path);
        const double now = dataset::now_seconds();

        if (preprocess_cmd->parsed()) {
            const auto s = dataset::preprocess_scans(ds, pre);
            out << json{{"scans", s.scans}, {"points_in", s.points_in}, {"points_out", s.points_out}}.dump() << "\n";
        } else if (sync_cmd->parsed()) {
            out << json{{"pairs", pairs_json(dataset::sync_scans(ds, max_dt_ms / 1000.0))}}.dump() << "\n";
        } else if (motion_cmd->parsed()) {
            out << json{{"corrected", dataset::motion_correct_scans(ds)}}.dump() << "\n";
        } else if (transfer_cmd->parsed()) {
            if (class_map_path) {
                const auto j = read_json_file(*class_map_path);
                ds.manifest().class_map = dataset::class_map_from_json(j.contains("class_map") ? j.at("class_map") : j);
            }
            out << json{{"transferred", dataset::transfer_scans(ds, now)}}.dump() << "\n";
        } else if (select_cmd->parsed()) {
            int iteration = 0;
            if (iteration_arg != "auto") {
                try {
                    iteration = std::stoi(iteration_arg);
                } catch (const std::exception&) {
                    iteration = 0;
                }
                if (iteration < 1) throw ValidationError("--iteration must be 'auto' or a positive integer");
            }
            out << dataset::to_json(dataset::select_for_labeling(ds, select_n, iteration, now)).dump() << "\n";
        } else if (evaluate_cmd->parsed()) {
            const auto eval = dataset::evaluate_test_split(ds, pred_dir, gt_dir);
            auto report = dataset::report_to_json(eval, ds.classes(), run_name);
            std::vector<json> baselines;
            for (const auto& path : compare) baselines.push_back(read_json_file(path));
            dataset::add_improvements(report, baselines);
            if (report_path) write_json_file(*report_path, report);
            out << json{{"run", run_name},
                        {"miou", report.at("miou")},
                        {"fwiou", report.at("fwiou")},
                        {"scans_evaluated", report.at("scans_evaluated")},
                        {"improvements", report.at("improvements")}}
                       .dump()
                << "\n";
        } else if (mock_cmd->parsed()) {
            std::size_t written = 0;
            for (auto& scan : ds.manifest().scans) {
                if (scan.status == dataset::ScanStatus::Test || !scan.labels) continue;
                const auto labels = ds.load_labels(scan, dataset::Access::Select);
                const auto rel = "predictions/" + scan.scan_id + ".pred";
                fs::create_directories(ds.resolve("predictions"));
                io::save_predictions(
                    dataset::synthetic_predictions(labels, ds.classes(), mock_noise, std::hash<std::string>{}(rel)),
                    ds.resolve(rel));
                scan.predictions = rel;
                ++written;
            }
            ds.save();
            out << json{{"written", written}}.dump() << "\n";
        }
        return kOk;
    } catch (const dataset::MissingFilesError& e) {
        return report_error(err, e, "missing_files", kMissingFiles);
    } catch (const dataset::LockError& e) {
        return report_error(err, e, "locked", kLocked);
    } catch (const dataset::IsolationError& e) {
        return report_error(err, e, "isolation", kInvalid);
    } catch (const ValidationError& e) {
        return report_error(err, e, "validation", kInvalid);
    } catch (const FormatError& e) {
        return report_error(err, e, "format", kInvalid);
    } catch (const std::exception& e) {
        return report_error(err, e, "failure", kFailure);
    }
}

}  // namespace railseg::cli
