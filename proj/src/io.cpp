#include "railseg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <system_error>

#include <fmt/format.h>

#include "railseg/error.hpp"

namespace railseg::io {

namespace {

static_assert(std::numeric_limits<float>::is_iec559);

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

void put_u32(Bytes& out, std::uint32_t v) {
    v = to_little(v);
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

void put_f32(Bytes& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return to_little(v);
}

float get_f32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return std::bit_cast<float>(get_u32(bytes, offset));
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(fmt::format("read failed on '{}'", path.string()));
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError(fmt::format("write failed on '{}'", path.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError(fmt::format("cannot replace '{}'", path.string()));
    }
}

Bytes encode_cloud(const PointCloud& cloud) {
    validate(cloud);
    Bytes out;
    out.reserve(cloud.size() * kPointRecordBytes);
    for (const auto& p : cloud.points) {
        put_f32(out, static_cast<float>(p.position.x()));
        put_f32(out, static_cast<float>(p.position.y()));
        put_f32(out, static_cast<float>(p.position.z()));
        put_f32(out, static_cast<float>(p.intensity));
        put_f32(out, static_cast<float>(p.t_rel));
    }
    return out;
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes, std::string scan_id, double t_scan) {
    if (bytes.size() % kPointRecordBytes != 0) {
        throw FormatError(fmt::format("cloud is truncated: {} bytes is not a multiple of {}", bytes.size(),
                                      kPointRecordBytes));
    }
    PointCloud cloud{std::move(scan_id), t_scan, {}};
    const std::size_t n = bytes.size() / kPointRecordBytes;
    cloud.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = i * kPointRecordBytes;
        auto& p = cloud.points[i];
        p.position = {get_f32(bytes, o), get_f32(bytes, o + 4), get_f32(bytes, o + 8)};
        p.intensity = get_f32(bytes, o + 12);
        p.t_rel = get_f32(bytes, o + 16);
    }
    try {
        validate(cloud);
    } catch (const ValidationError& e) {
        throw FormatError(e.what());
    }
    return cloud;
}

PointCloud load_cloud(const std::filesystem::path& path, std::string scan_id, double t_scan) {
    return decode_cloud(read_file(path), std::move(scan_id), t_scan);
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    write_file_atomic(path, encode_cloud(cloud));
}

std::uint32_t encode_label(ClassId label, Provenance prov) {
    return static_cast<std::uint32_t>(label) | (prov == Provenance::Corrected ? kProvenanceBit : 0u);
}

Bytes encode_labels(const LabelArray& labels) {
    if (labels.labels.size() != labels.provenance.size()) {
        throw ValidationError("label and provenance columns differ in length");
    }
    Bytes out;
    out.reserve(labels.size() * 4);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        put_u32(out, encode_label(labels.labels[i], labels.provenance[i]));
    }
    return out;
}

LabelArray decode_labels(std::span<const std::uint8_t> bytes, const ClassSet& classes, std::string scan_id) {
    if (bytes.size() % 4 != 0) {
        throw FormatError(fmt::format("label file is truncated: {} bytes", bytes.size()));
    }
    const std::size_t n = bytes.size() / 4;
    LabelArray out(std::move(scan_id), n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t raw = get_u32(bytes, i * 4);
        if (raw >> 17) throw FormatError(fmt::format("label {}: reserved bits set in 0x{:08x}", i, raw));
        const auto cls = static_cast<ClassId>(raw & 0xffffu);
        if (!classes.is_point_label(cls)) {
            throw ValidationError(fmt::format("label {}: class id {} is not a 3D class", i, cls));
        }
        out.labels[i] = cls;
        out.provenance[i] = (raw & kProvenanceBit) ? Provenance::Corrected : Provenance::Auto;
    }
    return out;
}

LabelArray load_labels(const std::filesystem::path& path, const ClassSet& classes, std::string scan_id,
                       std::optional<std::size_t> expected_points) {
    auto labels = decode_labels(read_file(path), classes, std::move(scan_id));
    if (expected_points && labels.size() != *expected_points) {
        throw ValidationError(fmt::format("'{}' holds {} labels, cloud has {} points", path.string(),
                                          labels.size(), *expected_points));
    }
    return labels;
}

void save_labels(const LabelArray& labels, const std::filesystem::path& path) {
    write_file_atomic(path, encode_labels(labels));
}

Bytes encode_predictions(const PredictionMatrix& pred) {
    Bytes out;
    out.reserve(kPredictionHeaderBytes + pred.values().size() * 4);
    put_u32(out, static_cast<std::uint32_t>(pred.n_points()));
    put_u32(out, static_cast<std::uint32_t>(pred.n_classes()));
    for (float v : pred.values()) put_f32(out, v);
    return out;
}

PredictionMatrix decode_predictions(std::span<const std::uint8_t> bytes, std::size_t expected_classes,
                                    std::string scan_id) {
    if (bytes.size() < kPredictionHeaderBytes) throw FormatError("prediction file shorter than its header");
    const std::size_t n_points = get_u32(bytes, 0);
    const std::size_t n_classes = get_u32(bytes, 4);
    if (n_classes != expected_classes) {
        throw FormatError(fmt::format("prediction header declares {} classes, expected {}", n_classes,
                                      expected_classes));
    }
    const std::size_t payload = bytes.size() - kPredictionHeaderBytes;
    if (payload != n_points * n_classes * 4) {
        throw FormatError(fmt::format("prediction header ({} x {}) does not match {} payload bytes", n_points,
                                      n_classes, payload));
    }
    std::vector<float> values(n_points * n_classes);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = get_f32(bytes, kPredictionHeaderBytes + 4 * i);
    }
    return PredictionMatrix(std::move(scan_id), n_points, n_classes, std::move(values));
}

PredictionMatrix load_predictions(const std::filesystem::path& path, std::size_t expected_classes,
                                  std::string scan_id) {
    return decode_predictions(read_file(path), expected_classes, std::move(scan_id));
}

void save_predictions(const PredictionMatrix& pred, const std::filesystem::path& path) {
    write_file_atomic(path, encode_predictions(pred));
}

}  // namespace railseg::io
