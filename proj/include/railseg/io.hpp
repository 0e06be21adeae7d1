#pragma once

// Binary formats, all little-endian:
//   cloud       20-byte records of float32 {x, y, z, intensity, t_rel}
//   labels      u32 per point; bits 0-15 class id, bit 16 provenance (1 = corrected)
//   predictions u32 n_points, u32 n_classes, then row-major float32

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "railseg/class_set.hpp"
#include "railseg/point_cloud.hpp"

namespace railseg::io {

inline constexpr std::size_t kPointRecordBytes = 20;
inline constexpr std::size_t kPredictionHeaderBytes = 8;
inline constexpr std::uint32_t kProvenanceBit = 1u << 16;

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Bytes encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::span<const std::uint8_t> bytes, std::string scan_id = {}, double t_scan = 0.0);

/// scan_id / t_scan are not stored in the file; they come from the manifest.
PointCloud load_cloud(const std::filesystem::path& path, std::string scan_id = {}, double t_scan = 0.0);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

std::uint32_t encode_label(ClassId label, Provenance prov);

Bytes encode_labels(const LabelArray& labels);
LabelArray decode_labels(std::span<const std::uint8_t> bytes, const ClassSet& classes, std::string scan_id = {});

/// When expected_points is given, a different length is a ValidationError.
LabelArray load_labels(const std::filesystem::path& path, const ClassSet& classes, std::string scan_id = {},
                       std::optional<std::size_t> expected_points = std::nullopt);
void save_labels(const LabelArray& labels, const std::filesystem::path& path);

Bytes encode_predictions(const PredictionMatrix& pred);
PredictionMatrix decode_predictions(std::span<const std::uint8_t> bytes, std::size_t expected_classes,
                                    std::string scan_id = {});
PredictionMatrix load_predictions(const std::filesystem::path& path, std::size_t expected_classes,
                                  std::string scan_id = {});
void save_predictions(const PredictionMatrix& pred, const std::filesystem::path& path);

}  // namespace railseg::io
