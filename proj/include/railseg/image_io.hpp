#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "railseg/class_set.hpp"
#include "railseg/label_transfer.hpp"

namespace railseg::io {

/// Binary PGM (P5, maxval 255); pixel values are class ids.
std::vector<std::uint8_t> encode_pgm(const transfer::LabelImage& image);
transfer::LabelImage decode_pgm(std::span<const std::uint8_t> bytes);

transfer::LabelImage load_label_image(const std::filesystem::path& path);
void save_label_image(const transfer::LabelImage& image, const std::filesystem::path& path);

using Rgb = std::array<std::uint8_t, 3>;

/// Display colour per class id (ids beyond the table are grey).
Rgb class_color(ClassId id);

/// 8-bit palette PNG whose palette index is the class id.
std::vector<std::uint8_t> encode_palette_png(const transfer::LabelImage& image);
transfer::LabelImage decode_palette_png(std::span<const std::uint8_t> bytes);

}  // namespace railseg::io
