#include "railseg/image_io.hpp"

#include <cctype>
#include <cstring>
#include <string>

#include <fmt/format.h>
#include <png.h>

#include "railseg/error.hpp"
#include "railseg/io.hpp"

namespace railseg::io {

std::vector<std::uint8_t> encode_pgm(const transfer::LabelImage& image) {
    const auto header = fmt::format("P5\n{} {}\n255\n", image.width, image.height);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

transfer::LabelImage decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("malformed PGM header");
        long value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos++] - '0');
            if (value > 1'000'000) throw FormatError("PGM dimension out of range");
        }
        return static_cast<int>(value);
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)");
    pos = 2;
    const int width = read_int();
    const int height = read_int();
    const int maxval = read_int();
    if (maxval != 255) throw FormatError(fmt::format("PGM maxval {} unsupported, expected 255", maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PGM header");
    ++pos;

    const std::size_t expected = static_cast<std::size_t>(width) * height;
    if (bytes.size() - pos != expected) {
        throw FormatError(fmt::format("PGM payload is {} bytes, expected {}", bytes.size() - pos, expected));
    }
    transfer::LabelImage image(width, height);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), image.pixels.begin());
    return image;
}

transfer::LabelImage load_label_image(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void save_label_image(const transfer::LabelImage& image, const std::filesystem::path& path) {
    write_file_atomic(path, encode_pgm(image));
}

Rgb class_color(ClassId id) {
    static constexpr std::array<Rgb, 12> palette{{
        {0, 0, 0},        // UNLABELED
        {255, 0, 255},    // ON_TRACKS
        {255, 30, 30},    // PERSON
        {120, 120, 120},  // RAIL_TRACK
        {150, 100, 60},   // TRACKBED
        {255, 200, 0},    // CONSTRUCTION
        {30, 60, 255},    // POLE
        {0, 255, 255},    // SIGN
        {0, 175, 0},      // VEGETATION
        {150, 240, 80},   // TERRAIN
        {135, 206, 235},  // SKY
        {60, 60, 80},     // BACKGROUND
    }};
    return id < palette.size() ? palette[id] : Rgb{128, 128, 128};
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(data, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

[[noreturn]] void raise_png_error(png_structp, png_const_charp message) { throw FormatError(message); }

void ignore_png_warning(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_palette_png(const transfer::LabelImage& image) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, raise_png_error, ignore_png_warning);
    if (!png) throw Error("cannot create PNG writer");
    png_infop info = png_create_info_struct(png);
    try {
        if (!info) throw Error("cannot create PNG info");
        png_set_write_fn(png, &out, append_bytes, flush_nothing);
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                     PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        std::array<png_color, 256> palette{};
        for (int i = 0; i < 256; ++i) {
            const auto c = class_color(static_cast<ClassId>(i));
            palette[i] = {c[0], c[1], c[2]};
        }
        png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
        png_set_compression_level(png, 1);
        png_write_info(png, info);
        for (int row = 0; row < image.height; ++row) {
            auto* begin = const_cast<std::uint8_t*>(image.pixels.data()) + static_cast<std::size_t>(row) * image.width;
            png_write_row(png, begin);
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

transfer::LabelImage decode_palette_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG stream");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, raise_png_error, ignore_png_warning);
    if (!png) throw Error("cannot create PNG reader");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{bytes};
    transfer::LabelImage image;
    try {
        if (!info) throw Error("cannot create PNG info");
        png_set_read_fn(png, &cursor, read_bytes);
        png_read_info(png, info);
        if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE || png_get_bit_depth(png, info) != 8) {
            throw FormatError("expected an 8-bit palette PNG");
        }
        image.width = static_cast<int>(png_get_image_width(png, info));
        image.height = static_cast<int>(png_get_image_height(png, info));
        image.pixels.resize(static_cast<std::size_t>(image.width) * image.height);
        for (int row = 0; row < image.height; ++row) {
            png_read_row(png, image.pixels.data() + static_cast<std::size_t>(row) * image.width, nullptr);
        }
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

}  // namespace railseg::io
