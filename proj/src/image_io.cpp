#include "c2cl/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace c2cl {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

GrayImage load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    // Normalize every variant to 8- or 16-bit RGB or gray without alpha.
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_PALETTE || (color & PNG_COLOR_MASK_ALPHA))
        png_set_strip_alpha(png);
    png_set_swap(png);  // 16-bit PNGs are big-endian on disk
    png_read_update_info(png, info);

    depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    data.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = data.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);

    double ppi_x = 0.0;
    png_uint_32 res_x = 0, res_y = 0;
    int unit = 0;
    if (png_get_pHYs(png, info, &res_x, &res_y, &unit) && unit == PNG_RESOLUTION_METER && res_x > 0)
        ppi_x = res_x * 0.0254;

    png_destroy_read_struct(&png, &info, nullptr);

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    if (ppi_x > 0.0) img.ppi = ppi_x;
    const double norm = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = data.data() + y * rowbytes;
        for (png_uint_32 x = 0; x < w; ++x) {
            double c[3] = {0, 0, 0};
            for (int ch = 0; ch < std::min(channels, 3); ++ch) {
                const size_t idx = (static_cast<size_t>(x) * channels + ch);
                c[ch] = depth == 16 ? reinterpret_cast<const png_uint_16*>(row)[idx] : row[idx];
            }
            double v;
            if (channels >= 3)
                v = (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]) * norm;
            else
                v = c[0] * norm;
            img.at(static_cast<int>(x), static_cast<int>(y)) =
                static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

int pgm_next_token(std::istream& in) {
    // Skips whitespace and '#' comments, then parses a non-negative integer.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("malformed PGM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 30) throw std::runtime_error("malformed PGM header");
        c = in.get();
    }
    return v;
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw std::runtime_error("not a P5 PGM: " + path);
    const int w = pgm_next_token(in);
    const int h = pgm_next_token(in);
    const int maxval = pgm_next_token(in);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw std::runtime_error("malformed PGM header: " + path);
    // Exactly one whitespace byte separates the header from pixel data; the
    // token scanner has already consumed it.
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("truncated PGM: " + path);

    GrayImage img(w, h);
    const double norm = 1.0 / maxval;
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
        int v = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];  // P5 is big-endian
        img.pixels[i] = static_cast<float>(std::min(v * norm, 1.0));
    }
    return img;
}

}  // namespace

GrayImage load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("cannot open " + path);
    unsigned char sig[8] = {0};
    probe.read(reinterpret_cast<char*>(sig), 8);
    probe.close();
    if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
    if (sig[0] == 'P' && sig[1] == '5') return load_pgm(path);
    throw std::runtime_error("unsupported image format: " + path);
}

void save_png(const GrayImage& img, const std::string& path) {
    img.validate();
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    std::vector<png_byte> row(static_cast<size_t>(img.width));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (img.ppi) {
        const auto ppm = static_cast<png_uint_32>(std::lround(*img.ppi / 0.0254));
        png_set_pHYs(png, info, ppm, ppm, PNG_RESOLUTION_METER);
    }
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            row[x] = static_cast<png_byte>(std::lround(img.at(x, y) * 255.0f));
        png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

void save_pgm(const GrayImage& img, const std::string& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            row[x] = static_cast<unsigned char>(std::lround(img.at(x, y) * 255.0f));
        out.write(reinterpret_cast<const char*>(row.data()), img.width);
    }
    if (!out) throw std::runtime_error("PGM write failed: " + path);
}

Mask load_mask(const std::string& path) {
    GrayImage img = load_image(path);
    Mask m(img.width, img.height);
    for (size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] >= 128.0f / 255.0f ? 1 : 0;
    return m;
}

void save_mask(const Mask& mask, const std::string& path) {
    mask.validate();
    GrayImage img(mask.width, mask.height);
    for (size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 1.0f : 0.0f;
    save_png(img, path);
}

}  // namespace c2cl
