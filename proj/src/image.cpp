#include "macft/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "macft/common.hpp"

namespace macft {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Tensor load_image(const std::string& path) {
    if (ends_with(path, ".png")) return load_png(path);
    if (ends_with(path, ".pgm")) return load_pgm(path);
    check(false, "unsupported image extension (expect .png or .pgm): ", path);
    return Tensor();
}

Tensor load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    check(f != nullptr, "cannot open image: ", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(png != nullptr, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        check(false, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        check(false, "libpng failed to decode ", path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit RGB.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    check(rowbytes == static_cast<std::size_t>(w) * 3, "unexpected PNG row layout in ", path);

    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * rowbytes);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor img({h, w, 3});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = raw[i] / 255.0;
    return img;
}

void save_png(const std::string& path, const Tensor& img) {
    check(img.rank() == 3 && img.dim(2) == 3, "save_png expects HxWx3, got ", img.shape_str());
    const int h = img.dim(0), w = img.dim(1);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    check(f != nullptr, "cannot open for writing: ", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(png != nullptr, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        check(false, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        check(false, "libpng failed to encode ", path);
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] =
                    to_byte(img[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.good(), "cannot open image: ", path);
    std::string magic;
    is >> magic;
    check(magic == "P5", "expected binary PGM (P5) in ", path);
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comment lines
        for (;;) {
            const int c = is.peek();
            check(c != EOF, "truncated PGM header: ", path);
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        long v = 0;
        is >> v;
        check(is.good() && v > 0, "bad PGM header value in ", path);
        return static_cast<int>(v);
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    check(maxval == 255, "only 8-bit PGM supported, maxval=", maxval, " in ", path);
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(is.gcount() == static_cast<std::streamsize>(raw.size()), "truncated PGM data: ", path);

    Tensor img({h, w, 3});
    for (std::size_t p = 0; p < raw.size(); ++p) {
        const double v = raw[p] / 255.0;
        img[p * 3 + 0] = v;
        img[p * 3 + 1] = v;
        img[p * 3 + 2] = v;
    }
    return img;
}

void save_pgm(const std::string& path, const Tensor& img) {
    check(img.rank() == 3 && img.dim(2) == 3, "save_pgm expects HxWx3, got ", img.shape_str());
    const int h = img.dim(0), w = img.dim(1);
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot open for writing: ", path);
    os << "P5\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
            const double v = (img[base] + img[base + 1] + img[base + 2]) / 3.0;
            os.put(static_cast<char>(to_byte(v)));
        }
    check(os.good(), "write failure on ", path);
}

void save_heatmap_pgm(const std::string& path, const Tensor& map) {
    check(map.rank() == 2, "save_heatmap_pgm expects a 2-d map, got ", map.shape_str());
    double lo = map[0], hi = map[0];
    for (std::size_t i = 1; i < map.size(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot open for writing: ", path);
    os << "P5\n" << map.cols() << " " << map.rows() << "\n255\n";
    for (std::size_t i = 0; i < map.size(); ++i)
        os.put(static_cast<char>(to_byte((map[i] - lo) / span)));
    check(os.good(), "write failure on ", path);
}

Tensor crop_resize(const Tensor& img, const CropInfo& crop) {
    check(img.rank() == 3, "crop_resize expects HxWxC, got ", img.shape_str());
    check(crop.side > 0.0 && crop.out_size > 0, "invalid crop: side=", crop.side,
          " out_size=", crop.out_size);
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    const int n = crop.out_size;
    Tensor out({n, n, c});
    const double x0 = crop.cx - 0.5 * crop.side;
    const double y0 = crop.cy - 0.5 * crop.side;
    const double step = crop.side / n;
    for (int oy = 0; oy < n; ++oy) {
        // sample at output-pixel centers, mapped into source pixel centers
        const double sy = y0 + (oy + 0.5) * step - 0.5;
        const int iy0 = static_cast<int>(std::floor(sy));
        const double fy = sy - iy0;
        for (int ox = 0; ox < n; ++ox) {
            const double sx = x0 + (ox + 0.5) * step - 0.5;
            const int ix0 = static_cast<int>(std::floor(sx));
            const double fx = sx - ix0;
            double* opix = out.data() + (static_cast<std::size_t>(oy) * n + ox) * c;
            for (int ch = 0; ch < c; ++ch) {
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
                    return img[(static_cast<std::size_t>(yy) * w + xx) * c + ch];
                };
                opix[ch] = (1.0 - fy) * ((1.0 - fx) * sample(iy0, ix0) + fx * sample(iy0, ix0 + 1)) +
                           fy * ((1.0 - fx) * sample(iy0 + 1, ix0) + fx * sample(iy0 + 1, ix0 + 1));
            }
        }
    }
    return out;
}

}  // namespace macft
