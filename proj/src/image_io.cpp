#include "sf/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "sf/errors.hpp"

namespace sf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    (void)png;
    fail("sceneio", std::string("png: ") + msg);
}

void png_warn_fn(png_structp, png_const_charp) {}

}  // namespace

Array read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("sceneio", "png: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail("sceneio", "png: " + path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn,
                                             png_warn_fn);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8) {
        if (color == PNG_COLOR_TYPE_PALETTE || depth < 8) {
            png_set_expand(png);
        } else {
            fail("sceneio", "png: unsupported bit depth " + std::to_string(depth) + " in " + path);
        }
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    const std::size_t channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> raster(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    Array out(Shape{h, w, channels});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = raster[i] / 255.0;
    return out;
}

void write_png(const std::string& path, const Array& image) {
    std::size_t h, w, c;
    if (image.rank() == 2) {
        h = image.extent(0), w = image.extent(1), c = 1;
    } else if (image.rank() == 3 && (image.extent(2) == 1 || image.extent(2) == 3)) {
        h = image.extent(0), w = image.extent(1), c = image.extent(2);
    } else {
        fail("sceneio", "png: image must be [H,W], [H,W,1] or [H,W,3], got " +
                            shape_str(image.shape()));
    }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("sceneio", "png: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn,
                                              png_warn_fn);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t i = 0; i < w * c; ++i) {
            double v = image[y * w * c + i];
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            row[i] = static_cast<png_byte>(v * 255.0 + 0.5);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
}

Array read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("sceneio", "pfm: cannot open " + path);
    std::string tag;
    std::size_t w = 0, h = 0;
    double scale = 0.0;
    in >> tag >> w >> h >> scale;
    if (!in || (tag != "Pf" && tag != "PF") || w == 0 || h == 0)
        fail("sceneio", "pfm: malformed header in " + path);
    if (scale >= 0.0) fail("sceneio", "pfm: big-endian files not supported: " + path);
    in.get();  // single whitespace after header
    const std::size_t c = tag == "PF" ? 3 : 1;
    std::vector<float> raw(w * h * c);
    if (!in.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size() * sizeof(float))))
        fail("sceneio", "pfm: truncated data in " + path);
    Array out(c == 1 ? Shape{h, w} : Shape{h, w, c});
    // PFM rows run bottom-to-top.
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t i = 0; i < w * c; ++i)
            out[y * w * c + i] = static_cast<double>(raw[(h - 1 - y) * w * c + i]);
    return out;
}

void write_pfm(const std::string& path, const Array& image) {
    std::size_t h, w, c;
    if (image.rank() == 2) {
        h = image.extent(0), w = image.extent(1), c = 1;
    } else if (image.rank() == 3 && (image.extent(2) == 1 || image.extent(2) == 3)) {
        h = image.extent(0), w = image.extent(1), c = image.extent(2);
    } else {
        fail("sceneio", "pfm: image must be [H,W], [H,W,1] or [H,W,3]");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("sceneio", "pfm: cannot open " + path + " for writing");
    out << (c == 3 ? "PF" : "Pf") << "\n" << w << " " << h << "\n" << -1.0 << "\n";
    std::vector<float> row(w * c);
    for (std::size_t y = h; y-- > 0;) {
        for (std::size_t i = 0; i < w * c; ++i)
            row[i] = static_cast<float>(image[y * w * c + i]);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) fail("sceneio", "pfm: write failed for " + path);
}

namespace {
constexpr char kF64Magic[4] = {'S', 'F', '6', '4'};
}

Array read_f64(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("sceneio", "f64: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kF64Magic, 4) != 0)
        fail("sceneio", "f64: bad magic in " + path);
    std::uint32_t rank = 0;
    if (!in.read(reinterpret_cast<char*>(&rank), 4) || rank > 8)
        fail("sceneio", "f64: bad rank in " + path);
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
        std::uint64_t e = 0;
        if (!in.read(reinterpret_cast<char*>(&e), 8)) fail("sceneio", "f64: truncated " + path);
        shape[r] = e;
        numel *= e;
    }
    std::vector<double> data(numel);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(numel * sizeof(double))))
        fail("sceneio", "f64: truncated data in " + path);
    return Array(std::move(shape), std::move(data));
}

void write_f64(const std::string& path, const Array& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("sceneio", "f64: cannot open " + path + " for writing");
    out.write(kF64Magic, 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(image.rank());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (std::size_t e : image.shape()) {
        const std::uint64_t v = e;
        out.write(reinterpret_cast<const char*>(&v), 8);
    }
    out.write(reinterpret_cast<const char*>(image.data()),
              static_cast<std::streamsize>(image.size() * sizeof(double)));
    if (!out) fail("sceneio", "f64: write failed for " + path);
}

Array to_rgb(const Array& image, double bg) {
    if (image.rank() == 2)
        return to_rgb(image.reshaped(Shape{image.extent(0), image.extent(1), 1}), bg);
    if (image.rank() != 3) fail("sceneio", "to_rgb: bad image shape " + shape_str(image.shape()));
    const std::size_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
    if (c == 3) return image;
    Array out(Shape{h, w, 3});
    for (std::size_t p = 0; p < h * w; ++p) {
        double r, g, b;
        if (c == 1) {
            r = g = b = image[p];
        } else if (c == 2) {  // gray + alpha
            const double a = image[p * 2 + 1];
            r = g = b = image[p * 2] * a + bg * (1.0 - a);
        } else if (c == 4) {
            const double a = image[p * 4 + 3];
            r = image[p * 4 + 0] * a + bg * (1.0 - a);
            g = image[p * 4 + 1] * a + bg * (1.0 - a);
            b = image[p * 4 + 2] * a + bg * (1.0 - a);
        } else {
            fail("sceneio", "to_rgb: unsupported channel count " + std::to_string(c));
        }
        out[p * 3 + 0] = r;
        out[p * 3 + 1] = g;
        out[p * 3 + 2] = b;
    }
    return out;
}

}  // namespace sf
