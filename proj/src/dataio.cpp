#include "leafseg/dataio.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "leafseg/colorspace.hpp"
#include "leafseg/rng.hpp"

namespace fs = std::filesystem;

namespace leafseg::io {

namespace {

uint8_t quantize(float v) {
    float q = std::floor(std::min(std::max(v, 0.0f), 1.0f) * 255.0f + 0.5f);  // round half up
    return static_cast<uint8_t>(q);
}

bool has_ext(const std::string& path, const char* a, const char* b = nullptr) {
    std::string e = fs::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == a || (b && e == b);
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// ------------------------------- PNG --------------------------------------

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes to packed 8-bit rows with `channels` components (1 or 3).
std::vector<uint8_t> read_png(const std::string& path, int want_channels, int& h, int& w) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("dataio: cannot open " + path);
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = png_create_info_struct(r.png);
    if (!r.png || !r.info) throw std::runtime_error("dataio: libpng init failed for " + path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("dataio: corrupt PNG " + path);
    png_init_io(r.png, f.get());
    png_read_info(r.png, r.info);

    png_set_strip_16(r.png);
    png_set_packing(r.png);
    png_set_expand(r.png);  // palette -> rgb, gray<8 -> 8, tRNS -> alpha
    png_set_strip_alpha(r.png);
    if (want_channels == 3)
        png_set_gray_to_rgb(r.png);
    else
        png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
    png_read_update_info(r.png, r.info);

    h = static_cast<int>(png_get_image_height(r.png, r.info));
    w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int ch = static_cast<int>(png_get_channels(r.png, r.info));
    if (ch != want_channels) throw std::runtime_error("dataio: unexpected channel count in " + path);

    std::vector<uint8_t> pixels(static_cast<size_t>(h) * w * ch);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y) * w * ch;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return pixels;
}

void write_png_rgb8(const std::string& path, const uint8_t* pixels, int h, int w) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("dataio: cannot write " + path);
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (!wr.png || !wr.info) throw std::runtime_error("dataio: libpng init failed for " + path);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("dataio: PNG write failed " + path);
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<uint8_t*>(pixels) + static_cast<size_t>(y) * w * 3;
    png_write_image(wr.png, rows.data());
    png_write_end(wr.png, nullptr);
}

// ------------------------------- JPEG -------------------------------------

struct JpegErrorMgr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(err->jump, 1);
}

std::vector<uint8_t> read_jpeg(const std::string& path, int& h, int& w) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("dataio: cannot open " + path);
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("dataio: corrupt JPEG " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = static_cast<int>(cinfo.output_height);
    w = static_cast<int>(cinfo.output_width);
    std::vector<uint8_t> pixels(static_cast<size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        uint8_t* row = pixels.data() + static_cast<size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return pixels;
}

void write_jpeg_rgb8(const std::string& path, const uint8_t* pixels, int h, int w) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("dataio: cannot write " + path);
    jpeg_compress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw std::runtime_error("dataio: JPEG write failed " + path);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f.get());
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        const uint8_t* row = pixels + static_cast<size_t>(cinfo.next_scanline) * w * 3;
        JSAMPROW r = const_cast<uint8_t*>(row);
        jpeg_write_scanlines(&cinfo, &r, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

// Reflect-101 coordinate fold into [0, n).
int reflect_coord(int p, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    p = std::abs(p) % period;
    return p < n ? p : period - p;
}

float bilinear_reflect(const ImageF& img, float y, float x, int c) {
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const float fy = y - static_cast<float>(y0);
    const float fx = x - static_cast<float>(x0);
    float acc = 0.0f;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const float wgt = (dy ? fy : 1.0f - fy) * (dx ? fx : 1.0f - fx);
            acc += wgt * img.at(reflect_coord(y0 + dy, img.height),
                                reflect_coord(x0 + dx, img.width), c);
        }
    return acc;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
    if (sigma < 1e-3) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<size_t>(i + radius)] =
            static_cast<float>(std::exp(-(i * i) / (2.0 * sigma * sigma)));
        sum += k[static_cast<size_t>(i + radius)];
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    ImageF tmp(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<size_t>(i + radius)] *
                           img.at(y, reflect_coord(x + i, img.width), c);
                tmp.at(y, x, c) = acc;
            }
    ImageF out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<size_t>(i + radius)] *
                           tmp.at(reflect_coord(y + i, img.height), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

}  // namespace

ImageF load_image(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("dataio: no such file " + path);
    int h = 0, w = 0;
    std::vector<uint8_t> pixels;
    if (has_ext(path, ".png"))
        pixels = read_png(path, 3, h, w);
    else if (has_ext(path, ".jpg", ".jpeg"))
        pixels = read_jpeg(path, h, w);
    else
        throw std::runtime_error("dataio: unsupported image format " + path);
    ImageF img(h, w, 3);
    for (size_t i = 0; i < pixels.size(); ++i)
        img.data[i] = static_cast<float>(pixels[i]) / 255.0f;
    return img;
}

void save_image(const ImageF& image, const std::string& path) {
    if (image.channels != 3) throw std::runtime_error("dataio: save_image expects RGB");
    std::vector<uint8_t> pixels(image.data.size());
    for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = quantize(image.data[i]);
    if (has_ext(path, ".png"))
        write_png_rgb8(path, pixels.data(), image.height, image.width);
    else if (has_ext(path, ".jpg", ".jpeg"))
        write_jpeg_rgb8(path, pixels.data(), image.height, image.width);
    else
        throw std::runtime_error("dataio: unsupported image format " + path);
}

std::vector<uint8_t> load_mask(const std::string& path, int& height, int& width) {
    if (!fs::exists(path)) throw std::runtime_error("dataio: no such file " + path);
    if (!has_ext(path, ".png")) throw std::runtime_error("dataio: masks must be PNG, got " + path);
    std::vector<uint8_t> gray = read_png(path, 1, height, width);
    std::vector<uint8_t> mask(gray.size());
    for (size_t i = 0; i < gray.size(); ++i) mask[i] = gray[i] >= 128 ? 1 : 0;
    return mask;
}

void save_mask(const std::vector<uint8_t>& mask, int height, int width,
               const std::string& path) {
    if (mask.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("dataio: mask dims mismatch for " + path);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("dataio: cannot write " + path);
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (!wr.png || !wr.info) throw std::runtime_error("dataio: libpng init failed for " + path);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("dataio: PNG write failed " + path);
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 1, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    const int stride = (width + 7) / 8;
    std::vector<uint8_t> row(static_cast<size_t>(stride));
    for (int y = 0; y < height; ++y) {
        std::fill(row.begin(), row.end(), 0);
        for (int x = 0; x < width; ++x)
            if (mask[static_cast<size_t>(y) * width + x])
                row[static_cast<size_t>(x / 8)] |= static_cast<uint8_t>(0x80 >> (x % 8));
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

void save_label_map16(const std::vector<int32_t>& labels, int height, int width,
                      const std::string& path) {
    if (labels.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("dataio: label map dims mismatch for " + path);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("dataio: cannot write " + path);
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (!wr.png || !wr.info) throw std::runtime_error("dataio: libpng init failed for " + path);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("dataio: PNG write failed " + path);
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<uint8_t> row(static_cast<size_t>(width) * 2);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const uint16_t v = static_cast<uint16_t>(
                std::min<int32_t>(labels[static_cast<size_t>(y) * width + x], 65535));
            row[static_cast<size_t>(x) * 2] = static_cast<uint8_t>(v >> 8);  // network order
            row[static_cast<size_t>(x) * 2 + 1] = static_cast<uint8_t>(v & 0xff);
        }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

void save_label_map_indexed(const std::vector<int32_t>& labels, int height, int width,
                            const std::string& path) {
    if (labels.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("dataio: label map dims mismatch for " + path);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("dataio: cannot write " + path);
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (!wr.png || !wr.info) throw std::runtime_error("dataio: libpng init failed for " + path);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("dataio: PNG write failed " + path);
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_color palette[64];
    for (int i = 0; i < 64; ++i) {
        float r, g, b;
        color::hsv_to_rgb(static_cast<float>(i) / 64.0f, 0.85f, i % 2 ? 0.95f : 0.6f, r, g, b);
        palette[i].red = quantize(r);
        palette[i].green = quantize(g);
        palette[i].blue = quantize(b);
    }
    png_set_PLTE(wr.png, wr.info, palette, 64);
    png_write_info(wr.png, wr.info);
    std::vector<uint8_t> row(static_cast<size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x)
            row[static_cast<size_t>(x)] =
                static_cast<uint8_t>(labels[static_cast<size_t>(y) * width + x] % 64);
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

// ---------------------------------------------------------------------------

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::TestNatural: return "test_natural";
        case Split::TestYellow: return "test_yellow";
        case Split::TestPurple: return "test_purple";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "test_natural") return Split::TestNatural;
    if (name == "test_yellow") return Split::TestYellow;
    if (name == "test_purple") return Split::TestPurple;
    throw std::runtime_error("dataio: unknown split tag '" + name + "'");
}

std::vector<ManifestEntry> DatasetManifest::with_split(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(e);
    return out;
}

std::string DatasetManifest::image_path(const ManifestEntry& e) const {
    return (fs::path(root) / e.image).string();
}

std::optional<std::string> DatasetManifest::mask_path(const ManifestEntry& e) const {
    if (!e.mask) return std::nullopt;
    return (fs::path(root) / *e.mask).string();
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("dataio: cannot open manifest " + path);
    DatasetManifest m;
    m.root = fs::absolute(fs::path(path)).parent_path().string();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("dataio: manifest " + path + " line " +
                                     std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry entry;
        entry.image = j.at("image").get<std::string>();
        if (j.contains("mask") && !j["mask"].is_null())
            entry.mask = j["mask"].get<std::string>();
        entry.split = split_from_name(j.at("split").get<std::string>());
        if (!fs::exists(fs::path(m.root) / entry.image))
            throw std::runtime_error("dataio: manifest references missing image " + entry.image);
        if (entry.mask && !fs::exists(fs::path(m.root) / *entry.mask))
            throw std::runtime_error("dataio: manifest references missing mask " + *entry.mask);
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("dataio: cannot write manifest " + path);
    for (const auto& e : manifest.entries) {
        nlohmann::json j;
        j["image"] = e.image;
        if (e.mask)
            j["mask"] = *e.mask;
        else
            j["mask"] = nullptr;
        j["split"] = split_name(e.split);
        os << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------

PatchSet extract_patches(const ImageF& image, int source_id, int size, double overlap) {
    PatchSet set;
    const int stride = std::max(1, static_cast<int>(std::lround(size * (1.0 - overlap))));
    if (image.height < size || image.width < size) {
        // Reflect-pad an undersized image around its center.
        Patch p;
        p.source_id = source_id;
        p.padded = true;
        p.x = 0;
        p.y = 0;
        p.block = ImageF(size, size, image.channels);
        const int oy = (size - image.height) / 2;
        const int ox = (size - image.width) / 2;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const int sy = reflect_coord(y - oy, image.height);
                const int sx = reflect_coord(x - ox, image.width);
                for (int c = 0; c < image.channels; ++c)
                    p.block.at(y, x, c) = image.at(sy, sx, c);
            }
        set.any_padded = true;
        set.patches.push_back(std::move(p));
        return set;
    }
    std::vector<int> ys, xs;
    for (int y = 0;; y += stride) {
        if (y + size >= image.height) {
            ys.push_back(image.height - size);
            break;
        }
        ys.push_back(y);
    }
    for (int x = 0;; x += stride) {
        if (x + size >= image.width) {
            xs.push_back(image.width - size);
            break;
        }
        xs.push_back(x);
    }
    for (int y : ys)
        for (int x : xs) {
            Patch p;
            p.source_id = source_id;
            p.x = x;
            p.y = y;
            p.block = ImageF(size, size, image.channels);
            for (int yy = 0; yy < size; ++yy)
                std::memcpy(p.block.px(yy, 0), image.px(y + yy, x),
                            static_cast<size_t>(size) * image.channels * sizeof(float));
            set.patches.push_back(std::move(p));
        }
    return set;
}

ImageF augment(const ImageF& patch, uint64_t seed) {
    Rng rng(seed);
    const bool flip_h = rng.bernoulli(0.5);
    const bool flip_v = rng.bernoulli(0.5);
    const double sharp_f = rng.uniform(0.8, 1.2);
    const double blur_sigma = rng.uniform(0.0, 1.0);
    const double rot_deg = rng.uniform(-10.0, 10.0);
    const double zoom = rng.uniform(0.9, 1.1);
    const double sat_j = rng.uniform(0.9, 1.1);
    const double bright_j = rng.uniform(0.9, 1.1);

    ImageF img = patch;
    if (flip_h || flip_v) {
        ImageF flipped(img.height, img.width, img.channels);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int sy = flip_v ? img.height - 1 - y : y;
                const int sx = flip_h ? img.width - 1 - x : x;
                for (int c = 0; c < img.channels; ++c)
                    flipped.at(y, x, c) = img.at(sy, sx, c);
            }
        img = std::move(flipped);
    }

    // Affine: rotate + scale about the center, inverse-mapped with bilinear
    // sampling and reflection padding.
    {
        const double th = rot_deg * 3.14159265358979323846 / 180.0;
        const double ct = std::cos(th) / zoom, st = std::sin(th) / zoom;
        const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
        ImageF warped(img.height, img.width, img.channels);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const double dy = y - cy, dx = x - cx;
                const float sy = static_cast<float>(cy + ct * dy - st * dx);
                const float sx = static_cast<float>(cx + st * dy + ct * dx);
                for (int c = 0; c < img.channels; ++c)
                    warped.at(y, x, c) = bilinear_reflect(img, sy, sx, c);
            }
        img = std::move(warped);
    }

    img = gaussian_blur(img, blur_sigma);

    // Sharpness: blend against a 3x3 smoothed copy; factor 1 is identity.
    {
        ImageF smooth = gaussian_blur(img, 0.85);
        for (size_t i = 0; i < img.data.size(); ++i)
            img.data[i] = smooth.data[i] + static_cast<float>(sharp_f) *
                                               (img.data[i] - smooth.data[i]);
    }
    clamp01(img);  // sharpness may overshoot

    // Saturation/brightness jitter in HSV; hue stays untouched.
    for (size_t i = 0; i < img.pixels(); ++i) {
        float* p = img.data.data() + i * img.channels;
        float h, s, v;
        color::rgb_to_hsv(p[0], p[1], p[2], h, s, v);
        s = std::min(1.0f, s * static_cast<float>(sat_j));
        v = std::min(1.0f, v * static_cast<float>(bright_j));
        color::hsv_to_rgb(h, s, v, p[0], p[1], p[2]);
    }
    clamp01(img);
    return img;
}

}  // namespace leafseg::io
