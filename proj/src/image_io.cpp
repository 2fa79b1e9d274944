#include "fourcrop/image.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "fourcrop/errors.hpp"

namespace fourcrop::img {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawImage decode_png(std::FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png decoder setup failed for " + path);
    }
    RawImage out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("cannot decode " + path + ": corrupt png");
    }
    png_init_io(png, f);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    out.h = png_get_image_height(png, info);
    out.w = png_get_image_width(png, info);
    if (png_get_rowbytes(png, info) != out.w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("cannot decode " + path + ": unexpected png channel layout");
    }
    out.rgb.resize(out.h * out.w * 3);
    rows.resize(out.h);
    for (std::size_t r = 0; r < out.h; ++r) rows[r] = out.rgb.data() + r * out.w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

RawImage decode_jpeg(std::FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError("cannot decode " + path + ": corrupt jpeg");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    RawImage out;
    out.h = cinfo.output_height;
    out.w = cinfo.output_width;
    out.rgb.resize(out.h * out.w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.rgb.data() + cinfo.output_scanline * out.w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// uncompressed 24/32-bit BI_RGB only; rows are bottom-up unless height < 0
RawImage decode_bmp(std::FILE* f, const std::string& path) {
    unsigned char header[54];
    if (std::fread(header, 1, 54, f) != 54 || header[0] != 'B' || header[1] != 'M')
        throw DataError("cannot decode " + path + ": not a BMP file");
    const std::uint32_t data_offset = le32(header + 10);
    const std::int32_t width = static_cast<std::int32_t>(le32(header + 18));
    const std::int32_t height_raw = static_cast<std::int32_t>(le32(header + 22));
    const std::uint16_t bpp = static_cast<std::uint16_t>(header[28] | (header[29] << 8));
    const std::uint32_t compression = le32(header + 30);
    if (width <= 0 || height_raw == 0 || compression != 0 || (bpp != 24 && bpp != 32))
        throw DataError("cannot decode " + path + ": only uncompressed 24/32-bit BMP supported");

    const bool top_down = height_raw < 0;
    const std::size_t h = static_cast<std::size_t>(top_down ? -height_raw : height_raw);
    const std::size_t w = static_cast<std::size_t>(width);
    const std::size_t bytes_pp = bpp / 8;
    const std::size_t stride = (w * bytes_pp + 3) & ~std::size_t(3);

    if (std::fseek(f, static_cast<long>(data_offset), SEEK_SET) != 0)
        throw DataError("cannot decode " + path + ": truncated BMP");
    std::vector<unsigned char> row(stride);
    RawImage out;
    out.h = h;
    out.w = w;
    out.rgb.resize(h * w * 3);
    for (std::size_t r = 0; r < h; ++r) {
        if (std::fread(row.data(), 1, stride, f) != stride)
            throw DataError("cannot decode " + path + ": truncated BMP");
        const std::size_t dst_r = top_down ? r : h - 1 - r;
        for (std::size_t c = 0; c < w; ++c) {
            unsigned char* dst = out.rgb.data() + (dst_r * w + c) * 3;
            const unsigned char* src = row.data() + c * bytes_pp; // BGR(A) order
            dst[0] = src[2];
            dst[1] = src[1];
            dst[2] = src[0];
        }
    }
    return out;
}

} // namespace

RawImage decode_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open image " + path);
    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, 8, f.get());
    std::rewind(f.get());
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return decode_png(f.get(), path);
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return decode_jpeg(f.get(), path);
    if (got >= 2 && magic[0] == 'B' && magic[1] == 'M') return decode_bmp(f.get(), path);
    throw DataError("cannot decode " + path + ": unrecognized image format");
}

void write_png(const std::string& path, const RawImage& image) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png encoder setup failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png write failed for " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.w), static_cast<png_uint_32>(image.h),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < image.h; ++r)
        png_write_row(png, const_cast<png_bytep>(image.rgb.data() + r * image.w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace fourcrop::img
