#include "pstrp/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <memory>
#include <string>

#include "pstrp/error.hpp"

namespace pstrp {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Image from_interleaved(const unsigned char* pixels, int height, int width, int src_channels,
                       int dst_channels) {
  Image img;
  img.channels = dst_channels;
  img.height = height;
  img.width = width;
  img.data.resize(static_cast<std::size_t>(dst_channels) * height * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const unsigned char* px = pixels + (static_cast<std::size_t>(y) * width + x) * src_channels;
      for (int c = 0; c < dst_channels; ++c) img.at(c, y, x) = static_cast<float>(px[c]) / 255.0f;
    }
  }
  return img;
}

Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::kIo, "cannot read PNG " + path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + message);
  }
  return from_interleaved(buffer.data(), static_cast<int>(image.height),
                          static_cast<int>(image.width), channels, channels);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = &jpeg_error_exit;
  std::vector<unsigned char> buffer;
  int height = 0;
  int width = 0;
  int channels = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::kIo, "cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  channels = cinfo.output_components;
  buffer.resize(static_cast<std::size_t>(height) * width * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row =
        buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buffer.data(), height, width, channels, channels);
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw Error(ErrorCode::kIo, "unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::kIo, "PNG output needs 1 or 3 channels: " + path.string());
  }
  std::vector<unsigned char> buffer(static_cast<std::size_t>(img.channels) * img.height *
                                    img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace pstrp
