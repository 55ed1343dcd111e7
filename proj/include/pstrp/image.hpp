#pragma once

#include <filesystem>
#include <vector>

namespace pstrp {

/// Planar (C x H x W) image with channel values in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// Decodes a PNG or JPEG (chosen by extension). Grayscale decodes to one
/// channel, anything with color to three; alpha is dropped. 8-bit values v map
/// to v / 255.
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG (1 or 3 channels); values are clamped to [0,1] and
/// rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Image& image);

bool is_image_file(const std::filesystem::path& path);

}  // namespace pstrp
