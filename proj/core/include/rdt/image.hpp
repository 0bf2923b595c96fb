#ifndef RDT_IMAGE_HPP_
#define RDT_IMAGE_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rdt/tensor.hpp"

namespace rdt {

// 8-bit interleaved image, row-major H x W x C.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  int maxval = 255;  // sample range is [0, maxval]
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary PPM (P6, maxval <= 255). Header comments are honored.
ImageU8 read_ppm(std::istream& in, const std::string& origin);
ImageU8 read_ppm(const std::string& path);
void write_ppm(std::ostream& out, const ImageU8& image);
void write_ppm(const std::string& path, const ImageU8& image);

// Bilinear resample with half-pixel centers (an identity when sizes match),
// emitting values scaled to [0, 1]. Returns H x W x C data, row-major.
std::vector<double> bilinear_resize(const ImageU8& image, int out_h, int out_w);

// Optional decoder for formats other than PPM. Return nullopt to fall
// through to the built-in PPM reader.
using DecodeHook = std::function<std::optional<ImageU8>(const std::string&)>;

// Reads a poster, resizes to target_side x target_side, scales to [0, 1].
// Only 3-channel input is accepted.
Tensor load_poster_image(const std::string& path, int target_side,
                         const DecodeHook& decode = nullptr);

}  // namespace rdt

#endif  // RDT_IMAGE_HPP_
