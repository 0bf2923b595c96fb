#include "rdt/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rdt/error.hpp"

namespace rdt {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_header_token(std::istream& in, const std::string& origin) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  if (token.empty())
    throw ParseError(origin + ": truncated image header");
  return token;
}

int header_int(std::istream& in, const std::string& origin, const char* what) {
  const std::string token = next_header_token(in, origin);
  for (char c : token)
    if (c < '0' || c > '9')
      throw ParseError(origin + ": malformed " + std::string(what) + " '" +
                       token + "'");
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw ParseError(origin + ": malformed " + std::string(what) + " '" +
                     token + "'");
  }
}

}  // namespace

ImageU8 read_ppm(std::istream& in, const std::string& origin) {
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '6')
    throw ParseError(origin + ": not a binary PPM (P6) file");
  ImageU8 img;
  img.width = header_int(in, origin, "width");
  img.height = header_int(in, origin, "height");
  img.maxval = header_int(in, origin, "maxval");
  img.channels = 3;
  if (img.width <= 0 || img.height <= 0)
    throw ParseError(origin + ": non-positive image dimensions");
  if (img.maxval <= 0 || img.maxval > 255)
    throw ParseError(origin + ": unsupported maxval " +
                     std::to_string(img.maxval));
  // The single whitespace byte after maxval was consumed as the token
  // delimiter above; raw samples start immediately.
  const std::size_t n =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(n)))
    throw ParseError(origin + ": truncated pixel data");
  return img;
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  return read_ppm(in, path);
}

void write_ppm(std::ostream& out, const ImageU8& image) {
  if (image.channels != 3)
    throw DomainError("write_ppm: expected 3 channels, got " +
                      std::to_string(image.channels));
  if (image.maxval <= 0 || image.maxval > 255)
    throw DomainError("write_ppm: unsupported maxval " +
                      std::to_string(image.maxval));
  const std::size_t n =
      static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (n != image.pixels.size())
    throw DomainError("write_ppm: pixel buffer size mismatch");
  out << "P6\n" << image.width << ' ' << image.height << '\n'
      << image.maxval << '\n';
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(n));
  if (!out) throw IoError("write_ppm: write failed");
}

void write_ppm(const std::string& path, const ImageU8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_ppm(out, image);
}

std::vector<double> bilinear_resize(const ImageU8& image, int out_h,
                                    int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw DomainError("bilinear_resize: non-positive target size");
  const int h = image.height;
  const int w = image.width;
  const int c = image.channels;
  const double inv_max = 1.0 / image.maxval;
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * c);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    // Half-pixel-center mapping: identical sizes resolve to exact pass-through.
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top =
            (1.0 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
        const double bot =
            (1.0 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
        out[(static_cast<std::size_t>(oy) * out_w + ox) * c + ch] =
            ((1.0 - wy) * top + wy * bot) * inv_max;
      }
    }
  }
  return out;
}

Tensor load_poster_image(const std::string& path, int target_side,
                         const DecodeHook& decode) {
  if (target_side <= 0)
    throw DomainError("load_poster_image: non-positive target side");
  ImageU8 img;
  bool decoded = false;
  if (decode) {
    if (std::optional<ImageU8> hooked = decode(path)) {
      img = std::move(*hooked);
      decoded = true;
    }
  }
  if (!decoded) img = read_ppm(path);
  if (img.channels != 3)
    throw ParseError(path + ": expected 3 channels, got " +
                     std::to_string(img.channels));
  return Tensor::from_data({target_side, target_side, 3},
                           bilinear_resize(img, target_side, target_side));
}

}  // namespace rdt
