#include "csab/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "csab/error.hpp"

namespace csab {

namespace {

// Reads one PPM header token, skipping whitespace and '#' comments.
bool next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) return false;
  do {
    tok.push_back(static_cast<char>(c));
  } while ((c = in.get()) != EOF && !std::isspace(c) && c != '#');
  if (c == '#') in.unget();
  return true;
}

std::size_t parse_dim(const std::string& tok, const std::string& path,
                      const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0)
    throw DataError("ppm '" + path + "': bad " + what + " '" + tok + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

Tensor<float> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  std::string tok;
  if (!next_token(in, tok) || tok != "P6")
    throw DataError("ppm '" + path + "': not a P6 file");
  if (!next_token(in, tok)) throw DataError("ppm '" + path + "': no width");
  const std::size_t w = parse_dim(tok, path, "width");
  if (!next_token(in, tok)) throw DataError("ppm '" + path + "': no height");
  const std::size_t h = parse_dim(tok, path, "height");
  if (!next_token(in, tok)) throw DataError("ppm '" + path + "': no maxval");
  if (tok != "255")
    throw DataError("ppm '" + path + "': maxval must be 255, got '" + tok +
                    "'");
  // The token reader consumed the single whitespace after maxval.
  std::vector<unsigned char> raw(w * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw DataError("ppm '" + path + "': truncated pixel data");
  Tensor<float> img({h, w, 3});
  for (std::size_t i = 0; i < raw.size(); ++i)
    img[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(2) != 3)
    throw ShapeError("write_ppm: expected [H,W,3], got " +
                     shape_str(img.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << "P6\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(img.numel());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(img[i], 0.0f, 1.0f);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("short write on image '" + path + "'");
}

void write_ppm_gray(const std::string& path, const Tensor<float>& map) {
  Shape s = map.shape();
  if (s.size() == 3 && s[2] == 1) s.pop_back();
  if (s.size() != 2)
    throw ShapeError("write_ppm_gray: expected [H,W], got " +
                     shape_str(map.shape()));
  Tensor<float> rgb({s[0], s[1], 3});
  for (std::size_t p = 0; p < s[0] * s[1]; ++p)
    rgb[p * 3] = rgb[p * 3 + 1] = rgb[p * 3 + 2] = map[p];
  write_ppm(path, rgb);
}

Tensor<float> resize_bilinear(const Tensor<float>& img, std::size_t out_h,
                              std::size_t out_w) {
  if (img.rank() != 3)
    throw ShapeError("resize_bilinear: expected [H,W,C], got " +
                     shape_str(img.shape()));
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  if (out_h == H && out_w == W) return img;
  Tensor<float> out({out_h, out_w, C});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    const double y0f = std::floor(fy);
    const double wy = fy - y0f;
    const std::size_t y0 = static_cast<std::size_t>(
        std::clamp(y0f, 0.0, static_cast<double>(H - 1)));
    const std::size_t y1 = static_cast<std::size_t>(
        std::clamp(y0f + 1.0, 0.0, static_cast<double>(H - 1)));
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      const double x0f = std::floor(fx);
      const double wx = fx - x0f;
      const std::size_t x0 = static_cast<std::size_t>(
          std::clamp(x0f, 0.0, static_cast<double>(W - 1)));
      const std::size_t x1 = static_cast<std::size_t>(
          std::clamp(x0f + 1.0, 0.0, static_cast<double>(W - 1)));
      for (std::size_t c = 0; c < C; ++c) {
        const double v00 = img[(y0 * W + x0) * C + c];
        const double v01 = img[(y0 * W + x1) * C + c];
        const double v10 = img[(y1 * W + x0) * C + c];
        const double v11 = img[(y1 * W + x1) * C + c];
        const double top = v00 * (1.0 - wx) + v01 * wx;
        const double bot = v10 * (1.0 - wx) + v11 * wx;
        out[(oy * out_w + ox) * C + c] =
            static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Tensor<float> load_image(const std::string& path, std::size_t out_h,
                         std::size_t out_w) {
  const std::size_t dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
  if (ext != "ppm")
    throw DataError("unsupported image format '" + path +
                    "' (ppm is the supported format)");
  return resize_bilinear(read_ppm(path), out_h, out_w);
}

}  // namespace csab
