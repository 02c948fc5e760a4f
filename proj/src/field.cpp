#include "hybridreg/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>

#include "hybridreg/parallel.hpp"

namespace hybridreg {

namespace {

double interp_plane(const std::vector<double>& plane, int w, int h, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = std::min(static_cast<int>(std::floor(x)), w - 2);
  int y0 = std::min(static_cast<int>(std::floor(y)), h - 2);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int xx, int yy) { return plane[static_cast<size_t>(yy) * w + xx]; };
  const double top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
  const double bot = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

}  // namespace

Point2 DisplacementField::displacement_at(double x, double y) const {
  return {interp_plane(u, width, height, x, y),
          interp_plane(v, width, height, x, y)};
}

GrayImage warp_field(const GrayImage& img, const DisplacementField& phi) {
  if (img.width() != phi.width || img.height() != phi.height)
    throw ArgumentError("warp_field: image/field dimension mismatch");
  GrayImage out(img.width(), img.height());
  parallel_blocks(img.height(), 64, [&](int, int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < img.width(); ++x) {
        const size_t i = phi.idx(x, y);
        out.at(x, y) = sample_bilinear(img, x + phi.u[i], y + phi.v[i]);
      }
  });
  return out;
}

void warp_field_with_grad(const GrayImage& img, const DisplacementField& phi,
                          GrayImage& out, std::vector<double>& dout_du,
                          std::vector<double>& dout_dv) {
  const int w = img.width(), h = img.height();
  if (w != phi.width || h != phi.height)
    throw ArgumentError("warp_field_with_grad: image/field dimension mismatch");
  parallel_blocks(h, 32, [&](int, int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = phi.idx(x, y);
        double sx = x + phi.u[i];
        double sy = y + phi.v[i];
        const bool clamped_x = sx <= 0.0 || sx >= w - 1;
        const bool clamped_y = sy <= 0.0 || sy >= h - 1;
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        int x0 = static_cast<int>(std::floor(sx));
        int y0c = static_cast<int>(std::floor(sy));
        if (static_cast<double>(x0) == sx && x0 > 0) x0 -= 1;
        if (static_cast<double>(y0c) == sy && y0c > 0) y0c -= 1;
        x0 = std::min(x0, w - 2);
        y0c = std::min(y0c, h - 2);
        const int x1 = x0 + 1, y1c = y0c + 1;
        const double fx = sx - x0, fy = sy - y0c;
        const double v00 = img.at(x0, y0c), v10 = img.at(x1, y0c);
        const double v01 = img.at(x0, y1c), v11 = img.at(x1, y1c);
        const double top = (1.0 - fx) * v00 + fx * v10;
        const double bot = (1.0 - fx) * v01 + fx * v11;
        out.at(x, y) = (1.0 - fy) * top + fy * bot;
        dout_du[i] = clamped_x ? 0.0 : (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
        dout_dv[i] = clamped_y ? 0.0 : (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
      }
  });
}

std::vector<Point2> warp_points(const std::vector<Point2>& points,
                                const DisplacementField& phi) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.push_back(p + phi.displacement_at(p.x, p.y));
  return out;
}

DisplacementField resample_field(const DisplacementField& phi, int w, int h) {
  if (w < 1 || h < 1) throw ArgumentError("resample_field: zero dimension");
  DisplacementField out(w, h);
  const double sx = (w > 1) ? static_cast<double>(phi.width - 1) / (w - 1) : 0.0;
  const double sy = (h > 1) ? static_cast<double>(phi.height - 1) / (h - 1) : 0.0;
  const double scale_u = static_cast<double>(w) / phi.width;
  const double scale_v = static_cast<double>(h) / phi.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double srcx = (w > 1) ? x * sx : 0.5 * (phi.width - 1);
      const double srcy = (h > 1) ? y * sy : 0.5 * (phi.height - 1);
      const size_t i = out.idx(x, y);
      out.u[i] = scale_u * interp_plane(phi.u, phi.width, phi.height, srcx, srcy);
      out.v[i] = scale_v * interp_plane(phi.v, phi.width, phi.height, srcx, srcy);
    }
  return out;
}

DisplacementField upsample_field(const DisplacementField& phi, int factor) {
  if (factor != 2) throw ArgumentError("upsample_field: factor must be 2");
  return resample_field(phi, phi.width * 2, phi.height * 2);
}

JacobianStats jacobian_stats(const DisplacementField& phi) {
  if (phi.width < 2 || phi.height < 2)
    throw ArgumentError("jacobian_stats: field must be >= 2x2");
  JacobianStats s;
  s.min_det = std::numeric_limits<double>::infinity();
  long folded = 0, total = 0;
  for (int y = 1; y < phi.height - 1; ++y)
    for (int x = 1; x < phi.width - 1; ++x) {
      const double ux = 0.5 * (phi.u[phi.idx(x + 1, y)] - phi.u[phi.idx(x - 1, y)]);
      const double uy = 0.5 * (phi.u[phi.idx(x, y + 1)] - phi.u[phi.idx(x, y - 1)]);
      const double vx = 0.5 * (phi.v[phi.idx(x + 1, y)] - phi.v[phi.idx(x - 1, y)]);
      const double vy = 0.5 * (phi.v[phi.idx(x, y + 1)] - phi.v[phi.idx(x, y - 1)]);
      const double det = (1.0 + ux) * (1.0 + vy) - uy * vx;
      s.min_det = std::min(s.min_det, det);
      if (det <= 0.0) ++folded;
      ++total;
    }
  if (total == 0) {
    // 2x2 fields have no interior; the identity Jacobian is reported
    s.min_det = 1.0;
    return s;
  }
  s.folding_fraction = static_cast<double>(folded) / total;
  return s;
}

namespace {
constexpr char kMagic[4] = {'H', 'R', 'F', 'D'};

void write_u32_le(FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw IoError("save_field: short write");
}

uint32_t read_u32_le(FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw FormatError("load_field: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32_plane(FILE* f, const std::vector<double>& plane) {
  std::vector<float> buf(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) buf[i] = static_cast<float>(plane[i]);
  if (std::fwrite(buf.data(), sizeof(float), buf.size(), f) != buf.size())
    throw IoError("save_field: short write");
}
}  // namespace

void save_field(const DisplacementField& phi, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("save_field: cannot open " + path);
  try {
    if (std::fwrite(kMagic, 1, 4, f) != 4) throw IoError("save_field: short write");
    write_u32_le(f, static_cast<uint32_t>(phi.width));
    write_u32_le(f, static_cast<uint32_t>(phi.height));
    write_f32_plane(f, phi.u);
    write_f32_plane(f, phi.v);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
}

DisplacementField load_field(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("load_field: cannot open " + path);
  DisplacementField phi;
  try {
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kMagic, 4) != 0)
      throw FormatError("load_field: bad magic in " + path);
    const uint32_t w = read_u32_le(f), h = read_u32_le(f);
    if (w < 1 || h < 1 || static_cast<uint64_t>(w) * h > (1ULL << 30))
      throw FormatError("load_field: implausible dimensions in " + path);
    phi = DisplacementField(static_cast<int>(w), static_cast<int>(h));
    std::vector<float> buf(phi.size());
    for (auto* plane : {&phi.u, &phi.v}) {
      if (std::fread(buf.data(), sizeof(float), buf.size(), f) != buf.size())
        throw FormatError("load_field: truncated plane in " + path);
      for (size_t i = 0; i < buf.size(); ++i) (*plane)[i] = buf[i];
    }
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return phi;
}

}  // namespace hybridreg
