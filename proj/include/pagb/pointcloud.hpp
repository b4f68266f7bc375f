#pragma once

// Point-cloud parsing, ground modelling, height normalization and clipping.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/parallel.hpp"
#include "pagb/common/text.hpp"
#include "pagb/geodata.hpp"

namespace pagb::pc {

using geo::GridSpec;
using geo::Point;
using geo::Polygon;
using geo::Raster;

inline constexpr std::uint8_t kGroundClass = 2;

struct PointRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::uint8_t return_number = 1;
  std::uint8_t num_returns = 1;
  std::uint8_t classification = 1;

  bool operator==(const PointRecord&) const = default;
};

struct PointCloud {
  std::vector<PointRecord> records;
  bool height_normalized = false;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

// ---------------------------------------------------------------------------
// PCX text format
//
//   # comment lines anywhere
//   PCX 1
//   x y z return_number num_returns classification

namespace detail {

inline std::string_view next_field(std::string_view& line) {
  const auto sp = line.find(' ');
  std::string_view f = line.substr(0, sp);
  line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
  return f;
}

inline PointRecord parse_pcx_record(std::string_view line, std::size_t line_no) {
  PointRecord r;
  double xyz[3];
  for (double& v : xyz) {
    const auto f = next_field(line);
    if (f.empty() || !text::parse_double(f, v) || !std::isfinite(v))
      throw ParseError("malformed coordinate", line_no);
  }
  unsigned attrs[3];
  for (unsigned& v : attrs) {
    const auto f = next_field(line);
    auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || res.ec != std::errc{} || res.ptr != f.data() + f.size() || v > 255)
      throw ParseError("malformed integer attribute", line_no);
  }
  if (!line.empty()) throw ParseError("expected 6 fields", line_no);
  if (attrs[0] < 1) throw ParseError("return_number must be >= 1", line_no);
  if (attrs[0] > attrs[1]) throw ParseError("return_number exceeds num_returns", line_no);
  r.x = xyz[0];
  r.y = xyz[1];
  r.z = xyz[2];
  r.return_number = static_cast<std::uint8_t>(attrs[0]);
  r.num_returns = static_cast<std::uint8_t>(attrs[1]);
  r.classification = static_cast<std::uint8_t>(attrs[2]);
  return r;
}

}  // namespace detail

inline PointCloud parse_pcx(std::string_view content) {
  PointCloud cloud;
  bool header_seen = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "PCX 1") throw ParseError("expected header 'PCX 1'", line_no);
      header_seen = true;
      continue;
    }
    cloud.records.push_back(detail::parse_pcx_record(line, line_no));
  }
  if (!header_seen) throw ParseError("missing 'PCX 1' header", line_no + 1);
  return cloud;
}

inline PointCloud parse_pcx(std::istream& in) {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_pcx(std::string_view(content));
}

inline PointCloud read_pcx_file(const std::string& path) { return parse_pcx(std::string_view(text::read_file(path))); }

inline std::string write_pcx(const PointCloud& cloud) {
  std::string out = "PCX 1\n";
  out.reserve(cloud.size() * 40 + 8);
  char buf[64];
  for (const auto& r : cloud.records) {
    for (double v : {r.x, r.y, r.z}) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, res.ptr);
      out += ' ';
    }
    out += std::to_string(r.return_number);
    out += ' ';
    out += std::to_string(r.num_returns);
    out += ' ';
    out += std::to_string(r.classification);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground model and normalization

struct GroundModel {
  GridSpec spec;
  Raster ground_elevation;

  /// Bilinear interpolation between cell centers; constant extrapolation
  /// beyond the outermost centers. Caller guarantees p is inside the extent.
  double elevation(Point p) const noexcept {
    const auto& s = spec;
    const double fx = (p.x - s.origin_x) / s.cell_size - 0.5;
    const double fy_south = (p.y - s.origin_y) / s.cell_size - 0.5;
    const double cx = std::clamp(fx, 0.0, static_cast<double>(s.n_cols - 1));
    const double cy = std::clamp(fy_south, 0.0, static_cast<double>(s.n_rows - 1));
    const auto c0 = static_cast<std::size_t>(std::floor(cx));
    const auto r0 = static_cast<std::size_t>(std::floor(cy));
    const std::size_t c1 = std::min(c0 + 1, s.n_cols - 1);
    const std::size_t r1 = std::min(r0 + 1, s.n_rows - 1);
    const double tx = cx - static_cast<double>(c0);
    const double ty = cy - static_cast<double>(r0);
    auto v = [&](std::size_t c, std::size_t rs) { return ground_elevation.at(c, s.n_rows - 1 - rs); };
    const double south = v(c0, r0) * (1.0 - tx) + v(c1, r0) * tx;
    const double north = v(c0, r1) * (1.0 - tx) + v(c1, r1) * tx;
    return south * (1.0 - ty) + north * ty;
  }
};

/// Per-cell mean elevation of ground-class returns; empty cells take the
/// value of the nearest non-empty cell (center distance, lowest index on ties).
inline GroundModel build_ground_model(const PointCloud& cloud, const GridSpec& spec) {
  spec.validate();
  if (cloud.height_normalized) throw ValidationError("ground model requires an un-normalized cloud");
  std::vector<double> sum(spec.size(), 0.0);
  std::vector<std::size_t> count(spec.size(), 0);
  std::size_t n_ground = 0;
  for (const auto& r : cloud.records) {
    if (r.classification != kGroundClass) continue;
    ++n_ground;
    if (const auto i = spec.locate({r.x, r.y})) {
      sum[*i] += r.z;
      ++count[*i];
    }
  }
  if (n_ground == 0) throw ValidationError("cloud contains no ground returns");

  GroundModel gm{spec, Raster(spec, spec.nodata, "ground")};
  std::vector<std::size_t> filled;
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (count[i]) {
      gm.ground_elevation.values[i] = sum[i] / static_cast<double>(count[i]);
      filled.push_back(i);
    }
  if (filled.empty()) throw ValidationError("no ground returns fall inside the grid");

  parallel_for(spec.size(), [&](std::size_t i) {
    if (count[i]) return;
    const std::size_t col = i % spec.n_cols, row = i / spec.n_cols;
    std::size_t best = filled.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j : filled) {
      const double dc = static_cast<double>(j % spec.n_cols) - static_cast<double>(col);
      const double dr = static_cast<double>(j / spec.n_cols) - static_cast<double>(row);
      const double d = dc * dc + dr * dr;
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    gm.ground_elevation.values[i] = gm.ground_elevation.values[best];
  });
  return gm;
}

/// Replaces z with max(0, z - ground(x, y)).
inline PointCloud normalize_heights(const PointCloud& cloud, const GroundModel& ground) {
  if (cloud.height_normalized) throw ValidationError("cloud is already height-normalized");
  const auto ext = ground.spec.extent();
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (!ext.contains({cloud.records[i].x, cloud.records[i].y})) outside.push_back(i);
  if (!outside.empty()) {
    std::string msg = std::to_string(outside.size()) + " point(s) outside the ground model extent; indices:";
    for (std::size_t k = 0; k < std::min<std::size_t>(outside.size(), 20); ++k) msg += " " + std::to_string(outside[k]);
    if (outside.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }
  PointCloud out;
  out.records = cloud.records;
  out.height_normalized = true;
  constexpr std::size_t kChunk = 1 << 16;
  parallel_for((out.size() + kChunk - 1) / kChunk, [&](std::size_t c) {
    const std::size_t end = std::min(out.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      auto& r = out.records[i];
      r.z = std::max(0.0, r.z - ground.elevation({r.x, r.y}));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Clipping

/// Records within the closed disc, in original order.
inline PointCloud clip_circle(const PointCloud& cloud, Point center, double radius) {
  if (!(radius > 0.0)) throw ValidationError("clip radius must be > 0");
  PointCloud out;
  out.height_normalized = cloud.height_normalized;
  const double r2 = radius * radius;
  for (const auto& r : cloud.records) {
    const double dx = r.x - center.x, dy = r.y - center.y;
    if (dx * dx + dy * dy <= r2) out.records.push_back(r);
  }
  return out;
}

/// Bucket index over a cloud for repeated small-area queries. Query results
/// match the linear-scan functions exactly, including record order.
class SpatialIndex {
public:
  SpatialIndex(const PointCloud& cloud, double bucket_size) : cloud_(&cloud), bucket_(bucket_size) {
    if (!(bucket_size > 0.0)) throw ValidationError("bucket size must be > 0");
    if (cloud.empty()) return;
    double xmin = cloud.records[0].x, ymin = cloud.records[0].y, xmax = xmin, ymax = ymin;
    for (const auto& r : cloud.records) {
      xmin = std::min(xmin, r.x);
      ymin = std::min(ymin, r.y);
      xmax = std::max(xmax, r.x);
      ymax = std::max(ymax, r.y);
    }
    x0_ = xmin;
    y0_ = ymin;
    nx_ = static_cast<std::size_t>((xmax - xmin) / bucket_) + 1;
    ny_ = static_cast<std::size_t>((ymax - ymin) / bucket_) + 1;
    offsets_.assign(nx_ * ny_ + 1, 0);
    for (const auto& r : cloud.records) ++offsets_[bucket_of(r.x, r.y) + 1];
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    items_.resize(cloud.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < cloud.size(); ++i) items_[fill[bucket_of(cloud.records[i].x, cloud.records[i].y)]++] = i;
  }

  const PointCloud& cloud() const noexcept { return *cloud_; }

  /// Indices of records inside the closed disc, ascending.
  std::vector<std::size_t> query_circle(Point c, double radius) const {
    std::vector<std::size_t> hits;
    if (cloud_->empty()) return hits;
    const double r2 = radius * radius;
    const auto bx0 = clamp_bucket((c.x - radius - x0_) / bucket_, nx_);
    const auto bx1 = clamp_bucket((c.x + radius - x0_) / bucket_, nx_);
    const auto by0 = clamp_bucket((c.y - radius - y0_) / bucket_, ny_);
    const auto by1 = clamp_bucket((c.y + radius - y0_) / bucket_, ny_);
    for (std::size_t by = by0; by <= by1; ++by)
      for (std::size_t bx = bx0; bx <= bx1; ++bx) {
        const std::size_t b = by * nx_ + bx;
        for (std::size_t k = offsets_[b]; k < offsets_[b + 1]; ++k) {
          const auto& r = cloud_->records[items_[k]];
          const double dx = r.x - c.x, dy = r.y - c.y;
          if (dx * dx + dy * dy <= r2) hits.push_back(items_[k]);
        }
      }
    std::sort(hits.begin(), hits.end());
    return hits;
  }

  PointCloud clip_circle(Point c, double radius) const {
    if (!(radius > 0.0)) throw ValidationError("clip radius must be > 0");
    PointCloud out;
    out.height_normalized = cloud_->height_normalized;
    for (std::size_t i : query_circle(c, radius)) out.records.push_back(cloud_->records[i]);
    return out;
  }

private:
  std::size_t bucket_of(double x, double y) const noexcept {
    const auto bx = std::min(nx_ - 1, static_cast<std::size_t>((x - x0_) / bucket_));
    const auto by = std::min(ny_ - 1, static_cast<std::size_t>((y - y0_) / bucket_));
    return by * nx_ + bx;
  }
  static std::size_t clamp_bucket(double f, std::size_t n) noexcept {
    if (!(f > 0.0)) return 0;
    return std::min(n - 1, static_cast<std::size_t>(f));
  }

  const PointCloud* cloud_;
  double bucket_;
  double x0_ = 0.0, y0_ = 0.0;
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> items_;
};

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
inline Polygon convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && geo::cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const auto& p = pts[i - 1];
    while (k >= t && geo::cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

/// Fraction of the disc covered by the convex hull of the returns' (x, y).
/// The disc is the equal-area 720-gon; fewer than three non-collinear
/// points give 0.
inline double convex_hull_coverage(const PointCloud& cloud, Point center, double radius) {
  if (cloud.size() < 3) return 0.0;
  std::vector<Point> pts;
  pts.reserve(cloud.size());
  for (const auto& r : cloud.records) pts.push_back({r.x, r.y});
  const Polygon hull = convex_hull(std::move(pts));
  if (hull.size() < 3) return 0.0;
  const Polygon disc = geo::circle_polygon(center, radius, 720);
  const double inter = geo::polygon_area(geo::clip_to_convex(hull, disc));
  return std::clamp(inter / geo::polygon_area(disc), 0.0, 1.0);
}

}  // namespace pagb::pc
