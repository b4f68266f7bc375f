#pragma once

// Grid, raster, polygon and hexagon-tessellation primitives. All geometry is
// planar Cartesian in meters.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/random.hpp"
#include "pagb/common/text.hpp"

namespace pagb::geo {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

using Polygon = std::vector<Point>;

struct Rect {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;

  double width() const noexcept { return xmax - xmin; }
  double height() const noexcept { return ymax - ymin; }
  double area() const noexcept { return width() * height(); }
  bool degenerate() const noexcept { return !(width() > 0.0 && height() > 0.0); }
  bool contains(Point p) const noexcept { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
  bool intersects(const Rect& o) const noexcept {
    return xmin < o.xmax && o.xmin < xmax && ymin < o.ymax && o.ymin < ymax;
  }
  Polygon polygon() const { return {{xmin, ymin}, {xmax, ymin}, {xmax, ymax}, {xmin, ymax}}; }
};

// ---------------------------------------------------------------------------
// Polygon helpers

/// Unsigned shoelace area.
inline double polygon_area(std::span<const Point> poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++)
    a += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
  return std::abs(a) * 0.5;
}

inline Rect bounding_box(std::span<const Point> poly) {
  Rect r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    r.xmin = std::min(r.xmin, p.x);
    r.ymin = std::min(r.ymin, p.y);
    r.xmax = std::max(r.xmax, p.x);
    r.ymax = std::max(r.ymax, p.y);
  }
  return r;
}

/// Even-odd point-in-polygon test.
inline bool point_in_polygon(std::span<const Point> poly, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

/// Sutherland-Hodgman clip of `subject` against an axis-aligned rectangle.
/// The area of the result is exact for any simple subject polygon.
inline Polygon clip_to_rect(std::span<const Point> subject, const Rect& r) {
  Polygon out(subject.begin(), subject.end());
  auto clip_edge = [&](auto inside, auto intersect) {
    if (out.empty()) return;
    Polygon in = std::move(out);
    out.clear();
    Point prev = in.back();
    bool prev_in = inside(prev);
    for (const auto& cur : in) {
      const bool cur_in = inside(cur);
      if (cur_in) {
        if (!prev_in) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(intersect(prev, cur));
      }
      prev = cur;
      prev_in = cur_in;
    }
  };
  auto at_x = [](Point a, Point b, double x) {
    const double t = (x - a.x) / (b.x - a.x);
    return Point{x, a.y + t * (b.y - a.y)};
  };
  auto at_y = [](Point a, Point b, double y) {
    const double t = (y - a.y) / (b.y - a.y);
    return Point{a.x + t * (b.x - a.x), y};
  };
  clip_edge([&](Point p) { return p.x >= r.xmin; }, [&](Point a, Point b) { return at_x(a, b, r.xmin); });
  clip_edge([&](Point p) { return p.x <= r.xmax; }, [&](Point a, Point b) { return at_x(a, b, r.xmax); });
  clip_edge([&](Point p) { return p.y >= r.ymin; }, [&](Point a, Point b) { return at_y(a, b, r.ymin); });
  clip_edge([&](Point p) { return p.y <= r.ymax; }, [&](Point a, Point b) { return at_y(a, b, r.ymax); });
  return out;
}

inline double cross(Point o, Point a, Point b) noexcept {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Clip `subject` against a convex, counter-clockwise `clip` polygon.
inline Polygon clip_to_convex(std::span<const Point> subject, std::span<const Point> clip) {
  Polygon out(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % clip.size()];
    Polygon in = std::move(out);
    out.clear();
    Point prev = in.back();
    double prev_side = cross(a, b, prev);
    for (const auto& cur : in) {
      const double cur_side = cross(a, b, cur);
      if (cur_side >= 0.0) {
        if (prev_side < 0.0) {
          const double t = prev_side / (prev_side - cur_side);
          out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        out.push_back(cur);
      } else if (prev_side >= 0.0) {
        const double t = prev_side / (prev_side - cur_side);
        out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      prev = cur;
      prev_side = cur_side;
    }
  }
  return out;
}

/// Counter-clockwise regular n-gon whose area equals that of the circle.
inline Polygon circle_polygon(Point center, double radius, std::size_t segments = 720) {
  const double n = static_cast<double>(segments);
  const double scaled = radius * std::sqrt(2.0 * std::numbers::pi / (n * std::sin(2.0 * std::numbers::pi / n)));
  Polygon poly(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
    poly[k] = {center.x + scaled * std::cos(t), center.y + scaled * std::sin(t)};
  }
  return poly;
}

/// Minimal CSV polygon encoding: header `x,y`, one vertex per row.
inline Polygon parse_polygon_csv(std::string_view content) {
  const auto table = text::parse_csv(content);
  const auto cx = table.column("x");
  const auto cy = table.column("y");
  Polygon poly;
  for (const auto& row : table.rows) {
    Point p;
    if (!text::parse_double(row[cx], p.x) || !text::parse_double(row[cy], p.y))
      throw ValidationError("bad polygon vertex");
    poly.push_back(p);
  }
  if (poly.size() < 3) throw ValidationError("polygon needs at least 3 vertices");
  return poly;
}

inline std::string polygon_to_csv(std::span<const Point> poly) {
  text::CsvWriter w({"x", "y"});
  for (const auto& p : poly) w.row({text::format_double(p.x), text::format_double(p.y)});
  return w.str();
}

// ---------------------------------------------------------------------------
// Grids and rasters

/// Pixel-aligned grid. Row 0 is the northern row, matching ASCII grid order.
struct GridSpec {
  double origin_x = 0.0;  // lower-left corner
  double origin_y = 0.0;
  double cell_size = 30.0;
  std::size_t n_cols = 1;
  std::size_t n_rows = 1;
  double nodata = -9999.0;

  void validate() const {
    if (!(cell_size > 0.0)) throw ValidationError("cell_size must be > 0");
    if (n_cols < 1 || n_rows < 1) throw ValidationError("grid must have at least one row and column");
  }

  std::size_t size() const noexcept { return n_cols * n_rows; }
  double cell_area() const noexcept { return cell_size * cell_size; }
  Rect extent() const noexcept {
    return {origin_x, origin_y, origin_x + cell_size * static_cast<double>(n_cols),
            origin_y + cell_size * static_cast<double>(n_rows)};
  }
  std::size_t index(std::size_t col, std::size_t row) const noexcept { return row * n_cols + col; }

  Point cell_center(std::size_t col, std::size_t row) const noexcept {
    return {origin_x + (static_cast<double>(col) + 0.5) * cell_size,
            origin_y + (static_cast<double>(n_rows - row) - 0.5) * cell_size};
  }
  Point cell_center(std::size_t idx) const noexcept { return cell_center(idx % n_cols, idx / n_cols); }

  Rect cell_rect(std::size_t col, std::size_t row) const noexcept {
    const double x0 = origin_x + static_cast<double>(col) * cell_size;
    const double y0 = origin_y + static_cast<double>(n_rows - 1 - row) * cell_size;
    return {x0, y0, x0 + cell_size, y0 + cell_size};
  }

  /// Cell index containing p. Cells are half-open [min, max) except that the
  /// east and north edges of the grid belong to the last column/row.
  std::optional<std::size_t> locate(Point p) const noexcept {
    const double fx = (p.x - origin_x) / cell_size;
    const double fy = (p.y - origin_y) / cell_size;
    if (!(fx >= 0.0) || !(fy >= 0.0)) return std::nullopt;
    auto col = static_cast<std::size_t>(fx);
    auto row_s = static_cast<std::size_t>(fy);
    if (col == n_cols && fx == static_cast<double>(n_cols)) col = n_cols - 1;
    if (row_s == n_rows && fy == static_cast<double>(n_rows)) row_s = n_rows - 1;
    if (col >= n_cols || row_s >= n_rows) return std::nullopt;
    return index(col, n_rows - 1 - row_s);
  }

  bool same_geometry(const GridSpec& o) const noexcept {
    return origin_x == o.origin_x && origin_y == o.origin_y && cell_size == o.cell_size && n_cols == o.n_cols &&
           n_rows == o.n_rows;
  }

  bool operator==(const GridSpec&) const = default;
};

struct Raster {
  GridSpec spec;
  std::vector<double> values;
  std::string band_name;

  Raster() = default;
  Raster(const GridSpec& s, double fill, std::string name = {})
      : spec(s), values(s.size(), fill), band_name(std::move(name)) {
    s.validate();
  }

  static Raster nodata_filled(const GridSpec& s, std::string name = {}) { return Raster(s, s.nodata, std::move(name)); }

  bool is_nodata(std::size_t i) const noexcept { return values[i] == spec.nodata || std::isnan(values[i]); }
  double& at(std::size_t col, std::size_t row) noexcept { return values[spec.index(col, row)]; }
  double at(std::size_t col, std::size_t row) const noexcept { return values[spec.index(col, row)]; }

  /// Value at the cell containing p, or nullopt when outside or nodata.
  std::optional<double> sample(Point p) const noexcept {
    const auto i = spec.locate(p);
    if (!i || is_nodata(*i)) return std::nullopt;
    return values[*i];
  }

  std::size_t count_valid() const noexcept {
    std::size_t n = 0;
    for (std::size_t i = 0; i < values.size(); ++i) n += !is_nodata(i);
    return n;
  }

  bool operator==(const Raster&) const = default;
};

inline void require_aligned(const GridSpec& a, const GridSpec& b, std::string_view what) {
  if (!a.same_geometry(b)) throw ValidationError(std::string(what) + ": rasters are not pixel-aligned");
}

// ---------------------------------------------------------------------------
// ASCII grid format

inline std::string write_ascii_grid(const Raster& r) {
  std::string out;
  out.reserve(r.values.size() * 8 + 128);
  out += "ncols " + std::to_string(r.spec.n_cols) + "\n";
  out += "nrows " + std::to_string(r.spec.n_rows) + "\n";
  out += "xllcorner " + text::format_double(r.spec.origin_x) + "\n";
  out += "yllcorner " + text::format_double(r.spec.origin_y) + "\n";
  out += "cellsize " + text::format_double(r.spec.cell_size) + "\n";
  out += "NODATA_value " + text::format_double(r.spec.nodata) + "\n";
  for (std::size_t row = 0; row < r.spec.n_rows; ++row) {
    for (std::size_t col = 0; col < r.spec.n_cols; ++col) {
      if (col) out += ' ';
      const double v = r.at(col, row);
      out += text::format_double(std::isnan(v) ? r.spec.nodata : v);
    }
    out += '\n';
  }
  return out;
}

inline Raster parse_ascii_grid(std::string_view content, std::string band_name = {}) {
  GridSpec spec;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= content.size()) throw ParseError("unexpected end of ASCII grid", line_no + 1);
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return text::trim(line);
  };
  const std::array<std::string_view, 6> keys{"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value"};
  for (auto key : keys) {
    auto line = next_line();
    const auto sp = line.find_first_of(" \t");
    if (sp == std::string_view::npos) throw ParseError("malformed header line", line_no);
    std::string k(line.substr(0, sp));
    std::string expect(key);
    auto lower = [](std::string s) {
      for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return s;
    };
    if (lower(k) != lower(expect)) throw ParseError("expected header key " + expect, line_no);
    auto val = line.substr(sp + 1);
    double v = 0.0;
    if (!text::parse_double(val, v)) throw ParseError("bad header value for " + expect, line_no);
    if (expect == "ncols") spec.n_cols = static_cast<std::size_t>(v);
    else if (expect == "nrows") spec.n_rows = static_cast<std::size_t>(v);
    else if (expect == "xllcorner") spec.origin_x = v;
    else if (expect == "yllcorner") spec.origin_y = v;
    else if (expect == "cellsize") spec.cell_size = v;
    else spec.nodata = v;
  }
  spec.validate();
  Raster r(spec, spec.nodata, std::move(band_name));
  std::size_t k = 0;
  const char* p = content.data() + std::min(pos, content.size());
  const char* end = content.data() + content.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\n' || *p == '\r' || *p == '\t')) ++p;
    if (p >= end) break;
    const char* q = p;
    while (q < end && !(*q == ' ' || *q == '\n' || *q == '\r' || *q == '\t')) ++q;
    double v = 0.0;
    if (!text::parse_double(std::string_view(p, static_cast<std::size_t>(q - p)), v))
      throw ValidationError("bad raster value at cell " + std::to_string(k));
    if (k >= r.values.size()) throw ValidationError("too many raster values");
    r.values[k++] = v;
    p = q;
  }
  if (k != r.values.size())
    throw ValidationError("expected " + std::to_string(r.values.size()) + " raster values, got " + std::to_string(k));
  return r;
}

// ---------------------------------------------------------------------------
// Plot footprint

/// Four-subplot inventory plot: one subplot at the center and three at
/// 36.6 m along azimuths 360/120/240 (0 = +y, clockwise).
struct PlotFootprint {
  static constexpr double kSubplotRadius = 7.32;
  static constexpr double kSubplotOffset = 36.6;
  static constexpr std::array<double, 3> kAzimuthsDeg{360.0, 120.0, 240.0};

  Point center;
  std::array<Point, 4> subplot_centers{};
  double subplot_radius = kSubplotRadius;

  double area() const noexcept { return 4.0 * std::numbers::pi * subplot_radius * subplot_radius; }

  std::vector<Polygon> subplot_polygons(std::size_t segments = 720) const {
    std::vector<Polygon> out;
    out.reserve(4);
    for (const auto& c : subplot_centers) out.push_back(circle_polygon(c, subplot_radius, segments));
    return out;
  }

  Rect bounds() const noexcept {
    Rect r = bounding_box(subplot_centers);
    r.xmin -= subplot_radius;
    r.ymin -= subplot_radius;
    r.xmax += subplot_radius;
    r.ymax += subplot_radius;
    return r;
  }
};

inline PlotFootprint build_plot_footprint(Point center) {
  if (!std::isfinite(center.x) || !std::isfinite(center.y)) throw ValidationError("plot center must be finite");
  PlotFootprint fp;
  fp.center = center;
  fp.subplot_centers[0] = center;
  for (std::size_t k = 0; k < 3; ++k) {
    const double az = PlotFootprint::kAzimuthsDeg[k] * std::numbers::pi / 180.0;
    fp.subplot_centers[k + 1] = {center.x + PlotFootprint::kSubplotOffset * std::sin(az),
                                 center.y + PlotFootprint::kSubplotOffset * std::cos(az)};
  }
  return fp;
}

// ---------------------------------------------------------------------------
// Zonal extraction

struct ZonalSums {
  double valid_area = 0.0;     // intersection area over non-nodata pixels
  double weighted_sum = 0.0;   // sum of value * intersection area
  double touched_area = 0.0;   // intersection area over all pixels of the grid
};

/// Exact polygon/pixel intersection sums for a set of disjoint polygons.
inline ZonalSums zonal_sums(const Raster& raster, std::span<const Polygon> polygons) {
  ZonalSums z;
  const auto& s = raster.spec;
  const Rect ext = s.extent();
  for (const auto& poly : polygons) {
    Rect bb = bounding_box(poly);
    if (!bb.intersects(ext)) continue;
    const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor((bb.xmin - s.origin_x) / s.cell_size)));
    const auto c1 = std::min(s.n_cols - 1, static_cast<std::size_t>(std::max(0.0, std::floor((bb.xmax - s.origin_x) / s.cell_size))));
    const auto rs0 = static_cast<std::size_t>(std::max(0.0, std::floor((bb.ymin - s.origin_y) / s.cell_size)));
    const auto rs1 = std::min(s.n_rows - 1, static_cast<std::size_t>(std::max(0.0, std::floor((bb.ymax - s.origin_y) / s.cell_size))));
    for (std::size_t rs = rs0; rs <= rs1; ++rs) {
      const std::size_t row = s.n_rows - 1 - rs;
      for (std::size_t col = c0; col <= c1; ++col) {
        const double a = polygon_area(clip_to_rect(poly, s.cell_rect(col, row)));
        if (a <= 0.0) continue;
        z.touched_area += a;
        const std::size_t i = s.index(col, row);
        if (raster.is_nodata(i)) continue;
        z.valid_area += a;
        z.weighted_sum += raster.values[i] * a;
      }
    }
  }
  return z;
}

/// Area-weighted mean of non-nodata pixels intersecting the polygons, or
/// nullopt when no valid pixel intersects.
inline std::optional<double> area_weighted_mean(const Raster& raster, std::span<const Polygon> polygons) {
  const auto z = zonal_sums(raster, polygons);
  if (!(z.valid_area > 0.0)) return std::nullopt;
  return z.weighted_sum / z.valid_area;
}

inline std::optional<double> area_weighted_mean(const Raster& raster, const Polygon& polygon) {
  return area_weighted_mean(raster, std::span<const Polygon>(&polygon, 1));
}

/// True when any pixel with positive intersection area satisfies `pred`.
template <class Pred>
bool any_intersecting_pixel(const Raster& raster, std::span<const Polygon> polygons, Pred pred) {
  const auto& s = raster.spec;
  for (const auto& poly : polygons) {
    const Rect bb = bounding_box(poly);
    const Rect ext = s.extent();
    if (bb.xmin < ext.xmin || bb.ymin < ext.ymin || bb.xmax > ext.xmax || bb.ymax > ext.ymax) {
      // Parts outside the grid count as intersecting an unmapped pixel.
      const double inside = polygon_area(clip_to_rect(poly, ext));
      if (inside < polygon_area(poly) * (1.0 - 1e-12)) return true;
    }
    const auto c0 = static_cast<std::size_t>(std::clamp(std::floor((bb.xmin - s.origin_x) / s.cell_size), 0.0, double(s.n_cols - 1)));
    const auto c1 = static_cast<std::size_t>(std::clamp(std::floor((bb.xmax - s.origin_x) / s.cell_size), 0.0, double(s.n_cols - 1)));
    const auto rs0 = static_cast<std::size_t>(std::clamp(std::floor((bb.ymin - s.origin_y) / s.cell_size), 0.0, double(s.n_rows - 1)));
    const auto rs1 = static_cast<std::size_t>(std::clamp(std::floor((bb.ymax - s.origin_y) / s.cell_size), 0.0, double(s.n_rows - 1)));
    for (std::size_t rs = rs0; rs <= rs1; ++rs) {
      const std::size_t row = s.n_rows - 1 - rs;
      for (std::size_t col = c0; col <= c1; ++col) {
        const std::size_t i = s.index(col, row);
        if (!pred(i)) continue;
        if (polygon_area(clip_to_rect(poly, s.cell_rect(col, row))) > 0.0) return true;
      }
    }
  }
  return false;
}

/// Nearest-neighbour resampling: each target cell takes the source cell
/// containing its center; no overlap gives nodata.
inline Raster resample_nearest(const Raster& src, const GridSpec& target) {
  target.validate();
  Raster out(target, target.nodata, src.band_name);
  if (src.spec.same_geometry(target) && src.spec.nodata == target.nodata) {
    out.values = src.values;
    return out;
  }
  for (std::size_t row = 0; row < target.n_rows; ++row)
    for (std::size_t col = 0; col < target.n_cols; ++col) {
      const auto i = src.spec.locate(target.cell_center(col, row));
      if (i && !src.is_nodata(*i)) out.at(col, row) = src.values[*i];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Hexagon tessellation

struct Hexagon {
  std::int64_t id = 0;
  std::int64_t q = 0;  // axial coordinates
  std::int64_t r = 0;
  Point center;
  Polygon vertices;  // counter-clockwise, flat-topped
};

/// Flat-topped hexagons with centroid spacing d on a randomly offset lattice.
class HexTessellation {
public:
  HexTessellation() = default;

  double spacing() const noexcept { return spacing_; }
  const Rect& extent() const noexcept { return extent_; }
  Point lattice_origin() const noexcept { return origin_; }
  const std::vector<Hexagon>& cells() const noexcept { return cells_; }

  /// Area of each hexagon: (sqrt(3)/2) d^2.
  double cell_area() const noexcept { return hexagon_area(spacing_); }

  static double hexagon_area(double spacing) noexcept { return std::sqrt(3.0) / 2.0 * spacing * spacing; }

  /// Index into cells() of the hexagon containing p; nullopt outside the
  /// tessellated set.
  std::optional<std::size_t> locate(Point p) const {
    const auto [q, r] = axial_of(p);
    auto it = lookup_.find({q, r});
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  friend HexTessellation tessellate_hexagons(const Rect& extent, double spacing, std::uint64_t seed);

private:
  double circumradius() const noexcept { return spacing_ / std::sqrt(3.0); }

  Point center_of(std::int64_t q, std::int64_t r) const noexcept {
    const double R = circumradius();
    return {origin_.x + 1.5 * R * static_cast<double>(q),
            origin_.y + spacing_ * (static_cast<double>(r) + 0.5 * static_cast<double>(q))};
  }

  std::pair<std::int64_t, std::int64_t> axial_of(Point p) const noexcept {
    const double R = circumradius();
    const double dx = p.x - origin_.x;
    const double dy = p.y - origin_.y;
    const double qf = (2.0 / 3.0 * dx) / R;
    const double rf = (-1.0 / 3.0 * dx + std::sqrt(3.0) / 3.0 * dy) / R;
    // cube rounding
    const double sf = -qf - rf;
    double rq = std::round(qf), rr = std::round(rf), rs = std::round(sf);
    const double dq = std::abs(rq - qf), dr = std::abs(rr - rf), ds = std::abs(rs - sf);
    if (dq > dr && dq > ds) rq = -rr - rs;
    else if (dr > ds) rr = -rq - rs;
    return {static_cast<std::int64_t>(rq), static_cast<std::int64_t>(rr)};
  }

  Polygon vertices_of(Point c) const {
    const double R = circumradius();
    Polygon v(6);
    for (int k = 0; k < 6; ++k) {
      const double t = std::numbers::pi / 3.0 * k;
      v[static_cast<std::size_t>(k)] = {c.x + R * std::cos(t), c.y + R * std::sin(t)};
    }
    return v;
  }

  double spacing_ = 0.0;
  Rect extent_;
  Point origin_;
  std::vector<Hexagon> cells_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> lookup_;
};

/// Tessellates `extent` with hexagons whose adjacent centroids are `spacing`
/// apart. The lattice origin is offset uniformly within one lattice cell
/// using `seed`; cells are every hexagon with positive overlap of the extent,
/// ordered by axial (q, r) and numbered from 0.
inline HexTessellation tessellate_hexagons(const Rect& extent, double spacing, std::uint64_t seed) {
  if (!(spacing > 0.0)) throw ValidationError("hexagon spacing must be > 0");
  if (extent.degenerate()) throw ValidationError("degenerate tessellation extent");
  HexTessellation t;
  t.spacing_ = spacing;
  t.extent_ = extent;
  Rng rng(derive_seed(seed, 0x4e58ULL));
  const double u = rng.uniform();
  const double v = rng.uniform();
  const double R = t.circumradius();
  // lattice basis a1 = (1.5R, d/2), a2 = (0, d)
  t.origin_ = {extent.xmin + u * 1.5 * R, extent.ymin + u * 0.5 * spacing + v * spacing};

  const auto q_lo = static_cast<std::int64_t>(std::floor((extent.xmin - t.origin_.x - R) / (1.5 * R))) - 1;
  const auto q_hi = static_cast<std::int64_t>(std::ceil((extent.xmax - t.origin_.x + R) / (1.5 * R))) + 1;
  for (std::int64_t q = q_lo; q <= q_hi; ++q) {
    const double y_shift = 0.5 * static_cast<double>(q) * spacing;
    const auto r_lo = static_cast<std::int64_t>(std::floor((extent.ymin - t.origin_.y - y_shift - spacing) / spacing)) - 1;
    const auto r_hi = static_cast<std::int64_t>(std::ceil((extent.ymax - t.origin_.y - y_shift + spacing) / spacing)) + 1;
    for (std::int64_t r = r_lo; r <= r_hi; ++r) {
      const Point c = t.center_of(q, r);
      Polygon verts = t.vertices_of(c);
      if (!bounding_box(verts).intersects(extent)) continue;
      if (polygon_area(clip_to_rect(verts, extent)) <= 0.0) continue;
      Hexagon h;
      h.id = static_cast<std::int64_t>(t.cells_.size());
      h.q = q;
      h.r = r;
      h.center = c;
      h.vertices = std::move(verts);
      t.lookup_[{q, r}] = t.cells_.size();
      t.cells_.push_back(std::move(h));
    }
  }
  return t;
}

/// Flat-topped hexagon polygon centered at c for centroid spacing d.
inline Polygon hexagon_polygon(Point c, double spacing) {
  const double R = spacing / std::sqrt(3.0);
  Polygon v(6);
  for (int k = 0; k < 6; ++k) {
    const double t = std::numbers::pi / 3.0 * k;
    v[static_cast<std::size_t>(k)] = {c.x + R * std::cos(t), c.y + R * std::sin(t)};
  }
  return v;
}

}  // namespace pagb::geo
