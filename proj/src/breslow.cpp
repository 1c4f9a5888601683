#include "msfcn/breslow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msfcn/error.hpp"

namespace msfcn::morph {

namespace {

constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

// Uniform bucket grid over boundary points for radius and nearest queries.
class PointGrid {
 public:
  PointGrid(const std::vector<Point>& pts, int width, int height, int cell)
      : pts_(pts), cell_(cell), nx_((width + cell - 1) / cell), ny_((height + cell - 1) / cell) {
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t i = 0; i < pts.size(); ++i) bucket(pts[i].x / cell_, pts[i].y / cell_).push_back(i);
  }

  template <typename F>
  void for_each_within(double cx, double cy, double radius, F&& f) const {
    const int x0 = std::max(0, static_cast<int>(std::floor((cx - radius) / cell_)));
    const int x1 = std::min(nx_ - 1, static_cast<int>(std::floor((cx + radius) / cell_)));
    const int y0 = std::max(0, static_cast<int>(std::floor((cy - radius) / cell_)));
    const int y1 = std::min(ny_ - 1, static_cast<int>(std::floor((cy + radius) / cell_)));
    const double r2 = radius * radius;
    for (int by = y0; by <= y1; ++by) {
      for (int bx = x0; bx <= x1; ++bx) {
        for (std::size_t i : buckets_[static_cast<std::size_t>(by) * nx_ + bx]) {
          const double dx = pts_[i].x - cx, dy = pts_[i].y - cy;
          if (dx * dx + dy * dy <= r2) f(i);
        }
      }
    }
  }

  // Index of the nearest point; ties go to the lower index.
  std::size_t nearest(int px, int py) const {
    const int cx = px / cell_, cy = py / cell_;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    long long best_d2 = std::numeric_limits<long long>::max();
    const int max_ring = std::max(nx_, ny_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      // Every point in ring r is at least (r - 1) * cell away.
      if (best != std::numeric_limits<std::size_t>::max()) {
        const long long reach = static_cast<long long>(ring - 1) * cell_;
        if (reach > 0 && reach * reach > best_d2) break;
      }
      for (int by = cy - ring; by <= cy + ring; ++by) {
        for (int bx = cx - ring; bx <= cx + ring; ++bx) {
          if (std::max(std::abs(bx - cx), std::abs(by - cy)) != ring) continue;
          if (bx < 0 || by < 0 || bx >= nx_ || by >= ny_) continue;
          for (std::size_t i : buckets_[static_cast<std::size_t>(by) * nx_ + bx]) {
            const long long dx = pts_[i].x - px, dy = pts_[i].y - py;
            const long long d2 = dx * dx + dy * dy;
            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
      }
    }
    return best;
  }

 private:
  std::vector<std::size_t>& bucket(int bx, int by) { return buckets_[static_cast<std::size_t>(by) * nx_ + bx]; }

  const std::vector<Point>& pts_;
  int cell_;
  int nx_, ny_;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace

SurfaceModel extract_surface(const LabelMask& mask, double window_radius) {
  if (!(window_radius >= 1.0)) throw Error(Errc::invalid_config, "surface window radius must be >= 1 px");
  SurfaceModel s;
  s.window_radius = window_radius;
  std::vector<std::array<double, 2>> outward;  // summed offsets to background neighbours
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.cls(x, y) != TissueClass::epidermis) continue;
      std::array<double, 2> out{0.0, 0.0};
      bool touches = false;
      for (const auto& [dx, dy] : kNeighbours) {
        if (mask.in_bounds(x + dx, y + dy) && mask.cls(x + dx, y + dy) == TissueClass::background) {
          out[0] += dx;
          out[1] += dy;
          touches = true;
        }
      }
      if (!touches) continue;
      s.boundary_points.push_back({x, y});
      outward.push_back(out);
    }
  }
  if (s.boundary_points.empty()) throw Error(Errc::no_epidermis_surface, "no epidermis pixel borders background");

  const PointGrid grid(s.boundary_points, mask.width, mask.height, 16);
  s.tangents.resize(s.boundary_points.size());
  s.normals.resize(s.boundary_points.size());
  std::vector<std::size_t> window;
  for (std::size_t i = 0; i < s.boundary_points.size(); ++i) {
    const Point p = s.boundary_points[i];
    window.clear();
    grid.for_each_within(p.x, p.y, window_radius, [&](std::size_t j) { window.push_back(j); });
    double mx = 0.0, my = 0.0, ox = 0.0, oy = 0.0;
    for (std::size_t j : window) {
      mx += s.boundary_points[j].x;
      my += s.boundary_points[j].y;
      ox += outward[j][0];
      oy += outward[j][1];
    }
    mx /= static_cast<double>(window.size());
    my /= static_cast<double>(window.size());
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t j : window) {
      const double dx = s.boundary_points[j].x - mx, dy = s.boundary_points[j].y - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    const double tx = std::cos(theta), ty = std::sin(theta);
    double nx = -ty, ny = tx;
    if (nx * ox + ny * oy > 0.0) {
      nx = -nx;
      ny = -ny;
    }
    s.tangents[i] = {tx, ty};
    s.normals[i] = {nx, ny};
  }
  return s;
}

std::vector<Point> main_tumour_mass(const LabelMask& mask) {
  std::vector<int> component(mask.labels.size(), -1);
  std::vector<Point> best, current, stack;
  int next = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (mask.cls(x, y) != TissueClass::tumour || component[idx] >= 0) continue;
      current.clear();
      stack.assign(1, {x, y});
      component[idx] = next;
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        current.push_back(p);
        for (const auto& [dx, dy] : kNeighbours) {
          const int qx = p.x + dx, qy = p.y + dy;
          if (!mask.in_bounds(qx, qy) || mask.cls(qx, qy) != TissueClass::tumour) continue;
          int& c = component[static_cast<std::size_t>(qy) * mask.width + qx];
          if (c >= 0) continue;
          c = next;
          stack.push_back({qx, qy});
        }
      }
      ++next;
      if (current.size() > best.size()) best.swap(current);
    }
  }
  if (best.empty()) throw Error(Errc::no_tumour, "mask has no tumour pixels");
  std::sort(best.begin(), best.end(), [](Point a, Point b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  return best;
}

void to_json(nlohmann::json& j, const BreslowResult& r) {
  j = {{"thickness_um", r.thickness_um},
       {"thickness_px", r.thickness_px},
       {"deep_point", {r.deep_point.x, r.deep_point.y}},
       {"surface_point", {r.surface_point.x, r.surface_point.y}},
       {"main_mass_size", r.main_mass_size},
       {"clamped", r.clamped}};
}

BreslowResult breslow(const LabelMask& mask, double microns_per_pixel, double window_radius) {
  if (!(microns_per_pixel > 0.0)) throw Error(Errc::invalid_config, "microns_per_pixel must be positive");
  const SurfaceModel surface = extract_surface(mask, window_radius);
  const auto mass = main_tumour_mass(mask);
  const PointGrid grid(surface.boundary_points, mask.width, mask.height, 16);

  BreslowResult r;
  r.main_mass_size = mass.size();
  r.clamped = true;
  double best = -1.0;
  for (const Point p : mass) {
    const std::size_t bi = grid.nearest(p.x, p.y);
    const Point b = surface.boundary_points[bi];
    const auto [vx, vy] = surface.normals[bi];
    const double along = (p.x - b.x) * vx + (p.y - b.y) * vy;
    double depth = 0.0;
    if (along > 0.0) {
      // Interface sits half a pixel outside b; the pixel's far edge adds its half-extent along v.
      depth = along + 0.5 + 0.5 * (std::abs(vx) + std::abs(vy));
      r.clamped = false;
    }
    if (depth > best) {
      best = depth;
      r.deep_point = p;
      r.surface_point = b;
    }
  }
  r.thickness_px = best;
  r.thickness_um = best * microns_per_pixel;
  return r;
}

RgbRaster error_overlay(const LabelMask& truth, const LabelMask& pred, TissueClass cls) {
  if (truth.width != pred.width || truth.height != pred.height) {
    throw Error(Errc::shape_mismatch, "overlay needs equal-size masks");
  }
  RgbRaster out(truth.width, truth.height);
  const std::uint8_t id = static_cast<std::uint8_t>(cls);
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const bool t = truth.labels[i] == id;
    const bool p = pred.labels[i] == id;
    std::uint8_t* px = out.pixels.data() + i * 3;
    if (t && p) {
      px[0] = px[1] = px[2] = 255;
    } else if (p) {
      px[0] = 0;
      px[1] = 128;
      px[2] = 128;
    } else if (t) {
      px[0] = 255;
      px[1] = px[2] = 0;
    }
  }
  return out;
}

}  // namespace msfcn::morph
