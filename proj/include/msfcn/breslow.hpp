#pragma once
// Tumour depth below the outer epidermis surface, measured perpendicular to
// the locally fitted surface, plus TP/FP/FN overlays for one class.

#include <vector>

#include <json.hpp>

#include "msfcn/raster.hpp"

namespace msfcn::morph {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline constexpr double kDefaultWindowRadius = 64.0;

struct SurfaceModel {
  // Epidermis pixels with a background 4-neighbour, in raster order.
  std::vector<Point> boundary_points;
  // Unit tangent and unit normal (pointing into tissue) per boundary point,
  // from the principal direction of boundary points within window_radius.
  std::vector<std::array<double, 2>> tangents;
  std::vector<std::array<double, 2>> normals;
  double window_radius = kDefaultWindowRadius;
};

// Throws NoEpidermisSurface.
SurfaceModel extract_surface(const LabelMask& mask, double window_radius = kDefaultWindowRadius);

// Largest 4-connected tumour component; ties go to the component found first
// in raster order. Throws NoTumour.
std::vector<Point> main_tumour_mass(const LabelMask& mask);

struct BreslowResult {
  double thickness_um = 0.0;
  double thickness_px = 0.0;
  Point deep_point;
  Point surface_point;
  std::size_t main_mass_size = 0;
  bool clamped = false;  // every main-mass pixel lies on the outer side of the surface
};

void to_json(nlohmann::json& j, const BreslowResult& r);

// Depth of a tumour pixel is measured from the background/epidermis interface
// (half a pixel outside the boundary pixel centre) to the far edge of the
// tumour pixel, along the window normal at the nearest boundary point.
BreslowResult breslow(const LabelMask& mask, double microns_per_pixel,
                      double window_radius = kDefaultWindowRadius);

// White = true positive, teal = false positive, red = false negative, black elsewhere.
RgbRaster error_overlay(const LabelMask& truth, const LabelMask& pred, TissueClass cls);

}  // namespace msfcn::morph
