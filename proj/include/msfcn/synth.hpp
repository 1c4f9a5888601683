#pragma once
// Deterministic synthetic skin-like slides: glass above a (possibly
// sinusoidal) skin surface, an epidermis band, dermis below with NDI specks,
// and circular tumour blobs. Ground-truth masks and an analytic Breslow depth
// come from the generating geometry.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "msfcn/raster.hpp"

namespace msfcn::synth {

struct Waviness {
  double amplitude_px = 0.0;
  double period_px = 400.0;
  double phase = 0.0;  // radians
};

// A disk whose centre sits depth_px below the outer surface, measured along
// the surface normal at x = center_x.
struct TumourBlob {
  double center_x = 0.0;
  double depth_px = 0.0;
  double radius_px = 0.0;
};

struct SynthSpec {
  int width = 512;
  int height = 512;
  double surface_y = 160.0;  // mean row of the epidermis outer surface
  int epidermis_thickness_px = 24;
  Waviness surface_waviness;
  std::vector<TumourBlob> tumour_blobs;
  int ndi_specks = 6;
  double ndi_radius_px = 10.0;
  double texture_noise = 0.06;  // Gaussian stddev as a fraction of 255
  double microns_per_pixel = kDefaultMicronsPerPixel;
  std::uint64_t seed = 0;

  // Throws SpecOutOfBounds when the geometry does not fit the canvas.
  void validate() const;

  // Outer surface row at column x, and its slope dy/dx.
  double surface_at(double x) const;
  double surface_slope(double x) const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct SynthSlide {
  RgbRaster raster;
  LabelMask mask;
  double analytic_breslow_um = 0.0;
};

SynthSlide generate_slide(const SynthSpec& spec);

// Deepest perpendicular distance (px) below the outer surface over all blob points.
double analytic_breslow_px(const SynthSpec& spec);

// Blob whose top touches the dermo-epidermal junction.
TumourBlob blob_below_junction(const SynthSpec& spec, double center_x, double radius_px);

// Per-slide variation of `base`: surface height and waviness, one or two
// blobs, NDI placement. Fully determined by `seed`.
SynthSpec randomize_spec(const SynthSpec& base, std::uint64_t seed);

struct DatasetOptions {
  SplitRatios ratios{};
  bool vary_geometry = true;  // false: every slide uses base_spec with its own seed
};

// Writes slides/<id>.png, slides/<id>.label.png, slides/<id>.meta.json and
// dataset.json under out_dir; one synthetic patient per slide.
std::vector<SlideRecord> generate_dataset(int n_slides, const SynthSpec& base_spec, std::uint64_t seed,
                                          const std::filesystem::path& out_dir,
                                          const DatasetOptions& options = {});

// dataset.json helpers; record paths are relative to the dataset directory.
void save_dataset(const std::filesystem::path& path, const std::vector<SlideRecord>& slides,
                  const nlohmann::json& extra = {});
std::vector<SlideRecord> load_dataset(const std::filesystem::path& path);

}  // namespace msfcn::synth
