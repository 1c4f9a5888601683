#include "msfcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "msfcn/error.hpp"
#include "msfcn/random.hpp"

namespace msfcn::synth {
namespace fs = std::filesystem;

namespace {

constexpr std::array<Rgb, kNumClasses> kBaseColors{{
    {236, 233, 240},  // background: glass
    {104, 46, 128},   // tumour
    {178, 84, 164},   // epidermis
    {240, 168, 198},  // dermis
    {248, 238, 206},  // ndi
}};

struct Disk {
  double cx, cy, r;
  bool contains(double x, double y) const { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; }
};

Disk blob_disk(const SynthSpec& spec, const TumourBlob& b) {
  const double slope = spec.surface_slope(b.center_x);
  const double norm = std::hypot(slope, 1.0);
  // Normal pointing into tissue (+y is deeper).
  const double nx = -slope / norm;
  const double ny = 1.0 / norm;
  return {b.center_x + b.depth_px * nx, spec.surface_at(b.center_x) + b.depth_px * ny, b.radius_px};
}

// Distance from (qx, qy) to the surface curve y = surface_at(x).
double distance_to_surface(const SynthSpec& spec, double qx, double qy) {
  const double vertical = std::abs(qy - spec.surface_at(qx));
  const auto d2 = [&](double x) {
    const double dy = qy - spec.surface_at(x);
    return (qx - x) * (qx - x) + dy * dy;
  };
  const double step = 0.05;
  double best_x = qx;
  double best = d2(qx);
  for (double x = qx - vertical; x <= qx + vertical; x += step) {
    const double v = d2(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  // Golden-section refinement inside the bracketing sample interval.
  double lo = best_x - step;
  double hi = best_x + step;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 60; ++it) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (d2(a) < d2(b)) hi = b; else lo = a;
  }
  return std::sqrt(std::min(best, d2(0.5 * (lo + hi))));
}

}  // namespace

double SynthSpec::surface_at(double x) const {
  if (surface_waviness.amplitude_px == 0.0) return surface_y;
  return surface_y + surface_waviness.amplitude_px *
                         std::sin(2.0 * std::numbers::pi * x / surface_waviness.period_px + surface_waviness.phase);
}

double SynthSpec::surface_slope(double x) const {
  if (surface_waviness.amplitude_px == 0.0) return 0.0;
  const double k = 2.0 * std::numbers::pi / surface_waviness.period_px;
  return surface_waviness.amplitude_px * k * std::cos(k * x + surface_waviness.phase);
}

void SynthSpec::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(Errc::spec_out_of_bounds, msg); };
  if (width < 32 || height < 32) fail("canvas must be at least 32x32");
  if (!(microns_per_pixel > 0.0)) fail("microns_per_pixel must be positive");
  if (!(texture_noise >= 0.0 && texture_noise <= 1.0)) fail("texture_noise must be in [0,1]");
  if (epidermis_thickness_px < 1) fail("epidermis thickness must be >= 1 px");
  if (surface_waviness.amplitude_px != 0.0 && !(surface_waviness.period_px > 0.0)) fail("waviness period must be positive");
  const double amp = std::abs(surface_waviness.amplitude_px);
  if (surface_y - amp < 1.0) fail("surface leaves no background above it");
  if (surface_y + amp + epidermis_thickness_px >= height) fail("epidermis band does not fit the canvas");
  if (ndi_specks < 0 || ndi_radius_px < 0.0) fail("NDI speck parameters must be non-negative");
  for (const auto& b : tumour_blobs) {
    if (!(b.radius_px > 0.0)) fail("tumour radius must be positive");
    if (b.depth_px < b.radius_px) fail("tumour blob protrudes above the skin surface");
    const Disk d = blob_disk(*this, b);
    if (d.cx - d.r < 0.0 || d.cx + d.r > width - 1 || d.cy - d.r < 0.0 || d.cy + d.r > height - 1) {
      fail("tumour blob does not fit the canvas");
    }
  }
}

double analytic_breslow_px(const SynthSpec& spec) {
  double best = 0.0;
  for (const auto& b : spec.tumour_blobs) {
    if (spec.surface_waviness.amplitude_px == 0.0) {
      best = std::max(best, b.depth_px + b.radius_px);
      continue;
    }
    const Disk d = blob_disk(spec, b);
    constexpr int kSamples = 3600;
    for (int i = 0; i < kSamples; ++i) {
      const double a = 2.0 * std::numbers::pi * i / kSamples;
      const double x = d.cx + d.r * std::cos(a);
      const double y = d.cy + d.r * std::sin(a);
      if (y < spec.surface_at(x)) continue;
      best = std::max(best, distance_to_surface(spec, x, y));
    }
  }
  return best;
}

TumourBlob blob_below_junction(const SynthSpec& spec, double center_x, double radius_px) {
  return {center_x, spec.epidermis_thickness_px + radius_px, radius_px};
}

SynthSlide generate_slide(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 geometry_rng(spec.seed);
  std::mt19937_64 noise_rng(spec.seed ^ 0x9E3779B97F4A7C15ull);

  std::vector<Disk> blobs;
  for (const auto& b : spec.tumour_blobs) blobs.push_back(blob_disk(spec, b));

  std::vector<Disk> specks;
  const double thickness = spec.epidermis_thickness_px;
  for (int i = 0; i < spec.ndi_specks; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double r = spec.ndi_radius_px * uniform(geometry_rng, 0.6, 1.4);
      const double x = uniform(geometry_rng, r, spec.width - 1 - r);
      const double top = spec.surface_at(x) + thickness + r + 4.0;
      const double bottom = spec.height - 1 - r;
      if (top >= bottom) continue;
      const double y = uniform(geometry_rng, top, bottom);
      const bool clear = std::none_of(blobs.begin(), blobs.end(), [&](const Disk& d) {
        return std::hypot(d.cx - x, d.cy - y) < d.r + r + 4.0;
      });
      if (clear) {
        specks.push_back({x, y, r});
        break;
      }
    }
  }

  SynthSlide out;
  out.mask = LabelMask(spec.width, spec.height);
  out.raster = RgbRaster(spec.width, spec.height);
  out.raster.microns_per_pixel = spec.microns_per_pixel;
  const double sigma = spec.texture_noise * 255.0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double top = spec.surface_at(x);
      TissueClass cls = TissueClass::dermis;
      if (y < top) {
        cls = TissueClass::background;
      } else if (std::any_of(blobs.begin(), blobs.end(), [&](const Disk& d) { return d.contains(x, y); })) {
        cls = TissueClass::tumour;
      } else if (y < top + thickness) {
        cls = TissueClass::epidermis;
      } else if (std::any_of(specks.begin(), specks.end(), [&](const Disk& d) { return d.contains(x, y); })) {
        cls = TissueClass::ndi;
      }
      out.mask.at(x, y) = static_cast<std::uint8_t>(cls);
      const Rgb base = kBaseColors[class_id(cls)];
      std::uint8_t* px = out.raster.px(x, y);
      const double channels[3] = {double(base.r), double(base.g), double(base.b)};
      for (int c = 0; c < 3; ++c) {
        const double v = channels[c] + sigma * normal01(noise_rng);
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  out.analytic_breslow_um = analytic_breslow_px(spec) * spec.microns_per_pixel;
  return out;
}

SynthSpec randomize_spec(const SynthSpec& base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SynthSpec s = base;
  s.seed = seed;
  s.surface_y = base.surface_y + uniform(rng, -24.0, 24.0);
  s.epidermis_thickness_px = std::max(8, base.epidermis_thickness_px + static_cast<int>(std::lround(uniform(rng, -4.0, 4.0))));
  if (uniform01(rng) < 0.5) {
    s.surface_waviness = {};
  } else {
    s.surface_waviness = {uniform(rng, 6.0, 16.0), uniform(rng, 300.0, 600.0),
                          uniform(rng, 0.0, 2.0 * std::numbers::pi)};
  }
  s.tumour_blobs.clear();
  const double amp = std::abs(s.surface_waviness.amplitude_px);
  const double margin = 48.0;
  const auto fits = [&s, margin](const TumourBlob& b) {
    const Disk d = blob_disk(s, b);
    return d.cx - d.r >= margin && d.cx + d.r <= s.width - 1 - margin && d.cy + d.r <= s.height - 8.0;
  };
  TumourBlob main{};
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double r1 = std::min(uniform(rng, 36.0, 64.0), (s.width - 2 * margin) / 4.0);
    const double x1 = uniform(rng, r1 + margin, s.width - r1 - margin);
    const double max_depth = s.height - 8.0 - (s.surface_y + amp) - r1;
    const double min_depth = s.epidermis_thickness_px + r1;
    const double d1 = std::max(min_depth, std::min(min_depth + uniform(rng, 0.0, 60.0), max_depth));
    main = {x1, d1, r1};
    if (fits(main)) break;
  }
  s.tumour_blobs.push_back(main);
  if (uniform01(rng) < 0.5) {
    const double r2 = uniform(rng, 12.0, 22.0);
    // Keep the secondary blob shallower than the main one and away from it.
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double x2 = uniform(rng, r2 + margin, s.width - r2 - margin);
      if (std::abs(x2 - main.center_x) < main.radius_px + r2 + 16.0) continue;
      const TumourBlob second{x2, s.epidermis_thickness_px + r2 + uniform(rng, 0.0, 20.0), r2};
      if (second.depth_px + r2 >= main.depth_px + main.radius_px - 10.0 || !fits(second)) continue;
      s.tumour_blobs.push_back(second);
      break;
    }
  }
  s.validate();
  return s;
}

std::vector<SlideRecord> generate_dataset(int n_slides, const SynthSpec& base_spec, std::uint64_t seed,
                                          const fs::path& out_dir, const DatasetOptions& options) {
  if (n_slides < 3) throw Error(Errc::insufficient_patients, "need at least 3 slides");
  std::mt19937_64 rng(seed);
  std::vector<SlideRecord> records;
  for (int i = 0; i < n_slides; ++i) {
    const std::uint64_t slide_seed = rng();
    SynthSpec spec = options.vary_geometry ? randomize_spec(base_spec, slide_seed) : base_spec;
    spec.seed = slide_seed;
    const SynthSlide slide = generate_slide(spec);

    char id[32];
    std::snprintf(id, sizeof(id), "slide_%03d", i);
    SlideRecord rec;
    rec.slide_id = id;
    rec.patient_id = "patient_" + std::string(id + 6);
    rec.feature_path = fs::path("slides") / (rec.slide_id + ".png");
    rec.label_path = fs::path("slides") / (rec.slide_id + ".label.png");
    rec.microns_per_pixel = spec.microns_per_pixel;
    rec.analytic_breslow_um = slide.analytic_breslow_um;

    save_raster(out_dir / rec.feature_path, slide.raster);
    save_label_mask(out_dir / rec.label_path, slide.mask);
    save_sidecar(out_dir / rec.feature_path, {rec.slide_id, rec.patient_id, spec.microns_per_pixel});
    records.push_back(std::move(rec));
  }
  records = assign_splits(std::move(records), options.ratios, seed);
  nlohmann::json extra = {{"generator", {{"n_slides", n_slides}, {"seed", seed}, {"base_spec", base_spec}}}};
  save_dataset(out_dir / "dataset.json", records, extra);
  for (auto& r : records) {
    r.feature_path = out_dir / r.feature_path;
    r.label_path = out_dir / r.label_path;
  }
  return records;
}

void save_dataset(const fs::path& path, const std::vector<SlideRecord>& slides, const nlohmann::json& extra) {
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["slides"] = slides;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::vector<SlideRecord> load_dataset(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode, path.string() + ": " + e.what());
  }
  auto slides = j.at("slides").get<std::vector<SlideRecord>>();
  const fs::path dir = path.parent_path();
  for (auto& s : slides) {
    if (s.feature_path.is_relative()) s.feature_path = dir / s.feature_path;
    if (s.label_path.is_relative()) s.label_path = dir / s.label_path;
  }
  return slides;
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const SynthSpec& s) {
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& b : s.tumour_blobs) {
    blobs.push_back({{"center_x", b.center_x}, {"depth_px", b.depth_px}, {"radius_px", b.radius_px}});
  }
  j = {{"width", s.width},
       {"height", s.height},
       {"surface_y", s.surface_y},
       {"epidermis_thickness_px", s.epidermis_thickness_px},
       {"surface_waviness",
        {{"amplitude_px", s.surface_waviness.amplitude_px},
         {"period_px", s.surface_waviness.period_px},
         {"phase", s.surface_waviness.phase}}},
       {"tumour_blobs", blobs},
       {"ndi_specks", s.ndi_specks},
       {"ndi_radius_px", s.ndi_radius_px},
       {"texture_noise", s.texture_noise},
       {"microns_per_pixel", s.microns_per_pixel},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.surface_y = j.value("surface_y", s.surface_y);
  s.epidermis_thickness_px = j.value("epidermis_thickness_px", s.epidermis_thickness_px);
  if (j.contains("surface_waviness")) {
    const auto& w = j.at("surface_waviness");
    s.surface_waviness.amplitude_px = w.value("amplitude_px", 0.0);
    s.surface_waviness.period_px = w.value("period_px", 400.0);
    s.surface_waviness.phase = w.value("phase", 0.0);
  }
  if (j.contains("tumour_blobs")) {
    s.tumour_blobs.clear();
    for (const auto& b : j.at("tumour_blobs")) {
      s.tumour_blobs.push_back({b.at("center_x").get<double>(), b.at("depth_px").get<double>(),
                                b.at("radius_px").get<double>()});
    }
  }
  s.ndi_specks = j.value("ndi_specks", s.ndi_specks);
  s.ndi_radius_px = j.value("ndi_radius_px", s.ndi_radius_px);
  s.texture_noise = j.value("texture_noise", s.texture_noise);
  s.microns_per_pixel = j.value("microns_per_pixel", s.microns_per_pixel);
  s.seed = j.value("seed", s.seed);
}

}  // namespace msfcn::synth
