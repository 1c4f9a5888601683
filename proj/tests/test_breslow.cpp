#include <doctest.h>

#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <set>

#include "msfcn/breslow.hpp"
#include "msfcn/error.hpp"
#include "msfcn/synth.hpp"

using namespace msfcn;
using namespace msfcn::morph;

namespace {

constexpr auto kBg = static_cast<std::uint8_t>(TissueClass::background);
constexpr auto kTu = static_cast<std::uint8_t>(TissueClass::tumour);
constexpr auto kEp = static_cast<std::uint8_t>(TissueClass::epidermis);
constexpr auto kDe = static_cast<std::uint8_t>(TissueClass::dermis);

// Background above `surface`, 20 px of epidermis, dermis below, one tumour disc.
LabelMask flat_slide(int w, int h, int surface, double cx, double cy, double r) {
  LabelMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = y < surface ? kBg : y < surface + 20 ? kEp : kDe;
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r && y >= surface + 20) v = kTu;
      m.at(x, y) = v;
    }
  }
  return m;
}

LabelMask transpose(const LabelMask& m) {
  LabelMask t(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) t.at(y, x) = m.at(x, y);
  return t;
}

std::vector<std::size_t> component_sizes(const LabelMask& m) {
  std::vector<bool> seen(m.labels.size(), false);
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < m.labels.size(); ++start) {
    if (m.labels[start] != kTu || seen[start]) continue;
    std::deque<std::size_t> queue{start};
    seen[start] = true;
    std::size_t n = 0;
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      ++n;
      const int x = static_cast<int>(i % m.width), y = static_cast<int>(i / m.width);
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nb) {
        if (!m.in_bounds(q[0], q[1])) continue;
        const std::size_t j = static_cast<std::size_t>(q[1]) * m.width + q[0];
        if (m.labels[j] == kTu && !seen[j]) {
          seen[j] = true;
          queue.push_back(j);
        }
      }
    }
    sizes.push_back(n);
  }
  return sizes;
}

}  // namespace

TEST_CASE("flat surface tangent and normal") {
  const auto m = flat_slide(256, 256, 60, 128, 150, 20);
  const auto s = extract_surface(m);
  REQUIRE(s.boundary_points.size() == 256);
  for (std::size_t i = 0; i < s.boundary_points.size(); ++i) {
    CHECK(s.boundary_points[i].y == 60);
    CHECK(std::abs(s.tangents[i][1]) < 1e-12);
    CHECK(s.normals[i][1] == doctest::Approx(1.0));
  }
}

TEST_CASE("tangent at a sinusoid crest is horizontal") {
  synth::SynthSpec spec;
  spec.surface_waviness = {12.0, 400.0, 0.3};
  spec.tumour_blobs = {synth::blob_below_junction(spec, 256.0, 30.0)};
  spec.ndi_specks = 0;
  const auto slide = synth::generate_slide(spec);
  const auto s = extract_surface(slide.mask);
  // sin(2 pi x / P + phase) peaks where its argument is pi / 2.
  const double crest = (std::numbers::pi / 2 - 0.3) * 400.0 / (2 * std::numbers::pi);
  const int cx = static_cast<int>(std::lround(crest));
  bool found = false;
  for (std::size_t i = 0; i < s.boundary_points.size(); ++i) {
    if (s.boundary_points[i].x != cx) continue;
    found = true;
    const double angle = std::atan2(s.tangents[i][1], s.tangents[i][0]) * 180.0 / std::numbers::pi;
    const double off = std::min(std::abs(angle), 180.0 - std::abs(angle));
    CHECK(off < 2.0);
  }
  CHECK(found);
}

TEST_CASE("flat axis-aligned example") {
  // Surface at y = 100, deepest tumour row 500, 0.25 um per pixel.
  const auto m = flat_slide(512, 600, 100, 256, 400, 100);
  const auto r = breslow(m, 0.25);
  CHECK(r.deep_point.y == 500);
  CHECK(r.surface_point.y == 100);
  CHECK(std::abs(r.thickness_px - 400.0) <= 1.0);
  CHECK(std::abs(r.thickness_um - 100.0) <= 0.25);
  CHECK_FALSE(r.clamped);
  CHECK(r.main_mass_size == component_sizes(m).front());
}

TEST_CASE("estimate is invariant to translation and transposition") {
  const auto m = flat_slide(300, 300, 50, 150, 150, 40);
  const auto base = breslow(m, 0.5);
  LabelMask shifted(340, 330);
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 300; ++x) shifted.at(x + 40, y + 30) = m.at(x, y);
  // The strip above the shifted slide is background, the band to its left dermis.
  for (int y = 0; y < 330; ++y)
    for (int x = 0; x < 40; ++x) shifted.at(x, y) = y < 80 ? kBg : y < 100 ? kEp : kDe;
  for (int y = 0; y < 30; ++y)
    for (int x = 40; x < 340; ++x) shifted.at(x, y) = kBg;
  CHECK(breslow(shifted, 0.5).thickness_px == doctest::Approx(base.thickness_px));
  CHECK(breslow(transpose(m), 0.5).thickness_px == doctest::Approx(base.thickness_px));
}

TEST_CASE("seeded synthetic slides match the analytic depth") {
  double worst = 0.0;
  for (std::uint64_t seed = 500; seed < 512; ++seed) {
    const auto spec = synth::randomize_spec(synth::SynthSpec{}, seed);
    const auto slide = synth::generate_slide(spec);
    const auto r = breslow(slide.mask, spec.microns_per_pixel);
    worst = std::max(worst, std::abs(r.thickness_um - slide.analytic_breslow_um) / spec.microns_per_pixel);
  }
  CHECK(worst <= 1.5);
}

TEST_CASE("main mass matches a flood-fill oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    LabelMask m(64, 48);
    for (auto& v : m.labels) v = rng() % 3 == 0 ? kTu : kDe;
    auto sizes = component_sizes(m);
    const auto mass = main_tumour_mass(m);
    CHECK(mass.size() == *std::max_element(sizes.begin(), sizes.end()));
    std::set<std::pair<int, int>> unique;
    for (const auto& p : mass) {
      CHECK(m.cls(p.x, p.y) == TissueClass::tumour);
      unique.insert({p.x, p.y});
    }
    CHECK(unique.size() == mass.size());
  }
  // Diagonal neighbours are separate components.
  LabelMask diag(4, 4, TissueClass::dermis);
  diag.at(0, 0) = diag.at(1, 1) = diag.at(2, 2) = kTu;
  CHECK(main_tumour_mass(diag).size() == 1);
}

TEST_CASE("precondition errors and clamping") {
  auto code_of = [](const LabelMask& m) {
    try {
      breslow(m, 0.25);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::io;
  };
  CHECK(code_of(LabelMask(32, 32, TissueClass::dermis)) == Errc::no_epidermis_surface);
  CHECK(code_of(flat_slide(64, 64, 10, 0, 0, 0.1)) == Errc::no_tumour);
  // Epidermis buried in dermis has no surface.
  LabelMask buried(32, 32, TissueClass::dermis);
  buried.at(10, 10) = kEp;
  buried.at(20, 20) = kTu;
  CHECK(code_of(buried) == Errc::no_epidermis_surface);

  // Tumour sitting entirely above the surface clamps to zero.
  auto above = flat_slide(128, 128, 60, 0, 0, 0.1);
  for (int y = 10; y < 20; ++y)
    for (int x = 50; x < 60; ++x) above.at(x, y) = kTu;
  const auto r = breslow(above, 0.25);
  CHECK(r.clamped);
  CHECK(r.thickness_px == 0.0);
  CHECK_THROWS_AS(breslow(above, 0.0), Error);
}

TEST_CASE("error overlay colours") {
  std::mt19937_64 rng(32);
  LabelMask truth(30, 20), pred(30, 20);
  for (auto& v : truth.labels) v = static_cast<std::uint8_t>(rng() % kNumClasses);
  for (auto& v : pred.labels) v = static_cast<std::uint8_t>(rng() % kNumClasses);
  const auto o = error_overlay(truth, pred, TissueClass::epidermis);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 30; ++x) {
      const bool t = truth.at(x, y) == kEp, p = pred.at(x, y) == kEp;
      const Rgb want = t && p ? Rgb{255, 255, 255} : p ? Rgb{0, 128, 128} : t ? Rgb{255, 0, 0} : Rgb{0, 0, 0};
      const auto* px = o.px(x, y);
      CHECK((Rgb{px[0], px[1], px[2]} == want));
    }
  }
  CHECK_THROWS_AS(error_overlay(truth, LabelMask(20, 30), TissueClass::tumour), Error);
}
