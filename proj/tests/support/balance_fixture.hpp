#pragma once
// Histogram-only manifest that violates both undersampling rules and holds
// every oversampling pattern. Patches are 32 px (1024 pixels).

#include <string>

#include "msfcn/patch.hpp"

namespace msfcn::testing {

// Counts in class-id order: background, tumour, epidermis, dermis, ndi.
inline patch::PatchRecord histogram_record(const std::string& slide, int gx, ClassHistogram h,
                                           Split split = Split::train) {
  patch::PatchRecord r;
  r.slide_id = slide;
  r.grid_x = gx;
  r.origin_x = gx * 32;
  r.size = 32;
  r.valid_width = r.valid_height = 32;
  r.slide_width = 32 * 64;
  r.slide_height = 32;
  r.histogram = h;
  r.split = split;
  return r;
}

inline patch::PatchManifest balancing_fixture() {
  patch::PatchManifest m;
  m.patch_size = 32;
  int gx = 0;
  auto add = [&](ClassHistogram h, Split split = Split::train) {
    m.records.push_back(histogram_record("fixture", gx++, h, split));
  };
  // Undersampling violations.
  add({1014, 0, 0, 10, 0});   // 99% background
  add({1024, 0, 0, 0, 0});    // all background
  add({614, 0, 0, 0, 410});   // background modal, NDI the only other class
  add({1010, 0, 0, 0, 14});   // both rules
  // Background-modal patches that must survive.
  add({993, 31, 0, 0, 0});    // 97% background, tumour present
  add({600, 0, 0, 424, 0});   // background + dermis below threshold
  // Oversampling patterns (a) to (e).
  add({0, 0, 1024, 0, 0});    // all epidermis
  add({700, 0, 300, 24, 0});  // background, epidermis
  add({600, 0, 100, 0, 324}); // background, NDI, epidermis
  add({0, 0, 400, 0, 624});   // NDI, epidermis
  add({300, 0, 200, 0, 524}); // NDI, background, epidermis
  // Not candidates.
  add({0, 700, 324, 0, 0});   // tumour modal, epidermis second
  add({0, 0, 300, 724, 0});   // dermis modal
  // Tumour mass that sets a high tumour:epidermis ratio.
  for (int i = 0; i < 70; ++i) add({0, 1000, 0, 24, 0});
  // Validation records are never touched.
  add({1024, 0, 0, 0, 0}, Split::val);
  add({0, 0, 1024, 0, 0}, Split::val);
  return m;
}

inline constexpr std::size_t kFixtureCandidates = 5;
inline constexpr std::size_t kFixtureViolations = 4;

}  // namespace msfcn::testing
