#include "msfcn/balance.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "msfcn/error.hpp"

namespace msfcn::balance {
namespace fs = std::filesystem;
using patch::Augmentation;
using patch::PatchManifest;
using patch::PatchRecord;

namespace {

constexpr int kBg = class_id(TissueClass::background);
constexpr int kEpi = class_id(TissueClass::epidermis);
constexpr int kNdi = class_id(TissueClass::ndi);
constexpr int kTum = class_id(TissueClass::tumour);

std::uint64_t total(const ClassHistogram& h) { return std::accumulate(h.begin(), h.end(), std::uint64_t{0}); }

bool ranking_is(const std::vector<TissueClass>& rank, std::initializer_list<TissueClass> prefix) {
  if (rank.size() < prefix.size()) return false;
  return std::equal(prefix.begin(), prefix.end(), rank.begin());
}

void add_into(ClassHistogram& acc, const ClassHistogram& h) {
  for (int c = 0; c < kNumClasses; ++c) acc[c] += h[c];
}

ClassHistogram train_totals(const PatchManifest& m) {
  ClassHistogram acc{};
  for (const auto& r : m.records) {
    if (r.split == Split::train) add_into(acc, r.histogram);
  }
  return acc;
}

// (x, y) in the output reads the returned source coordinate.
std::pair<int, int> source_coord(Augmentation aug, int n, int x, int y) {
  switch (aug) {
    case Augmentation::none:
      return {x, y};
    case Augmentation::flip_lr:
      return {n - 1 - x, y};
    case Augmentation::flip_tb:
      return {x, n - 1 - y};
    case Augmentation::rot90:
      return {n - 1 - y, x};
    case Augmentation::rot270:
      return {y, n - 1 - x};
  }
  return {x, y};
}

std::string augmented_stem(const PatchRecord& r, Augmentation aug) {
  return std::to_string(r.grid_x) + "_" + std::to_string(r.grid_y) + "_" + std::string(patch::augmentation_name(aug));
}

}  // namespace

std::vector<TissueClass> class_ranking(const ClassHistogram& h) {
  std::vector<TissueClass> rank;
  for (TissueClass c : kAllClasses) {
    if (h[class_id(c)] > 0) rank.push_back(c);
  }
  std::stable_sort(rank.begin(), rank.end(),
                   [&](TissueClass a, TissueClass b) { return h[class_id(a)] > h[class_id(b)]; });
  return rank;
}

UndersampleRule undersample_rule(const ClassHistogram& h, double bg_threshold) {
  const auto rank = class_ranking(h);
  if (rank.empty() || rank.front() != TissueClass::background) return UndersampleRule::none;
  const double fraction = static_cast<double>(h[kBg]) / static_cast<double>(total(h));
  if (fraction > bg_threshold) return UndersampleRule::background_fraction;
  if (rank.size() == 2 && rank[1] == TissueClass::ndi) return UndersampleRule::background_ndi_only;
  return UndersampleRule::none;
}

std::string_view oversample_rule_name(OversampleRule r) noexcept {
  switch (r) {
    case OversampleRule::none:
      return "none";
    case OversampleRule::all_epidermis:
      return "all_epidermis";
    case OversampleRule::background_epidermis:
      return "background_epidermis";
    case OversampleRule::background_ndi_epidermis:
      return "background_ndi_epidermis";
    case OversampleRule::ndi_epidermis:
      return "ndi_epidermis";
    case OversampleRule::ndi_background_epidermis:
      return "ndi_background_epidermis";
  }
  return "none";
}

OversampleRule oversample_rule(const ClassHistogram& h) {
  using enum TissueClass;
  const auto rank = class_ranking(h);
  if (rank.size() == 1 && rank[0] == epidermis) return OversampleRule::all_epidermis;
  if (ranking_is(rank, {background, epidermis})) return OversampleRule::background_epidermis;
  if (ranking_is(rank, {background, ndi, epidermis})) return OversampleRule::background_ndi_epidermis;
  if (ranking_is(rank, {ndi, epidermis})) return OversampleRule::ndi_epidermis;
  if (ranking_is(rank, {ndi, background, epidermis})) return OversampleRule::ndi_background_epidermis;
  return OversampleRule::none;
}

UndersampleResult undersample(const PatchManifest& manifest, double bg_threshold) {
  UndersampleResult out;
  out.manifest = manifest;
  out.manifest.records.clear();
  for (const auto& r : manifest.records) {
    if (r.split == Split::train && undersample_rule(r.histogram, bg_threshold) != UndersampleRule::none) {
      out.removed.push_back(r);
    } else {
      out.manifest.records.push_back(r);
    }
  }
  return out;
}

std::vector<PatchRecord> select_oversample_candidates(const PatchManifest& manifest) {
  std::vector<PatchRecord> out;
  for (const auto& r : manifest.records) {
    if (r.split == Split::train && r.augmentation == Augmentation::none &&
        oversample_rule(r.histogram) != OversampleRule::none) {
      out.push_back(r);
    }
  }
  return out;
}

RgbRaster transform(const RgbRaster& image, Augmentation aug) {
  if (image.width != image.height) throw Error(Errc::non_square_patch, "augmentation needs a square patch");
  const int n = image.width;
  RgbRaster out(n, n);
  out.microns_per_pixel = image.microns_per_pixel;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sx, sy] = source_coord(aug, n, x, y);
      std::copy_n(image.px(sx, sy), 3, out.px(x, y));
    }
  }
  return out;
}

LabelMask transform(const LabelMask& mask, Augmentation aug) {
  if (mask.width != mask.height) throw Error(Errc::non_square_patch, "augmentation needs a square patch");
  const int n = mask.width;
  LabelMask out(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sx, sy] = source_coord(aug, n, x, y);
      out.at(x, y) = mask.at(sx, sy);
    }
  }
  return out;
}

std::array<AugmentedPair, 4> augment(const RgbRaster& feature, const LabelMask& label) {
  if (feature.width != label.width || feature.height != label.height) {
    throw Error(Errc::shape_mismatch, "feature and label patch sizes differ");
  }
  std::array<AugmentedPair, 4> out;
  for (std::size_t i = 0; i < kAugmentations.size(); ++i) {
    out[i] = {kAugmentations[i], transform(feature, kAugmentations[i]), transform(label, kAugmentations[i])};
  }
  return out;
}

std::optional<double> tumour_epidermis_ratio(const ClassHistogram& h) {
  if (h[kEpi] == 0) return std::nullopt;
  return static_cast<double>(h[kTum]) / static_cast<double>(h[kEpi]);
}

void to_json(nlohmann::json& j, const BalanceReport& r) {
  auto named = [](const ClassHistogram& h) {
    nlohmann::json o = nlohmann::json::object();
    for (TissueClass c : kAllClasses) o[std::string(class_name(c))] = h[class_id(c)];
    return o;
  };
  auto ratio = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = {{"before", named(r.before)},
       {"after", named(r.after)},
       {"removed_patches", r.removed_patches},
       {"added_patches", r.added_patches},
       {"candidates", r.candidates},
       {"ratio_tumour_epidermis_before", ratio(r.ratio_tumour_epidermis_before)},
       {"ratio_tumour_epidermis_after", ratio(r.ratio_tumour_epidermis_after)}};
}

std::string format_report(const BalanceReport& r) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %14s %14s\n", "class", "before", "after");
  os << line;
  for (TissueClass c : kAllClasses) {
    std::snprintf(line, sizeof line, "%-12s %14llu %14llu\n", std::string(class_name(c)).c_str(),
                  static_cast<unsigned long long>(r.before[class_id(c)]),
                  static_cast<unsigned long long>(r.after[class_id(c)]));
    os << line;
  }
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f:1", *v);
    return std::string(buf);
  };
  os << "removed " << r.removed_patches << " patches, added " << r.added_patches << " ("
     << r.candidates << " candidates)\n";
  os << "tumour:epidermis " << fmt(r.ratio_tumour_epidermis_before) << " -> " << fmt(r.ratio_tumour_epidermis_after)
     << "\n";
  return os.str();
}

BalanceResult balance_dataset(const PatchManifest& manifest, const BalanceOptions& options, const fs::path& out_root) {
  if (manifest.balanced) throw Error(Errc::already_balanced, "manifest is flagged as balanced");
  for (const auto& r : manifest.records) {
    if (r.augmentation != Augmentation::none) {
      throw Error(Errc::already_balanced, "manifest already holds augmented record " + r.key());
    }
  }
  if (!(options.bg_threshold > 0.0 && options.bg_threshold <= 1.0)) {
    throw Error(Errc::invalid_config, "bg_threshold must lie in (0, 1]");
  }

  BalanceResult result;
  auto& report = result.report;
  report.before = train_totals(manifest);

  UndersampleResult under = undersample(manifest, options.bg_threshold);
  report.removed_patches = under.removed.size();
  const auto candidates = select_oversample_candidates(under.manifest);
  report.candidates = candidates.size();

  result.manifest = std::move(under.manifest);
  for (const auto& src : candidates) {
    std::optional<std::array<AugmentedPair, 4>> pairs;
    if (!out_root.empty()) pairs = augment(load_raster(src.feature_path), load_label_mask(src.label_path));
    for (std::size_t i = 0; i < kAugmentations.size(); ++i) {
      PatchRecord rec = src;
      rec.augmentation = kAugmentations[i];
      rec.source = src.key();
      rec.feature_path.clear();
      rec.label_path.clear();
      if (pairs) {
        const fs::path dir = out_root / "patches" / split_name(src.split) / src.slide_id;
        const std::string stem = augmented_stem(src, rec.augmentation);
        rec.feature_path = dir / (stem + ".png");
        rec.label_path = dir / (stem + ".label.png");
        const auto& pair = (*pairs)[i];
        if (class_histogram(pair.label) != src.histogram) {
          throw Error(Errc::decode, "label patch " + src.key() + " does not match its manifest histogram");
        }
        save_raster(rec.feature_path, pair.feature);
        save_label_mask(rec.label_path, pair.label);
      }
      result.manifest.records.push_back(std::move(rec));
      ++report.added_patches;
    }
  }
  result.manifest.balanced = true;
  report.after = train_totals(result.manifest);
  report.ratio_tumour_epidermis_before = tumour_epidermis_ratio(report.before);
  report.ratio_tumour_epidermis_after = tumour_epidermis_ratio(report.after);
  return result;
}

}  // namespace msfcn::balance
