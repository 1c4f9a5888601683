#pragma once
// Hybrid class balancing of a patch manifest: rule-based removal of
// background-dominated patches and fourfold augmentation of epidermis-bearing
// ones. Rules only touch training-split records.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfcn/patch.hpp"

namespace msfcn::balance {

inline constexpr double kDefaultBackgroundThreshold = 0.98;

// Classes present in the histogram, most pixels first; ties go to the lower id.
std::vector<TissueClass> class_ranking(const ClassHistogram& h);

enum class UndersampleRule { none, background_fraction, background_ndi_only };

// First undersampling rule the histogram violates, if any.
UndersampleRule undersample_rule(const ClassHistogram& h, double bg_threshold = kDefaultBackgroundThreshold);

enum class OversampleRule {
  none,
  all_epidermis,
  background_epidermis,
  background_ndi_epidermis,
  ndi_epidermis,
  ndi_background_epidermis,
};

std::string_view oversample_rule_name(OversampleRule r) noexcept;
OversampleRule oversample_rule(const ClassHistogram& h);

struct UndersampleResult {
  patch::PatchManifest manifest;
  std::vector<patch::PatchRecord> removed;
};

UndersampleResult undersample(const patch::PatchManifest& manifest,
                              double bg_threshold = kDefaultBackgroundThreshold);

std::vector<patch::PatchRecord> select_oversample_candidates(const patch::PatchManifest& manifest);

// Square-patch transforms. rot90 is a quarter turn counter-clockwise as displayed.
RgbRaster transform(const RgbRaster& image, patch::Augmentation aug);
LabelMask transform(const LabelMask& mask, patch::Augmentation aug);

inline constexpr std::array<patch::Augmentation, 4> kAugmentations{
    patch::Augmentation::flip_lr, patch::Augmentation::flip_tb, patch::Augmentation::rot90,
    patch::Augmentation::rot270};

struct AugmentedPair {
  patch::Augmentation augmentation;
  RgbRaster feature;
  LabelMask label;
};

// Throws NonSquarePatch.
std::array<AugmentedPair, 4> augment(const RgbRaster& feature, const LabelMask& label);

struct BalanceReport {
  ClassHistogram before{};  // training split pixel counts
  ClassHistogram after{};
  std::size_t removed_patches = 0;
  std::size_t added_patches = 0;
  std::size_t candidates = 0;
  std::optional<double> ratio_tumour_epidermis_before;  // empty when no epidermis
  std::optional<double> ratio_tumour_epidermis_after;
};

void to_json(nlohmann::json& j, const BalanceReport& r);
std::optional<double> tumour_epidermis_ratio(const ClassHistogram& h);

// Before/after per-class table for terminal output.
std::string format_report(const BalanceReport& r);

struct BalanceOptions {
  double bg_threshold = kDefaultBackgroundThreshold;
};

struct BalanceResult {
  patch::PatchManifest manifest;
  BalanceReport report;
};

// Undersample, then append four augmentations per candidate. With a non-empty
// out_root the augmented pairs are written next to the originals' layout
// under out_root/patches/train/<slide>/; otherwise records carry no paths.
// Throws AlreadyBalanced when the manifest is flagged or holds augmented records.
BalanceResult balance_dataset(const patch::PatchManifest& manifest, const BalanceOptions& options = {},
                              const std::filesystem::path& out_root = {});

}  // namespace msfcn::balance
