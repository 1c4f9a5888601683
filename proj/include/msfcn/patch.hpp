#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msfcn/nn/tensor.hpp"
#include "msfcn/raster.hpp"

namespace msfcn::patch {

enum class Augmentation { none, flip_lr, flip_tb, rot90, rot270 };

std::string_view augmentation_name(Augmentation a) noexcept;
Augmentation augmentation_from_name(std::string_view name);

inline constexpr int kDefaultPatchSize = 512;

struct PatchRecord {
  std::string slide_id;
  int grid_x = 0;
  int grid_y = 0;
  int origin_x = 0;
  int origin_y = 0;
  int size = kDefaultPatchSize;
  // Extent covered by slide pixels; the rest of the tile is zero padding.
  int valid_width = 0;
  int valid_height = 0;
  int slide_width = 0;
  int slide_height = 0;
  ClassHistogram histogram{};
  Augmentation augmentation = Augmentation::none;
  Split split = Split::train;
  std::string source;  // key of the original tile for augmented records
  std::filesystem::path feature_path;
  std::filesystem::path label_path;

  bool padded() const noexcept { return valid_width < size || valid_height < size; }
  // "<slide>/<gx>_<gy>[_<aug>]"
  std::string key() const;
};

void to_json(nlohmann::json& j, const PatchRecord& r);
void from_json(const nlohmann::json& j, PatchRecord& r);

using SplitTotals = std::map<Split, ClassHistogram>;

struct PatchManifest {
  int patch_size = kDefaultPatchSize;
  bool balanced = false;
  std::filesystem::path mean_image_ref;
  std::vector<PatchRecord> records;

  SplitTotals class_totals() const;
  std::vector<const PatchRecord*> in_split(Split s) const;
};

// Manifest file: JSON lines. Line 1 is the header
// {"type":"header","patch_size","balanced","class_totals","mean_image"},
// then one {"type":"patch",...} per record. Record paths are written relative
// to the manifest directory and resolved against it on load.
void save_manifest(const std::filesystem::path& path, const PatchManifest& manifest);
PatchManifest load_manifest(const std::filesystem::path& path);

// Grid tiles covering a width x height slide, row-major; histograms left empty.
std::vector<PatchRecord> tile_grid(const std::string& slide_id, int width, int height, int patch_size);

// Tile records with label histograms for an in-memory mask.
std::vector<PatchRecord> extract_patches(const std::string& slide_id, Split split, const LabelMask& mask,
                                         int patch_size);

// Reads the slide's label mask from disk.
std::vector<PatchRecord> extract_patches(const SlideRecord& slide, int patch_size);

// Zero-padded crops (labels pad with background).
RgbRaster crop_raster(const RgbRaster& raster, const PatchRecord& tile);
LabelMask crop_mask(const LabelMask& mask, const PatchRecord& tile);

// Extracts every tile of every slide into out_root/patches/<split>/<slide>/
// and returns the manifest (paths relative to out_root).
PatchManifest patchify(const std::vector<SlideRecord>& slides, int patch_size,
                       const std::filesystem::path& out_root);

// Reassembles tiles of one slide; padded regions are dropped.
LabelMask stitch(const std::vector<std::pair<PatchRecord, LabelMask>>& predictions);

struct MeanImage {
  int size = 0;
  std::vector<double> values;  // planar: channel * size * size + y * size + x

  double at(int c, int y, int x) const { return values[(static_cast<std::size_t>(c) * size + y) * size + x]; }
};

MeanImage compute_mean_image(const std::vector<RgbRaster>& patches);
// Mean over the manifest's training patches, loaded from disk.
MeanImage compute_mean_image(const PatchManifest& manifest);

// Float32 little-endian planar file plus a <path>.json sidecar {width, height, channels}.
void save_mean_image(const std::filesystem::path& path, const MeanImage& mean);
MeanImage load_mean_image(const std::filesystem::path& path);

// (1, 3, h, w) tensor of input - mean.
template <typename T = float>
nn::BasicTensor<T> normalize(const RgbRaster& patch, const MeanImage& mean);

// Writes input - mean into image slot n of an existing (N, 3, h, w) tensor.
void normalize_into(const RgbRaster& patch, const MeanImage& mean, nn::Tensor& batch, int n);

}  // namespace msfcn::patch
