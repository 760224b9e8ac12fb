#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leafseg/image.hpp"

namespace leafseg::io {

/// Decode an 8-bit PNG or JPEG into [0,1] reals. Grayscale images are
/// expanded to 3 equal channels. Throws std::runtime_error with the path on
/// unreadable or corrupt files.
ImageF load_image(const std::string& path);

/// Encode as 8-bit PNG or JPEG by extension; values quantized round-half-up.
void save_image(const ImageF& image, const std::string& path);

/// Binary mask helpers. Masks save as 1-bit grayscale PNG; any PNG whose
/// pixels threshold at >= 50% gray loads as foreground.
std::vector<uint8_t> load_mask(const std::string& path, int& height, int& width);
void save_mask(const std::vector<uint8_t>& mask, int height, int width,
               const std::string& path);

/// 16-bit single-channel PNG export of a label/region map.
void save_label_map16(const std::vector<int32_t>& labels, int height, int width,
                      const std::string& path);

/// Indexed-palette PNG of a label map (64-color wheel, labels taken mod 64).
void save_label_map_indexed(const std::vector<int32_t>& labels, int height, int width,
                            const std::string& path);

// ---------------------------------------------------------------------------

enum class Split { Train, TestNatural, TestYellow, TestPurple };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
    std::string image;                 // relative to the manifest root
    std::optional<std::string> mask;   // relative, optional
    Split split = Split::Train;
};

struct DatasetManifest {
    std::string root;  // directory of the manifest file
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> with_split(Split s) const;
    std::string image_path(const ManifestEntry& e) const;
    std::optional<std::string> mask_path(const ManifestEntry& e) const;
};

/// Line-oriented JSON manifest: one {"image":..., "mask":..., "split":...}
/// object per line. All referenced paths must exist.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// ---------------------------------------------------------------------------

struct Patch {
    int source_id = 0;
    int x = 0, y = 0;
    ImageF block;
    bool padded = false;  // source was smaller than the patch size
};

struct PatchSet {
    std::vector<Patch> patches;
    bool any_padded = false;
};

/// Regular grid with stride size*(1-overlap); the final row/column snaps to
/// the image edge. Undersized images yield one reflect-padded center patch
/// flagged `padded`.
PatchSet extract_patches(const ImageF& image, int source_id = 0, int size = 256,
                         double overlap = 0.5);

/// Random flips, sharpness, Gaussian blur, affine (rotation/scale) and
/// saturation/brightness jitter; hue is never touched. Deterministic under
/// seed and never leaves [0,1].
ImageF augment(const ImageF& patch, uint64_t seed);

}  // namespace leafseg::io
