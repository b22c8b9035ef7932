#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace robseg {

// Pixel data in planar channel-major order (channel, row, column), values in
// 0..255. Generators and augmentation keep values integral so 8-bit file
// round trips are lossless.
struct Image {
    int channels = 0;
    int h = 0;
    int w = 0;
    std::vector<double> data;

    double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
};

struct Mask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> data;  // 0/1

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

struct SampleRecord {
    std::string id;
    Image image;
    Mask mask;
    bool train = true;
};

enum class SynthKind { lung, lesion };

struct SyntheticConfig {
    SynthKind kind = SynthKind::lung;
    int count = 250;
    int side = 64;
    double noise_level = 8.0;
    uint64_t seed = 0;
    double train_fraction = 0.8;
};

SynthKind parse_synth_kind(const std::string& s);

// Deterministic per-sample generation; sample i depends only on (seed, i), so
// the result is identical for any thread count.
std::vector<SampleRecord> synth_generate(const SyntheticConfig& cfg, int threads = 1);

// Flip/flip/rotate pipeline, each gated by its own coin; rotation angle is
// uniform in [-10, 10] degrees. Image resampled bilinearly, mask nearest and
// re-binarized.
SampleRecord augment(const SampleRecord& s, uint64_t seed);

// Rotation about the image center; values outside the frame clamp to the edge
// for images and count as background for masks.
Image rotate_image(const Image& img, double deg);
Mask rotate_mask(const Mask& m, double deg);

// 4-connected component count, used by generator sanity checks and tests.
int component_count(const Mask& m);

// Binary 8-bit PGM (P5) / PPM (P6), maxval 255.
Image read_pnm(const std::string& path);
void write_pnm(const Image& img, const std::string& path);

void save_dataset(const std::vector<SampleRecord>& records, const std::string& dir);
std::vector<SampleRecord> load_dataset(const std::string& dir);

}  // namespace robseg
