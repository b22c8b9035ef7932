#pragma once

#include <string>
#include <vector>

#include "robseg/data.hpp"
#include "robseg/segnet.hpp"
#include "robseg/tensor.hpp"

namespace robseg {

// Targeted iterative sign-gradient attack. All pixel arithmetic happens in
// 0-255 units; the model wrapper rescales internally, so epsilon and alpha
// are expressed on the same scale the intensity tables use.

struct AttackConfig {
    double epsilon = 8.0;  // L-inf budget, pixel units
    double alpha = 1.0;    // per-iteration step, pixel units
    double pixel_lo = 0.0;
    double pixel_hi = 255.0;
    int iterations_override = 0;  // > 0 replaces the epsilon-derived schedule
};

struct AdversarialSample {
    Image original;
    Image perturbed;
    Mask target;
    double epsilon = 0.0;
    int iterations_run = 0;
};

// Inverts a binary mask; the attack descends toward this complement.
Mask target_mask(const Mask& gt);

// min(eps + 4, ceil(1.25 eps)) rounded up, never below one step.
int iteration_count(double epsilon);

// One descent step: x - alpha * sign(grad), clamped into the epsilon ball
// around the original and into the valid pixel range. sign(0) is 0.
Tensor fgsm_step(const Tensor& x, const Tensor& grad, const Tensor& original, const AttackConfig& cfg);

// Runs the full schedule against one image. The model is used in eval mode
// and its parameters are left untouched.
AdversarialSample generate_adversarial(SegNet& model, const Image& img, const Mask& gt,
                                       const AttackConfig& cfg);

struct SweepRow {
    double epsilon = 0.0;
    double dic = 0.0;
    double jsc = 0.0;
    int n_images = 0;
};

// The intensity grid used throughout the robustness studies.
std::vector<double> default_intensities();

// Clean row (epsilon 0) first, then one row per requested intensity in the
// given order. Metrics are per-image values averaged over the dataset.
std::vector<SweepRow> sweep(SegNet& model, const std::vector<SampleRecord>& data,
                            const std::vector<double>& intensities, int threads = 1);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace robseg
