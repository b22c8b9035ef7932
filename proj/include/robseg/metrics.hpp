#pragma once

#include <cstdint>
#include <vector>

namespace robseg {

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t tn = 0;
    int64_t fp = 0;
    int64_t fn = 0;

    int64_t total() const { return tp + tn + fp + fn; }
};

// Pixel-level tally of a binary prediction against ground truth. Inputs must
// be the same length and strictly 0/1.
ConfusionCounts confusion(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);

// Overlap scores in [0, 1]. Two empty masks (tp = fp = fn = 0) score 1.0 by
// convention; the ratio is 0/0 otherwise.
double dic(const ConfusionCounts& c);
double jsc(const ConfusionCounts& c);

}  // namespace robseg
