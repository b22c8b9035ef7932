#include "robseg/metrics.hpp"

#include <stdexcept>
#include <string>

namespace robseg {

ConfusionCounts confusion(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
    if (pred.size() != gt.size())
        throw std::runtime_error("confusion: size mismatch " + std::to_string(pred.size()) + " vs " +
                                 std::to_string(gt.size()));
    ConfusionCounts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        uint8_t p = pred[i], g = gt[i];
        if (p > 1 || g > 1) throw std::runtime_error("confusion: masks must be 0/1");
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double dic(const ConfusionCounts& c) {
    int64_t denom = 2 * c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double jsc(const ConfusionCounts& c) {
    int64_t denom = c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

}  // namespace robseg
