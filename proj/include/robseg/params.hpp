#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "robseg/graph.hpp"
#include "robseg/rng.hpp"
#include "robseg/tensor.hpp"

namespace robseg {

// FNV-1a over raw bytes; used for parameter audit trails and file manifests.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

// Named parameter store with stable registration order. Layers keep raw
// Parameter pointers, so entries never move once added. Batch-norm running
// statistics are attached as named states and serialized alongside the
// trainable tensors.
class ParamRegistry {
public:
    Parameter& add(const std::string& name, Tensor init, bool trainable = true);
    void add_state(const std::string& name, BatchNormState* state);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
    std::vector<std::unique_ptr<Parameter>>& params() { return params_; }

    // Checksum of one entry's payload bytes, or of every entry in order.
    uint64_t checksum(const std::string& name) const;
    std::vector<std::pair<std::string, uint64_t>> checksums() const;

    int64_t trainable_count() const;

    void save(const std::string& path) const;
    // Strict load: the file must contain exactly the registered names with
    // matching shapes. Mismatches raise with the offending names listed.
    void load(const std::string& path);
    // Assigns only the entries present in both file and model (shapes must
    // still agree) and returns their names; used to seed an extended model
    // from a smaller one's checkpoint.
    std::vector<std::string> load_matching(const std::string& path);

private:
    struct StateRef {
        std::string name;
        BatchNormState* state;
    };

    // Serialized view: parameters in order, then per state two rank-1 records
    // (<name>.running_mean, <name>.running_var).
    std::vector<std::pair<std::string, std::pair<Shape, const std::vector<double>*>>> records() const;

    std::vector<std::unique_ptr<Parameter>> params_;
    std::vector<StateRef> states_;
    std::map<std::string, size_t> index_;
};

// He fan-in initialization for relu stacks.
Tensor kaiming_normal(Rng& rng, const Shape& shape, int fan_in);
Tensor uniform_init(Rng& rng, const Shape& shape, double lo, double hi);

}  // namespace robseg
