#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "robseg/data.hpp"
#include "robseg/graph.hpp"
#include "robseg/nlce.hpp"
#include "robseg/params.hpp"
#include "robseg/rng.hpp"

namespace robseg {

// Staged residual backbone with a context module per stage, a top-down
// feature pyramid, one prediction head per level, and a refinement head that
// fuses all levels. Desk-scale by default; the config widens to larger
// settings without structural changes.

struct BackboneConfig {
    std::array<int, 4> stage_channels{8, 16, 32, 64};
    int blocks_per_stage = 1;
    int input_hw = 64;       // nominal side; any square side divisible by 32 runs
    int in_channels = 1;     // 1 for grayscale, 3 for color
    int pyramid_width = 32;  // shared channel count of the fused maps
    int codebook_size = 8;   // codewords per context module
};

enum class ModelVariant { full, no_nlce, no_nl, no_ce };

ModelVariant parse_variant(const std::string& s);
std::string variant_name(ModelVariant v);

// Cross-entropy over per-pixel 2-class softmax, averaged over every pixel of
// the batch. logits [B, 2, H, W]; one mask per image. Always >= 0.
Var seg_loss(Graph& g, Var logits, const std::vector<const Mask*>& masks);

// Weighted sum of the four per-level losses and the refined loss: the level
// mean plus a quarter of the refined term.
Var total_loss(Graph& g, const std::array<Var, 4>& level_losses, Var refined_loss);
double total_loss(const std::array<double, 4>& level_losses, double refined_loss);

// Per-pixel argmax of one image's 2-channel logits; ties resolve to class 0.
Mask logits_to_mask(const Tensor& logits, int batch_index);

class SegNet {
public:
    SegNet(const BackboneConfig& cfg, ModelVariant variant, uint64_t seed);
    SegNet(const SegNet&) = delete;
    SegNet& operator=(const SegNet&) = delete;

    struct Outputs {
        std::array<Var, 4> stages;        // backbone maps at strides 4..32
        std::array<Var, 4> enhanced;      // post context-module maps
        std::array<Var, 4> pyramid;       // fused maps, shared width
        std::array<Var, 4> level_logits;  // full-resolution 2-class maps
        Var refined;                      // full-resolution fused prediction
    };

    // images is [B, in_channels, H, W] with H = W divisible by 32. The binder
    // must wrap g; call bind.harvest() after backward to collect gradients.
    Outputs forward(Graph& g, GraphBinder& bind, Var images, bool training);

    // Eval-mode refined logits for a batch tensor.
    Tensor infer(const Tensor& images);
    // Convenience single-image path: 0-255 image in, binary mask out.
    Mask predict(const Image& img);

    // Scales a 0-255 image batch to the unit range the network consumes.
    static Tensor normalize(const Tensor& images255);
    static Tensor image_batch(const std::vector<const Image*>& imgs);

    ParamRegistry& registry() { return reg_; }
    const ParamRegistry& registry() const { return reg_; }
    const BackboneConfig& config() const { return cfg_; }
    ModelVariant variant() const { return variant_; }

    // Marks every parameter outside the context modules non-trainable (or
    // trainable again). Frozen batch-norm layers also stop updating buffers.
    void freeze_base(bool frozen);

private:
    struct ConvBn {
        Parameter* w = nullptr;
        Parameter* gamma = nullptr;
        Parameter* beta = nullptr;
        BatchNormState* state = nullptr;
        int stride = 1;
        int pad = 1;
    };
    struct ResidualBlock {
        ConvBn c1, c2;
    };
    struct Bottleneck {
        ConvBn reduce, mid, restore;
    };
    struct ConvBias {
        Parameter* w = nullptr;
        Parameter* b = nullptr;
        int pad = 0;
    };

    ConvBn make_conv_bn(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng,
                        bool zero_gamma = false, int ksize = 3);
    ConvBias make_conv_bias(const std::string& name, int in_ch, int out_ch, int ksize, Rng& rng);
    Var run_conv_bn(Graph& g, GraphBinder& bind, const ConvBn& l, Var x, bool training, bool rectify = true);
    Var run_block(Graph& g, GraphBinder& bind, const ResidualBlock& blk, Var x, bool training);
    Var run_bottleneck(Graph& g, GraphBinder& bind, const Bottleneck& bn, Var x, bool training);
    Var run_conv_bias(Graph& g, GraphBinder& bind, const ConvBias& l, Var x);

    BackboneConfig cfg_;
    ModelVariant variant_;
    ParamRegistry reg_;
    std::vector<std::unique_ptr<BatchNormState>> bn_states_;

    ConvBn stem_;
    std::array<ConvBn, 4> downs_;
    std::array<std::vector<ResidualBlock>, 4> blocks_;
    std::array<std::unique_ptr<NlceLayer>, 4> nlce_;
    std::array<ConvBias, 4> laterals_;
    std::array<ConvBias, 4> heads_;
    std::array<std::vector<Bottleneck>, 4> refine_blocks_;
    ConvBias refine_head_;
};

}  // namespace robseg
