#include "robseg/segnet.hpp"

#include <cmath>
#include <stdexcept>

namespace robseg {

ModelVariant parse_variant(const std::string& s) {
    if (s == "full") return ModelVariant::full;
    if (s == "no-nlce") return ModelVariant::no_nlce;
    if (s == "no-nl") return ModelVariant::no_nl;
    if (s == "no-ce") return ModelVariant::no_ce;
    throw std::runtime_error("unknown model variant: " + s + " (expected full, no-nlce, no-nl or no-ce)");
}

std::string variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::full: return "full";
        case ModelVariant::no_nlce: return "no-nlce";
        case ModelVariant::no_nl: return "no-nl";
        case ModelVariant::no_ce: return "no-ce";
    }
    throw std::runtime_error("unknown model variant value");
}

Var seg_loss(Graph& g, Var logits, const std::vector<const Mask*>& masks) {
    const Shape& s = logits.shape();
    if (s.size() != 4 || s[1] != 2)
        throw std::runtime_error("seg_loss: logits must be [B,2,H,W], got " + shape_str(s));
    int b = s[0], h = s[2], w = s[3];
    if (static_cast<int>(masks.size()) != b)
        throw std::runtime_error("seg_loss: " + std::to_string(masks.size()) + " masks for batch of " +
                                 std::to_string(b));
    Tensor onehot = Tensor::zeros({b, 2, h, w});
    for (int bi = 0; bi < b; ++bi) {
        const Mask& m = *masks[static_cast<size_t>(bi)];
        if (m.h != h || m.w != w)
            throw std::runtime_error("seg_loss: mask " + std::to_string(bi) + " is " + std::to_string(m.h) + "x" +
                                     std::to_string(m.w) + ", logits are " + std::to_string(h) + "x" +
                                     std::to_string(w));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                uint8_t v = m.data[static_cast<size_t>(y) * m.w + x];
                if (v > 1)
                    throw std::runtime_error("seg_loss: mask value " + std::to_string(int(v)) + " outside {0,1}");
                size_t base = ((static_cast<size_t>(bi) * 2 + v) * h + y) * w + x;
                onehot.data[base] = 1.0;
            }
    }
    Var logp = log_softmax(logits, 1);
    double norm = -1.0 / (static_cast<double>(b) * h * w);
    return smul(sum_all(mul(logp, g.constant(std::move(onehot)))), norm);
}

Var total_loss(Graph& g, const std::array<Var, 4>& level_losses, Var refined_loss) {
    (void)g;
    Var levels = add(add(level_losses[0], level_losses[1]), add(level_losses[2], level_losses[3]));
    return add(smul(levels, 0.25), smul(refined_loss, 0.25));
}

double total_loss(const std::array<double, 4>& level_losses, double refined_loss) {
    double levels = level_losses[0] + level_losses[1] + level_losses[2] + level_losses[3];
    return 0.25 * levels + 0.25 * refined_loss;
}

Mask logits_to_mask(const Tensor& logits, int batch_index) {
    const Shape& s = logits.shape;
    if (s.size() != 4 || s[1] != 2)
        throw std::runtime_error("logits_to_mask: expected [B,2,H,W], got " + shape_str(s));
    if (batch_index < 0 || batch_index >= s[0])
        throw std::runtime_error("logits_to_mask: batch index " + std::to_string(batch_index) + " out of range");
    int h = s[2], w = s[3];
    Mask m;
    m.h = h;
    m.w = w;
    m.data.assign(static_cast<size_t>(h) * w, 0);
    size_t plane = static_cast<size_t>(h) * w;
    size_t base = static_cast<size_t>(batch_index) * 2 * plane;
    for (size_t i = 0; i < plane; ++i)
        m.data[i] = logits.data[base + plane + i] > logits.data[base + i] ? 1 : 0;
    return m;
}

SegNet::SegNet(const BackboneConfig& cfg, ModelVariant variant, uint64_t seed)
    : cfg_(cfg), variant_(variant) {
    for (int c : cfg.stage_channels)
        if (c < 1) throw std::runtime_error("segnet: stage channels must be positive");
    if (cfg.blocks_per_stage < 1) throw std::runtime_error("segnet: need at least one block per stage");
    if (cfg.in_channels != 1 && cfg.in_channels != 3)
        throw std::runtime_error("segnet: input must have 1 or 3 channels");
    if (cfg.pyramid_width < 2) throw std::runtime_error("segnet: pyramid width must be at least 2");
    if (cfg.codebook_size < 1) throw std::runtime_error("segnet: codebook size must be positive");

    Rng rng(seed);
    stem_ = make_conv_bn("stem", cfg.in_channels, cfg.stage_channels[0], 2, rng);
    int in_ch = cfg.stage_channels[0];
    for (int s = 0; s < 4; ++s) {
        std::string stage = "conv" + std::to_string(s + 2);
        int out_ch = cfg.stage_channels[static_cast<size_t>(s)];
        downs_[static_cast<size_t>(s)] = make_conv_bn(stage + ".down", in_ch, out_ch, 2, rng);
        for (int b = 0; b < cfg.blocks_per_stage; ++b) {
            std::string bname = stage + ".block" + std::to_string(b + 1);
            ResidualBlock blk;
            blk.c1 = make_conv_bn(bname + ".c1", out_ch, out_ch, 1, rng);
            // the block's second scale starts at zero so a fresh block is the
            // identity and deep stacks stay well-conditioned
            blk.c2 = make_conv_bn(bname + ".c2", out_ch, out_ch, 1, rng, true);
            blocks_[static_cast<size_t>(s)].push_back(blk);
        }
        if (variant != ModelVariant::no_nlce) {
            NlcePath path = variant == ModelVariant::no_nl    ? NlcePath::encoder_only
                            : variant == ModelVariant::no_ce ? NlcePath::non_local_only
                                                             : NlcePath::full;
            nlce_[static_cast<size_t>(s)] = std::make_unique<NlceLayer>(
                reg_, "nlce" + std::to_string(s + 2) + ".", out_ch, cfg.codebook_size, rng, path);
        }
        in_ch = out_ch;
    }
    for (int s = 0; s < 4; ++s)
        laterals_[static_cast<size_t>(s)] = make_conv_bias("pyr" + std::to_string(s + 2),
                                                           cfg.stage_channels[static_cast<size_t>(s)],
                                                           cfg.pyramid_width, 1, rng);
    for (int s = 0; s < 4; ++s)
        heads_[static_cast<size_t>(s)] =
            make_conv_bias("head" + std::to_string(s + 2), cfg.pyramid_width, 2, 3, rng);
    for (int s = 1; s < 4; ++s) {
        for (int b = 0; b < s; ++b) {
            std::string bname = "refine" + std::to_string(s + 2) + ".b" + std::to_string(b + 1);
            int mid = cfg.pyramid_width / 2;
            Bottleneck bn;
            bn.reduce = make_conv_bn(bname + ".reduce", cfg.pyramid_width, mid, 1, rng, false, 1);
            bn.mid = make_conv_bn(bname + ".mid", mid, mid, 1, rng);
            bn.restore = make_conv_bn(bname + ".restore", mid, cfg.pyramid_width, 1, rng, false, 1);
            refine_blocks_[static_cast<size_t>(s)].push_back(bn);
        }
    }
    refine_head_ = make_conv_bias("refine.head", 4 * cfg.pyramid_width, 2, 3, rng);
}

SegNet::ConvBn SegNet::make_conv_bn(const std::string& name, int in_ch, int out_ch, int stride, Rng& rng,
                                    bool zero_gamma, int ksize) {
    ConvBn l;
    int k = ksize;
    l.w = &reg_.add(name + ".w", kaiming_normal(rng, {out_ch, in_ch, k, k}, in_ch * k * k));
    l.gamma = &reg_.add(name + ".bn.gamma", Tensor::full({out_ch}, zero_gamma ? 0.0 : 1.0));
    l.beta = &reg_.add(name + ".bn.beta", Tensor::zeros({out_ch}));
    bn_states_.push_back(std::make_unique<BatchNormState>());
    bn_states_.back()->init(out_ch);
    l.state = bn_states_.back().get();
    reg_.add_state(name + ".bn", l.state);
    l.stride = stride;
    l.pad = k / 2;
    return l;
}

SegNet::ConvBias SegNet::make_conv_bias(const std::string& name, int in_ch, int out_ch, int ksize, Rng& rng) {
    ConvBias l;
    l.w = &reg_.add(name + ".w", kaiming_normal(rng, {out_ch, in_ch, ksize, ksize}, in_ch * ksize * ksize));
    l.b = &reg_.add(name + ".b", Tensor::zeros({out_ch}));
    l.pad = ksize / 2;
    return l;
}

Var SegNet::run_conv_bn(Graph& g, GraphBinder& bind, const ConvBn& l, Var x, bool training, bool rectify) {
    (void)g;
    Var y = conv2d(x, bind(*l.w), l.stride, l.pad);
    bool stats_update = training && l.gamma->trainable;
    y = batch_norm2d(y, bind(*l.gamma), bind(*l.beta), *l.state, stats_update);
    return rectify ? relu(y) : y;
}

Var SegNet::run_block(Graph& g, GraphBinder& bind, const ResidualBlock& blk, Var x, bool training) {
    Var y = run_conv_bn(g, bind, blk.c1, x, training);
    y = run_conv_bn(g, bind, blk.c2, y, training, false);
    return relu(add(x, y));
}

Var SegNet::run_bottleneck(Graph& g, GraphBinder& bind, const Bottleneck& bn, Var x, bool training) {
    Var y = run_conv_bn(g, bind, bn.reduce, x, training);
    y = run_conv_bn(g, bind, bn.mid, y, training);
    y = run_conv_bn(g, bind, bn.restore, y, training);
    return add(x, y);
}

Var SegNet::run_conv_bias(Graph& g, GraphBinder& bind, const ConvBias& l, Var x) {
    (void)g;
    return conv2d(x, bind(*l.w), bind(*l.b), 1, l.pad);
}

SegNet::Outputs SegNet::forward(Graph& g, GraphBinder& bind, Var images, bool training) {
    const Shape& s = images.shape();
    if (s.size() != 4) throw std::runtime_error("segnet: input must be [B,C,H,W], got " + shape_str(s));
    if (s[1] != cfg_.in_channels)
        throw std::runtime_error("segnet: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                                 std::to_string(s[1]));
    if (s[2] != s[3]) throw std::runtime_error("segnet: input must be square, got " + shape_str(s));
    if (s[2] % 32 != 0)
        throw std::runtime_error("segnet: input side " + std::to_string(s[2]) + " not divisible by 32");
    int full_h = s[2], full_w = s[3];

    Outputs out;
    Var x = run_conv_bn(g, bind, stem_, images, training);
    for (int st = 0; st < 4; ++st) {
        x = run_conv_bn(g, bind, downs_[static_cast<size_t>(st)], x, training);
        for (const ResidualBlock& blk : blocks_[static_cast<size_t>(st)]) x = run_block(g, bind, blk, x, training);
        out.stages[static_cast<size_t>(st)] = x;
        out.enhanced[static_cast<size_t>(st)] =
            nlce_[static_cast<size_t>(st)] ? nlce_[static_cast<size_t>(st)]->forward(g, bind, x, training) : x;
        x = out.enhanced[static_cast<size_t>(st)];
    }

    // top-down fusion: project the deepest map, then add upsampled coarser
    // levels onto each lateral projection
    Var p = run_conv_bias(g, bind, laterals_[3], out.enhanced[3]);
    out.pyramid[3] = p;
    for (int st = 2; st >= 0; --st) {
        Var lateral = run_conv_bias(g, bind, laterals_[static_cast<size_t>(st)], out.enhanced[static_cast<size_t>(st)]);
        int lh = lateral.shape()[2], lw = lateral.shape()[3];
        p = add(lateral, resize_bilinear(p, lh, lw));
        out.pyramid[static_cast<size_t>(st)] = p;
    }

    for (int st = 0; st < 4; ++st) {
        Var logits = run_conv_bias(g, bind, heads_[static_cast<size_t>(st)], out.pyramid[static_cast<size_t>(st)]);
        out.level_logits[static_cast<size_t>(st)] = resize_bilinear(logits, full_h, full_w);
    }

    int base_h = out.pyramid[0].shape()[2], base_w = out.pyramid[0].shape()[3];
    std::vector<Var> fused;
    fused.reserve(4);
    for (int st = 0; st < 4; ++st) {
        Var r = out.pyramid[static_cast<size_t>(st)];
        for (const Bottleneck& bn : refine_blocks_[static_cast<size_t>(st)]) r = run_bottleneck(g, bind, bn, r, training);
        if (st > 0) r = resize_bilinear(r, base_h, base_w);
        fused.push_back(r);
    }
    Var refined = run_conv_bias(g, bind, refine_head_, concat(fused, 1));
    out.refined = resize_bilinear(refined, full_h, full_w);
    return out;
}

Tensor SegNet::normalize(const Tensor& images255) {
    Tensor t = images255;
    for (double& v : t.data) v /= 255.0;
    return t;
}

Tensor SegNet::image_batch(const std::vector<const Image*>& imgs) {
    if (imgs.empty()) throw std::runtime_error("image_batch: empty batch");
    int c = imgs[0]->channels, h = imgs[0]->h, w = imgs[0]->w;
    Tensor t = Tensor::zeros({static_cast<int>(imgs.size()), c, h, w});
    size_t plane = static_cast<size_t>(c) * h * w;
    for (size_t i = 0; i < imgs.size(); ++i) {
        const Image& im = *imgs[i];
        if (im.channels != c || im.h != h || im.w != w)
            throw std::runtime_error("image_batch: mixed image shapes in one batch");
        for (size_t j = 0; j < plane; ++j) t.data[i * plane + j] = im.data[j];
    }
    return t;
}

Tensor SegNet::infer(const Tensor& images255) {
    Graph g;
    GraphBinder bind(g, false);
    Var x = g.constant(normalize(images255));
    Outputs out = forward(g, bind, x, false);
    return out.refined.value();
}

Mask SegNet::predict(const Image& img) {
    Tensor batch = image_batch({&img});
    return logits_to_mask(infer(batch), 0);
}

void SegNet::freeze_base(bool frozen) {
    for (auto& p : reg_.params())
        if (p->name.rfind("nlce", 0) != 0) p->trainable = !frozen;
}

}  // namespace robseg
