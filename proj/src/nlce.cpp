#include "robseg/nlce.hpp"

#include <cmath>

namespace robseg {

namespace {

void validate_nonlocal(const NonLocalParams& p) {
    auto r2 = [](const Tensor& t, const char* name) {
        if (t.rank() != 2) throw std::runtime_error(std::string("nlce: ") + name + " must be a matrix");
    };
    r2(p.w_theta, "w_theta");
    r2(p.w_phi, "w_phi");
    r2(p.w_g, "w_g");
    r2(p.w_z, "w_z");
    int cp = p.w_theta.shape[0], c = p.w_theta.shape[1];
    if (p.w_phi.shape != Shape{cp, c} || p.w_g.shape != Shape{cp, c} || p.w_z.shape != Shape{c, cp})
        throw std::runtime_error("nlce: non-local matrices disagree on C/C': w_theta " + shape_str(p.w_theta.shape) +
                                 ", w_phi " + shape_str(p.w_phi.shape) + ", w_g " + shape_str(p.w_g.shape) +
                                 ", w_z " + shape_str(p.w_z.shape));
}

void validate_encoder(const ContextEncoderParams& p, int channels) {
    if (p.proj.rank() != 2 || p.proj.shape[1] != channels)
        throw std::runtime_error("nlce: proj " + shape_str(p.proj.shape) + " does not accept " +
                                 std::to_string(channels) + " channels");
    int cpp = p.proj.shape[0];
    if (p.codebook.rank() != 2 || p.codebook.shape[1] != cpp)
        throw std::runtime_error("nlce: codebook " + shape_str(p.codebook.shape) + " vs embedding width " +
                                 std::to_string(cpp));
    int k = p.codebook.shape[0];
    if (k < 1) throw std::runtime_error("nlce: codebook must hold at least one codeword");
    if (p.smoothing.shape != Shape{k})
        throw std::runtime_error("nlce: smoothing " + shape_str(p.smoothing.shape) + " vs codeword count " +
                                 std::to_string(k));
    if (p.bn_gamma.shape != Shape{cpp} || p.bn_beta.shape != Shape{cpp})
        throw std::runtime_error("nlce: batch-norm parameters must be [" + std::to_string(cpp) + "]");
    if (p.w_gamma.rank() != 2 || p.w_gamma.shape[1] != cpp || p.w_gamma.shape[0] != channels)
        throw std::runtime_error("nlce: w_gamma " + shape_str(p.w_gamma.shape) + " must be [" +
                                 std::to_string(channels) + "," + std::to_string(cpp) + "]");
}

void validate_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::runtime_error("nlce: feature rows must be [N,C], got " + shape_str(x.shape));
}

NlceVarPack bind_constants(Graph& g, const NlceParams& p) {
    NlceVarPack v;
    v.w_theta = g.constant(p.non_local.w_theta);
    v.w_phi = g.constant(p.non_local.w_phi);
    v.w_g = g.constant(p.non_local.w_g);
    v.w_z = g.constant(p.non_local.w_z);
    v.proj = g.constant(p.encoder.proj);
    v.codebook = g.constant(p.encoder.codebook);
    v.smoothing = g.constant(p.encoder.smoothing);
    v.bn_gamma = g.constant(p.encoder.bn_gamma);
    v.bn_beta = g.constant(p.encoder.bn_beta);
    v.w_gamma = g.constant(p.encoder.w_gamma);
    return v;
}

}  // namespace

int embed_width(int channels) { return channels >= 2 ? channels / 2 : 1; }

NlceParams make_nlce_params(int channels, int codebook_size, Rng& rng) {
    if (channels < 1) throw std::runtime_error("nlce: channels must be positive");
    if (codebook_size < 1) throw std::runtime_error("nlce: codebook size must be positive");
    int cp = embed_width(channels);
    int cpp = cp;
    NlceParams p;
    p.non_local.w_theta = kaiming_normal(rng, {cp, channels}, channels);
    p.non_local.w_phi = kaiming_normal(rng, {cp, channels}, channels);
    p.non_local.w_g = kaiming_normal(rng, {cp, channels}, channels);
    p.non_local.w_z = Tensor::zeros({channels, cp});
    p.encoder.proj = kaiming_normal(rng, {cpp, channels}, channels);
    double bound = 1.0 / std::sqrt(static_cast<double>(codebook_size));
    p.encoder.codebook = uniform_init(rng, {codebook_size, cpp}, -bound, bound);
    p.encoder.smoothing = Tensor::zeros({codebook_size});
    for (double& v : p.encoder.smoothing.data) v = 1.0 - rng.uniform01();  // (0, 1]
    p.encoder.bn_gamma = Tensor::full({cpp}, 1.0);
    p.encoder.bn_beta = Tensor::zeros({cpp});
    p.encoder.w_gamma = kaiming_normal(rng, {channels, cpp}, cpp);
    p.encoder.bn_state.init(cpp);
    return p;
}

Var nlce_attention_graph(Graph&, Var x, const NlceVarPack& v) {
    Var theta = matmul(x, transpose2d(v.w_theta));
    Var phi = matmul(x, transpose2d(v.w_phi));
    Var logits = matmul(theta, transpose2d(phi));
    return softmax(logits, 1);
}

Var nlce_response_graph(Graph& g, Var x, const NlceVarPack& v) {
    Var a = nlce_attention_graph(g, x, v);
    Var gx = matmul(x, transpose2d(v.w_g));
    return matmul(a, gx);
}

Var nlce_enhance_graph(Graph&, Var x, Var y, const NlceVarPack& v) {
    return add(matmul(y, transpose2d(v.w_z)), x);
}

Var nlce_residual_rows_graph(Graph& g, Var zp, const NlceVarPack& v) {
    int n = zp.shape()[0];
    int cpp = zp.shape()[1];
    // soft assignment of each position to each codeword
    Var w = softmax(neg_sq_dist(zp, v.codebook, v.smoothing), 1);  // [N, K]
    // e_k = sum_i w_ik (z'_i - d_k) = W^T Z' - (column sums of W) outer d_k
    Var weighted = matmul(transpose2d(w), zp);                                   // [K, C'']
    Var colsum = matmul(g.constant(Tensor::full({1, n}, 1.0)), w);               // [1, K]
    Var counts = matmul(transpose2d(colsum), g.constant(Tensor::full({1, cpp}, 1.0)));  // [K, C'']
    return sub(weighted, mul(counts, v.codebook));
}

Var nlce_batched_graph(Graph& g, Var x, const NlceVarPack& v, BatchNormState& bn, bool training,
                       NlcePath path) {
    const Shape& s = x.shape();
    if (s.size() != 4)
        throw std::runtime_error("nlce: batched input must be [B,C,H,W], got " + shape_str(x.value().shape));
    int b = s[0], c = s[1], h = s[2], w = s[3];
    int n = h * w;

    std::vector<Var> fz_rows;  // per image [N, C]
    fz_rows.reserve(static_cast<size_t>(b));
    for (int bi = 0; bi < b; ++bi) {
        Var xi = transpose2d(reshape(slice(x, 0, bi, 1), {c, n}));  // [N, C]
        if (path == NlcePath::encoder_only) {
            fz_rows.push_back(xi);
        } else {
            Var y = nlce_response_graph(g, xi, v);
            fz_rows.push_back(nlce_enhance_graph(g, xi, y, v));
        }
    }

    if (path == NlcePath::non_local_only) {
        std::vector<Var> images;
        images.reserve(static_cast<size_t>(b));
        for (int bi = 0; bi < b; ++bi)
            images.push_back(reshape(transpose2d(fz_rows[static_cast<size_t>(bi)]), {1, c, h, w}));
        return b == 1 ? images[0] : concat(images, 0);
    }

    int k = v.codebook.shape()[0];
    int cpp = v.codebook.shape()[1];
    std::vector<Var> residual_rows;  // per image [K, C'']
    residual_rows.reserve(static_cast<size_t>(b));
    for (int bi = 0; bi < b; ++bi) {
        Var zp = matmul(fz_rows[static_cast<size_t>(bi)], transpose2d(v.proj));  // [N, C'']
        residual_rows.push_back(nlce_residual_rows_graph(g, zp, v));
    }

    // sigma runs over all B*K aggregated residuals so batch statistics pool
    // across the batch, then each image sums its K rectified rows
    Var stacked = b == 1 ? residual_rows[0] : concat(residual_rows, 0);          // [B*K, C'']
    Var normed = batch_norm2d(reshape(stacked, {b * k, cpp, 1, 1}), v.bn_gamma, v.bn_beta, bn, training);
    Var rect = reshape(relu(normed), {b, k, cpp});
    Var context = reduce_sum(rect, {1});                                         // [B, C'']
    Var gamma = sigmoid(matmul(context, transpose2d(v.w_gamma)));                // [B, C]

    std::vector<Var> out_images;
    out_images.reserve(static_cast<size_t>(b));
    Var ones_n1 = g.constant(Tensor::full({n, 1}, 1.0));
    for (int bi = 0; bi < b; ++bi) {
        Var gi = slice(gamma, 0, bi, 1);                       // [1, C]
        Var scale = matmul(ones_n1, gi);                       // [N, C]
        Var scaled = mul(fz_rows[static_cast<size_t>(bi)], scale);
        out_images.push_back(reshape(transpose2d(scaled), {1, c, h, w}));
    }
    return b == 1 ? out_images[0] : concat(out_images, 0);
}

Tensor pairwise_attention(const Tensor& x, const NonLocalParams& p) {
    validate_rows(x);
    validate_nonlocal(p);
    Graph g;
    NlceVarPack v;
    v.w_theta = g.constant(p.w_theta);
    v.w_phi = g.constant(p.w_phi);
    return nlce_attention_graph(g, g.constant(x), v).value();
}

Tensor non_local_response(const Tensor& x, const NonLocalParams& p) {
    validate_rows(x);
    validate_nonlocal(p);
    Graph g;
    NlceVarPack v;
    v.w_theta = g.constant(p.w_theta);
    v.w_phi = g.constant(p.w_phi);
    v.w_g = g.constant(p.w_g);
    return nlce_response_graph(g, g.constant(x), v).value();
}

Tensor enhance(const Tensor& x, const Tensor& y, const NonLocalParams& p) {
    validate_rows(x);
    validate_rows(y);
    validate_nonlocal(p);
    Graph g;
    NlceVarPack v;
    v.w_z = g.constant(p.w_z);
    return nlce_enhance_graph(g, g.constant(x), g.constant(y), v).value();
}

Tensor encode_context(const Tensor& fz, ContextEncoderParams& p, bool training) {
    validate_rows(fz);
    validate_encoder(p, fz.shape[1]);
    int k = p.codebook.shape[0], cpp = p.codebook.shape[1];
    Graph g;
    NlceVarPack v;
    v.proj = g.constant(p.proj);
    v.codebook = g.constant(p.codebook);
    v.smoothing = g.constant(p.smoothing);
    v.bn_gamma = g.constant(p.bn_gamma);
    v.bn_beta = g.constant(p.bn_beta);
    Var zp = matmul(g.constant(fz), transpose2d(v.proj));
    Var rows = nlce_residual_rows_graph(g, zp, v);
    Var normed = batch_norm2d(reshape(rows, {k, cpp, 1, 1}), v.bn_gamma, v.bn_beta, p.bn_state, training);
    Var context = reduce_sum(reshape(relu(normed), {k, cpp}), {0});
    return context.value();
}

Tensor channel_attention(const Tensor& e, const ContextEncoderParams& p) {
    if (e.rank() != 1 || e.shape[0] != p.w_gamma.shape[1])
        throw std::runtime_error("nlce: context vector " + shape_str(e.shape) + " does not match w_gamma " +
                                 shape_str(p.w_gamma.shape));
    Graph g;
    Var logits = matmul(g.constant(p.w_gamma), transpose2d(g.constant(Tensor({1, e.shape[0]}, e.data))));
    Var gamma = sigmoid(logits);  // [C, 1]
    Tensor out = Tensor::zeros({p.w_gamma.shape[0]});
    out.data = gamma.value().data;
    return out;
}

Tensor nlce_forward(const Tensor& x, NlceParams& p, bool training) {
    validate_rows(x);
    validate_nonlocal(p.non_local);
    validate_encoder(p.encoder, x.shape[1]);
    int n = x.shape[0], c = x.shape[1];
    Graph g;
    NlceVarPack v = bind_constants(g, p);
    // single image of the batched path: [N, C] viewed as [1, C, N, 1]
    Var x4 = reshape(transpose2d(g.constant(x)), {1, c, n, 1});
    Var out = nlce_batched_graph(g, x4, v, p.encoder.bn_state, training);
    return Tensor({n, c}, transpose2d(reshape(out, {c, n})).value().data);
}

NlceLayer::NlceLayer(ParamRegistry& reg, const std::string& prefix, int channels, int codebook_size, Rng& rng,
                     NlcePath path)
    : prefix_(prefix), channels_(channels), path_(path) {
    NlceParams init = make_nlce_params(channels, codebook_size, rng);
    if (path != NlcePath::encoder_only) {
        w_theta_ = &reg.add(prefix + "w_theta", std::move(init.non_local.w_theta));
        w_phi_ = &reg.add(prefix + "w_phi", std::move(init.non_local.w_phi));
        w_g_ = &reg.add(prefix + "w_g", std::move(init.non_local.w_g));
        w_z_ = &reg.add(prefix + "w_z", std::move(init.non_local.w_z));
    }
    if (path != NlcePath::non_local_only) {
        proj_ = &reg.add(prefix + "proj", std::move(init.encoder.proj));
        codebook_ = &reg.add(prefix + "codebook", std::move(init.encoder.codebook));
        smoothing_ = &reg.add(prefix + "smoothing", std::move(init.encoder.smoothing));
        bn_gamma_ = &reg.add(prefix + "bn_gamma", std::move(init.encoder.bn_gamma));
        bn_beta_ = &reg.add(prefix + "bn_beta", std::move(init.encoder.bn_beta));
        w_gamma_ = &reg.add(prefix + "w_gamma", std::move(init.encoder.w_gamma));
        bn_state_.init(init.encoder.bn_state.channels());
        reg.add_state(prefix + "bn", &bn_state_);
    }
}

Var NlceLayer::forward(Graph& g, GraphBinder& bind, Var x, bool training) {
    NlceVarPack v;
    if (path_ != NlcePath::encoder_only) {
        v.w_theta = bind(*w_theta_);
        v.w_phi = bind(*w_phi_);
        v.w_g = bind(*w_g_);
        v.w_z = bind(*w_z_);
    }
    bool stats_update = false;
    if (path_ != NlcePath::non_local_only) {
        v.proj = bind(*proj_);
        v.codebook = bind(*codebook_);
        v.smoothing = bind(*smoothing_);
        v.bn_gamma = bind(*bn_gamma_);
        v.bn_beta = bind(*bn_beta_);
        v.w_gamma = bind(*w_gamma_);
        stats_update = training && bn_gamma_->trainable;
    }
    return nlce_batched_graph(g, x, v, bn_state_, stats_update, path_);
}

}  // namespace robseg
