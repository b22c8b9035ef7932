#pragma once

#include <string>

#include "robseg/graph.hpp"
#include "robseg/params.hpp"
#include "robseg/rng.hpp"

namespace robseg {

// Non-local context encoder: pairwise attention over all spatial positions,
// residual enhancement, codebook residual encoding, and a channel gate. The
// free functions below operate on one image with positions flattened to rows
// ([N, C], N = H*W); NlceLayer applies the same computation per image of a
// [B, C, H, W] batch with batch-norm statistics pooled across the batch.

struct NonLocalParams {
    Tensor w_theta;  // [C', C]
    Tensor w_phi;    // [C', C]
    Tensor w_g;      // [C', C]
    Tensor w_z;      // [C, C']
};

struct ContextEncoderParams {
    Tensor proj;       // [C'', C]
    Tensor codebook;   // [K, C'']
    Tensor smoothing;  // [K]
    Tensor bn_gamma;   // [C'']
    Tensor bn_beta;    // [C'']
    Tensor w_gamma;    // [C, C'']
    BatchNormState bn_state;
};

struct NlceParams {
    NonLocalParams non_local;
    ContextEncoderParams encoder;
};

int embed_width(int channels);  // C' = floor(C/2), at least 1

// Fresh parameter set: attention/projection matrices fan-in scaled, codewords
// uniform in [-1/sqrt(K), 1/sqrt(K)], smoothing uniform in (0, 1], w_z zero so
// the untrained module starts as a residual identity scaled by sigmoid(0).
NlceParams make_nlce_params(int channels, int codebook_size, Rng& rng);

// Row-stochastic attention [N, N]: softmax over j of theta(x_i)^T phi(x_j).
Tensor pairwise_attention(const Tensor& x, const NonLocalParams& p);
// y_i = sum_j attention(i, j) * g(x_j), shape [N, C'].
Tensor non_local_response(const Tensor& x, const NonLocalParams& p);
// z_i = W_z y_i + x_i, shape [N, C].
Tensor enhance(const Tensor& x, const Tensor& y, const NonLocalParams& p);
// Soft-assigned aggregated residuals against the codebook, batch-normalized,
// rectified and summed over codewords: a [C''] context descriptor. Training
// mode updates p.bn_state.
Tensor encode_context(const Tensor& fz, ContextEncoderParams& p, bool training);
// gamma = sigmoid(W_gamma e), each entry strictly inside (0, 1).
Tensor channel_attention(const Tensor& e, const ContextEncoderParams& p);
// Full module: fz scaled per channel by gamma. Shape equals the input shape.
Tensor nlce_forward(const Tensor& x, NlceParams& p, bool training);

// Parameter leaves of one module instance bound into a graph.
struct NlceVarPack {
    Var w_theta, w_phi, w_g, w_z;
    Var proj, codebook, smoothing, bn_gamma, bn_beta, w_gamma;
};

// Graph pieces shared by the free functions and the layer; x is [N, C].
Var nlce_attention_graph(Graph& g, Var x, const NlceVarPack& v);
Var nlce_response_graph(Graph& g, Var x, const NlceVarPack& v);
Var nlce_enhance_graph(Graph& g, Var x, Var y, const NlceVarPack& v);
// Aggregated residuals per codeword for one image, [K, C''].
Var nlce_residual_rows_graph(Graph& g, Var zp, const NlceVarPack& v);
// Which stages of the module run. encoder_only skips the pairwise attention
// (the context gate acts on the raw input); non_local_only skips the codebook
// gate (the enhanced map passes through unscaled).
enum class NlcePath { full, encoder_only, non_local_only };

// Batched module forward on [B, C, H, W]. Vars outside the chosen path may be
// left unbound.
Var nlce_batched_graph(Graph& g, Var x, const NlceVarPack& v, BatchNormState& bn, bool training,
                       NlcePath path = NlcePath::full);

// Binds registry parameters into a graph and accumulates their gradients
// after backward. Parameters are recorded leaves; a frozen (non-trainable)
// parameter or an eval-mode bind enters the graph without gradient tracking.
class GraphBinder {
public:
    GraphBinder(Graph& g, bool training) : g_(&g), training_(training) {}

    Var operator()(Parameter& p) {
        Var v = g_->input(p.value, training_ && p.trainable);
        bound_.push_back({&p, v});
        return v;
    }

    // adds each bound parameter's gradient into its persistent accumulator
    void harvest() {
        for (auto& [p, v] : bound_) {
            if (!g_->needs_grad(v.id())) continue;
            p->value.ensure_grad();
            const std::vector<double>& gd = g_->grad_data(v.id());
            for (size_t i = 0; i < gd.size(); ++i) p->value.grad[i] += gd[i];
        }
    }

private:
    Graph* g_;
    bool training_;
    std::vector<std::pair<Parameter*, Var>> bound_;
};

// Registry-backed module for use inside a network. Parameter names take the
// given prefix ("<prefix>w_theta", ...), so a whole instance can be frozen or
// selected by prefix match.
class NlceLayer {
public:
    // Registers only the parameters the chosen path uses, so ablated variants
    // carry no dead tensors in their checkpoints.
    NlceLayer(ParamRegistry& reg, const std::string& prefix, int channels, int codebook_size, Rng& rng,
              NlcePath path = NlcePath::full);

    // x is [B, C, H, W]; bn runs in training mode only while this layer is
    // itself trainable, so frozen instances never drift their buffers
    Var forward(Graph& g, GraphBinder& bind, Var x, bool training);

    const std::string& prefix() const { return prefix_; }
    int channels() const { return channels_; }

private:
    std::string prefix_;
    int channels_ = 0;
    NlcePath path_ = NlcePath::full;
    Parameter* w_theta_ = nullptr;
    Parameter* w_phi_ = nullptr;
    Parameter* w_g_ = nullptr;
    Parameter* w_z_ = nullptr;
    Parameter* proj_ = nullptr;
    Parameter* codebook_ = nullptr;
    Parameter* smoothing_ = nullptr;
    Parameter* bn_gamma_ = nullptr;
    Parameter* bn_beta_ = nullptr;
    Parameter* w_gamma_ = nullptr;
    BatchNormState bn_state_;
};

}  // namespace robseg
