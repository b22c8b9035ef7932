#include "robseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace robseg {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scalar_mul: return "scalar_mul";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::exp: return "exp";
        case OpKind::softmax: return "softmax";
        case OpKind::log_softmax: return "log_softmax";
        case OpKind::neg_sq_dist: return "neg_sq_dist";
        case OpKind::reduce_sum: return "reduce_sum";
        case OpKind::batchnorm2d: return "batchnorm2d";
        case OpKind::bilinear_resize: return "bilinear_resize";
        case OpKind::concat: return "concat";
        case OpKind::reshape: return "reshape";
        case OpKind::transpose: return "transpose";
        case OpKind::slice: return "slice";
    }
    return "unknown";
}

namespace {

[[noreturn]] void fail(OpKind k, const std::string& msg) {
    throw std::runtime_error(std::string(op_name(k)) + ": " + msg);
}

void want_rank(OpKind k, const Tensor& t, int r, const char* what) {
    if (t.rank() != r)
        fail(k, std::string(what) + " must have rank " + std::to_string(r) + ", got shape " + shape_str(t.shape));
}

// C[m][n] += A[m][k] * B[k][n]
void mm_acc_nn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        const double* ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            if (a == 0.0) continue;
            const double* bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

// C[m][k] += A[m][n] * B[k][n]^T
void mm_acc_nt(const double* A, const double* B, double* C, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * n;
        double* ci = C + static_cast<size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* bj = B + static_cast<size_t>(j) * n;
            double acc = 0.0;
            for (int l = 0; l < n; ++l) acc += ai[l] * bj[l];
            ci[j] += acc;
        }
    }
}

// C[k][n] += A[m][k]^T * B[m][n]
void mm_acc_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int p = 0; p < m; ++p) {
        const double* ap = A + static_cast<size_t>(p) * k;
        const double* bp = B + static_cast<size_t>(p) * n;
        for (int i = 0; i < k; ++i) {
            double a = ap[i];
            if (a == 0.0) continue;
            double* ci = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

struct ConvDims {
    int b, ci, h, w, co, kh, kw, ho, wo;
    int cols() const { return ci * kh * kw; }
    int positions() const { return ho * wo; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    ConvDims d{};
    d.b = x.shape[0];
    d.ci = x.shape[1];
    d.h = x.shape[2];
    d.w = x.shape[3];
    d.co = w.shape[0];
    d.kh = w.shape[2];
    d.kw = w.shape[3];
    if (w.shape[1] != d.ci)
        fail(OpKind::conv2d, "input channels " + std::to_string(d.ci) + " vs kernel channels " +
                                 std::to_string(w.shape[1]));
    if (stride < 1) fail(OpKind::conv2d, "stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) fail(OpKind::conv2d, "padding must be >= 0, got " + std::to_string(pad));
    int eh = d.h + 2 * pad - d.kh;
    int ew = d.w + 2 * pad - d.kw;
    if (eh < 0 || ew < 0)
        fail(OpKind::conv2d, "kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                                 " larger than padded input " + std::to_string(d.h + 2 * pad) + "x" +
                                 std::to_string(d.w + 2 * pad));
    d.ho = eh / stride + 1;
    d.wo = ew / stride + 1;
    return d;
}

// One image's im2col matrix, rows = (ci, ky, kx), columns = output positions.
void im2col(const double* img, const ConvDims& d, int stride, int pad, double* mt) {
    int J = d.positions();
    for (int ci = 0; ci < d.ci; ++ci) {
        const double* plane = img + static_cast<size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                double* row = mt + (static_cast<size_t>(ci) * d.kh * d.kw + static_cast<size_t>(ky) * d.kw + kx) * J;
                for (int oy = 0; oy < d.ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    double* rr = row + static_cast<size_t>(oy) * d.wo;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(rr, rr + d.wo, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        rr[ox] = (ix < 0 || ix >= d.w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* mt, const ConvDims& d, int stride, int pad, double* img) {
    int J = d.positions();
    for (int ci = 0; ci < d.ci; ++ci) {
        double* plane = img + static_cast<size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const double* row =
                    mt + (static_cast<size_t>(ci) * d.kh * d.kw + static_cast<size_t>(ky) * d.kw + kx) * J;
                for (int oy = 0; oy < d.ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* rr = row + static_cast<size_t>(oy) * d.wo;
                    double* dst = plane + static_cast<size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < d.w) dst[ix] += rr[ox];
                    }
                }
            }
        }
    }
}

struct LaneView {
    int64_t lanes;   // number of independent lanes
    int len;         // lane length (size of the reduced axis)
    int64_t inner;   // stride between consecutive lane elements
    int64_t outer_stride;
};

LaneView lane_view(const Shape& s, int axis) {
    LaneView v{};
    v.len = s[static_cast<size_t>(axis)];
    int64_t inner = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    int64_t outer = 1;
    for (size_t i = 0; i < static_cast<size_t>(axis); ++i) outer *= s[i];
    v.inner = inner;
    v.lanes = outer * inner;
    v.outer_stride = inner * v.len;
    return v;
}

// base offset of lane l
int64_t lane_base(const LaneView& v, int64_t l) {
    int64_t o = l / v.inner;
    int64_t i = l % v.inner;
    return o * v.outer_stride + i;
}

void check_axis(OpKind k, const Tensor& t, int axis) {
    if (t.rank() == 0 || axis < 0 || axis >= t.rank())
        fail(k, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(t.shape));
}

void check_finite(OpKind k, const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) fail(k, "non-finite logit in input");
}

std::vector<int64_t> row_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
    return st;
}

}  // namespace

const Tensor& Var::value() const { return g_->value(id_); }
const Shape& Var::shape() const { return g_->value(id_).shape; }

void Graph::check_id(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw std::runtime_error("graph: node id " + std::to_string(id) + " out of range");
}

const Tensor& Graph::value(int id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)].out;
}

bool Graph::needs_grad(int id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)].needs_grad;
}

Var Graph::input(Tensor t, bool needs) {
    Node n;
    n.kind = OpKind::leaf;
    n.out = std::move(t);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const std::vector<double>& Graph::grad_data(int id) const {
    check_id(id);
    if (!ran_backward_) throw std::runtime_error("graph: backward has not run");
    if (!nodes_[static_cast<size_t>(id)].needs_grad)
        throw std::runtime_error("graph: gradient requested for detached node " + std::to_string(id));
    return grads_[static_cast<size_t>(id)];
}

Tensor Graph::grad(const Var& v) const {
    const std::vector<double>& g = grad_data(v.id());
    return Tensor(value(v.id()).shape, g);
}

Var Graph::forward_op(OpKind kind, const std::vector<Var>& inputs, const OpAttrs& attrs) {
    for (const Var& v : inputs) {
        if (!v.valid() || v.graph() != this) fail(kind, "input var does not belong to this graph");
        check_id(v.id());
    }
    auto in = [&](size_t i) -> const Tensor& { return nodes_[static_cast<size_t>(inputs[i].id())].out; };

    Node n;
    n.kind = kind;
    n.attrs = attrs;
    for (const Var& v : inputs) n.inputs.push_back(v.id());
    for (const Var& v : inputs) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(v.id())].needs_grad;

    switch (kind) {
        case OpKind::matmul: {
            if (inputs.size() != 2) fail(kind, "expects 2 inputs");
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            want_rank(kind, a, 2, "lhs");
            want_rank(kind, b, 2, "rhs");
            if (a.shape[1] != b.shape[0])
                fail(kind, "inner dimensions " + std::to_string(a.shape[1]) + " and " + std::to_string(b.shape[0]) +
                               " do not match");
            int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
            n.out = Tensor::zeros({m, nn});
            mm_acc_nn(a.data.data(), b.data.data(), n.out.data.data(), m, k, nn);
            break;
        }
        case OpKind::conv2d: {
            if (inputs.size() != 2 && inputs.size() != 3) fail(kind, "expects input, kernel and optional bias");
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            want_rank(kind, x, 4, "input");
            want_rank(kind, w, 4, "kernel");
            ConvDims d = conv_dims(x, w, attrs.stride, attrs.pad);
            if (inputs.size() == 3) {
                const Tensor& bias = in(2);
                want_rank(kind, bias, 1, "bias");
                if (bias.shape[0] != d.co)
                    fail(kind, "bias length " + std::to_string(bias.shape[0]) + " vs output channels " +
                                   std::to_string(d.co));
            }
            int K = d.cols(), J = d.positions();
            n.out = Tensor::zeros({d.b, d.co, d.ho, d.wo});
            n.saved.assign(static_cast<size_t>(d.b) * K * J, 0.0);
            for (int b = 0; b < d.b; ++b) {
                double* mt = n.saved.data() + static_cast<size_t>(b) * K * J;
                im2col(x.data.data() + static_cast<size_t>(b) * d.ci * d.h * d.w, d, attrs.stride, attrs.pad, mt);
                double* ob = n.out.data.data() + static_cast<size_t>(b) * d.co * J;
                mm_acc_nn(w.data.data(), mt, ob, d.co, K, J);
                if (inputs.size() == 3) {
                    const Tensor& bias = in(2);
                    for (int co = 0; co < d.co; ++co) {
                        double bv = bias.data[static_cast<size_t>(co)];
                        double* oc = ob + static_cast<size_t>(co) * J;
                        for (int j = 0; j < J; ++j) oc[j] += bv;
                    }
                }
            }
            break;
        }
        case OpKind::add:
        case OpKind::mul: {
            if (inputs.size() != 2) fail(kind, "expects 2 inputs");
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.shape != b.shape)
                fail(kind, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
            n.out = Tensor(a.shape, a.data);
            if (kind == OpKind::add)
                for (size_t i = 0; i < a.data.size(); ++i) n.out.data[i] = a.data[i] + b.data[i];
            else
                for (size_t i = 0; i < a.data.size(); ++i) n.out.data[i] = a.data[i] * b.data[i];
            break;
        }
        case OpKind::scalar_mul: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            n.out = Tensor(a.shape, a.data);
            for (double& v : n.out.data) v *= attrs.scalar;
            break;
        }
        case OpKind::relu: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            n.out = Tensor(a.shape, a.data);
            for (double& v : n.out.data)
                if (v < 0.0) v = 0.0;
            break;
        }
        case OpKind::sigmoid: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            n.out = Tensor(a.shape, a.data);
            for (double& v : n.out.data) {
                if (v >= 0.0) {
                    v = 1.0 / (1.0 + std::exp(-v));
                } else {
                    double e = std::exp(v);
                    v = e / (1.0 + e);
                }
            }
            break;
        }
        case OpKind::exp: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            n.out = Tensor(a.shape, a.data);
            for (double& v : n.out.data) v = std::exp(v);
            break;
        }
        case OpKind::softmax:
        case OpKind::log_softmax: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            check_axis(kind, a, attrs.axis);
            check_finite(kind, a);
            LaneView v = lane_view(a.shape, attrs.axis);
            n.out = Tensor(a.shape, a.data);
            for (int64_t l = 0; l < v.lanes; ++l) {
                int64_t base = lane_base(v, l);
                double mx = -HUGE_VAL;
                for (int i = 0; i < v.len; ++i) mx = std::max(mx, a.data[static_cast<size_t>(base + i * v.inner)]);
                double denom = 0.0;
                for (int i = 0; i < v.len; ++i)
                    denom += std::exp(a.data[static_cast<size_t>(base + i * v.inner)] - mx);
                if (kind == OpKind::softmax) {
                    for (int i = 0; i < v.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * v.inner);
                        n.out.data[idx] = std::exp(a.data[idx] - mx) / denom;
                    }
                } else {
                    double logz = std::log(denom);
                    for (int i = 0; i < v.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * v.inner);
                        n.out.data[idx] = a.data[idx] - mx - logz;
                    }
                }
            }
            break;
        }
        case OpKind::neg_sq_dist: {
            if (inputs.size() != 3) fail(kind, "expects features, codewords and scales");
            const Tensor& z = in(0);
            const Tensor& d = in(1);
            const Tensor& s = in(2);
            want_rank(kind, z, 2, "features");
            want_rank(kind, d, 2, "codewords");
            want_rank(kind, s, 1, "scales");
            if (z.shape[1] != d.shape[1])
                fail(kind, "feature dim " + std::to_string(z.shape[1]) + " vs codeword dim " +
                               std::to_string(d.shape[1]));
            if (s.shape[0] != d.shape[0])
                fail(kind, "scales length " + std::to_string(s.shape[0]) + " vs codeword count " +
                               std::to_string(d.shape[0]));
            int N = z.shape[0], K = d.shape[0], D = z.shape[1];
            n.out = Tensor::zeros({N, K});
            for (int i = 0; i < N; ++i) {
                const double* zi = z.data.data() + static_cast<size_t>(i) * D;
                for (int k = 0; k < K; ++k) {
                    const double* dk = d.data.data() + static_cast<size_t>(k) * D;
                    double sq = 0.0;
                    for (int c = 0; c < D; ++c) {
                        double r = zi[c] - dk[c];
                        sq += r * r;
                    }
                    n.out.data[static_cast<size_t>(i) * K + k] = -s.data[static_cast<size_t>(k)] * sq;
                }
            }
            break;
        }
        case OpKind::reduce_sum: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            std::vector<int> axes = attrs.axes;
            std::sort(axes.begin(), axes.end());
            axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
            for (int ax : axes)
                if (ax < 0 || ax >= a.rank())
                    fail(kind, "axis " + std::to_string(ax) + " out of range for shape " + shape_str(a.shape));
            Shape os;
            for (int i = 0; i < a.rank(); ++i)
                if (!std::binary_search(axes.begin(), axes.end(), i)) os.push_back(a.shape[static_cast<size_t>(i)]);
            n.out = Tensor::zeros(os);
            n.attrs.axes = axes;
            std::vector<int64_t> ist = row_strides(a.shape);
            std::vector<int64_t> map(static_cast<size_t>(a.rank()), 0);  // input axis -> output stride
            {
                std::vector<int64_t> ost = row_strides(os);
                size_t oi = 0;
                for (int i = 0; i < a.rank(); ++i) {
                    if (std::binary_search(axes.begin(), axes.end(), i)) {
                        map[static_cast<size_t>(i)] = 0;
                    } else {
                        map[static_cast<size_t>(i)] = ost.empty() ? 0 : ost[oi];
                        ++oi;
                    }
                }
            }
            for (int64_t idx = 0; idx < a.size(); ++idx) {
                int64_t rem = idx, oidx = 0;
                for (int i = 0; i < a.rank(); ++i) {
                    int64_t coord = rem / ist[static_cast<size_t>(i)];
                    rem %= ist[static_cast<size_t>(i)];
                    oidx += coord * map[static_cast<size_t>(i)];
                }
                n.out.data[static_cast<size_t>(oidx)] += a.data[static_cast<size_t>(idx)];
            }
            break;
        }
        case OpKind::batchnorm2d: {
            if (inputs.size() != 3) fail(kind, "expects input, gamma and beta");
            const Tensor& x = in(0);
            const Tensor& gm = in(1);
            const Tensor& bt = in(2);
            want_rank(kind, x, 4, "input");
            want_rank(kind, gm, 1, "gamma");
            want_rank(kind, bt, 1, "beta");
            int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
            if (gm.shape[0] != C || bt.shape[0] != C)
                fail(kind, "affine parameters sized " + std::to_string(gm.shape[0]) + "/" +
                               std::to_string(bt.shape[0]) + " vs " + std::to_string(C) + " channels");
            BatchNormState* st = attrs.bn;
            if (st == nullptr) fail(kind, "missing running-statistics state");
            if (st->channels() == 0) st->init(C);
            if (st->channels() != C)
                fail(kind, "state has " + std::to_string(st->channels()) + " channels, input has " +
                               std::to_string(C));
            int64_t plane = static_cast<int64_t>(H) * W;
            int64_t m = static_cast<int64_t>(B) * plane;
            n.out = Tensor::zeros(x.shape);
            n.saved.assign(static_cast<size_t>(2 * C), 0.0);  // per-channel mean, invstd
            for (int c = 0; c < C; ++c) {
                double mean, var;
                if (attrs.training) {
                    double sum = 0.0, sq = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const double* p = x.data.data() + (static_cast<int64_t>(b) * C + c) * plane;
                        for (int64_t i = 0; i < plane; ++i) {
                            sum += p[i];
                            sq += p[i] * p[i];
                        }
                    }
                    mean = sum / static_cast<double>(m);
                    var = sq / static_cast<double>(m) - mean * mean;
                    if (var < 0.0) var = 0.0;
                    st->running_mean[static_cast<size_t>(c)] =
                        (1.0 - attrs.momentum) * st->running_mean[static_cast<size_t>(c)] + attrs.momentum * mean;
                    st->running_var[static_cast<size_t>(c)] =
                        (1.0 - attrs.momentum) * st->running_var[static_cast<size_t>(c)] + attrs.momentum * var;
                } else {
                    mean = st->running_mean[static_cast<size_t>(c)];
                    var = st->running_var[static_cast<size_t>(c)];
                }
                double inv = 1.0 / std::sqrt(var + attrs.eps);
                n.saved[static_cast<size_t>(c)] = mean;
                n.saved[static_cast<size_t>(C + c)] = inv;
                double g = gm.data[static_cast<size_t>(c)], bb = bt.data[static_cast<size_t>(c)];
                for (int b = 0; b < B; ++b) {
                    const double* p = x.data.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    double* q = n.out.data.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) q[i] = (p[i] - mean) * inv * g + bb;
                }
            }
            break;
        }
        case OpKind::bilinear_resize: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& x = in(0);
            want_rank(kind, x, 4, "input");
            if (attrs.target.size() != 2 || attrs.target[0] < 1 || attrs.target[1] < 1)
                fail(kind, "target size must be two positive dims");
            int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
            int th = attrs.target[0], tw = attrs.target[1];
            n.out = Tensor::zeros({B, C, th, tw});
            std::vector<int> y0(static_cast<size_t>(th)), y1(static_cast<size_t>(th));
            std::vector<double> wy(static_cast<size_t>(th));
            std::vector<int> x0(static_cast<size_t>(tw)), x1(static_cast<size_t>(tw));
            std::vector<double> wx(static_cast<size_t>(tw));
            double sh = static_cast<double>(H) / th, sw = static_cast<double>(W) / tw;
            for (int y = 0; y < th; ++y) {
                double sy = (y + 0.5) * sh - 0.5;
                sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
                y0[static_cast<size_t>(y)] = static_cast<int>(sy);
                y1[static_cast<size_t>(y)] = std::min(y0[static_cast<size_t>(y)] + 1, H - 1);
                wy[static_cast<size_t>(y)] = sy - y0[static_cast<size_t>(y)];
            }
            for (int xo = 0; xo < tw; ++xo) {
                double sx = (xo + 0.5) * sw - 0.5;
                sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
                x0[static_cast<size_t>(xo)] = static_cast<int>(sx);
                x1[static_cast<size_t>(xo)] = std::min(x0[static_cast<size_t>(xo)] + 1, W - 1);
                wx[static_cast<size_t>(xo)] = sx - x0[static_cast<size_t>(xo)];
            }
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const double* p = x.data.data() + (static_cast<int64_t>(b) * C + c) * H * W;
                    double* q = n.out.data.data() + (static_cast<int64_t>(b) * C + c) * th * tw;
                    for (int y = 0; y < th; ++y) {
                        const double* r0 = p + static_cast<int64_t>(y0[static_cast<size_t>(y)]) * W;
                        const double* r1 = p + static_cast<int64_t>(y1[static_cast<size_t>(y)]) * W;
                        double fy = wy[static_cast<size_t>(y)];
                        double* qq = q + static_cast<int64_t>(y) * tw;
                        for (int xo = 0; xo < tw; ++xo) {
                            double fx = wx[static_cast<size_t>(xo)];
                            double top = r0[x0[static_cast<size_t>(xo)]] * (1 - fx) + r0[x1[static_cast<size_t>(xo)]] * fx;
                            double bot = r1[x0[static_cast<size_t>(xo)]] * (1 - fx) + r1[x1[static_cast<size_t>(xo)]] * fx;
                            qq[xo] = top * (1 - fy) + bot * fy;
                        }
                    }
                }
            break;
        }
        case OpKind::concat: {
            if (inputs.empty()) fail(kind, "expects at least 1 input");
            const Tensor& first = in(0);
            int ax = attrs.axis;
            check_axis(kind, first, ax);
            int total = 0;
            for (size_t i = 0; i < inputs.size(); ++i) {
                const Tensor& t = in(i);
                if (t.rank() != first.rank())
                    fail(kind, "rank mismatch " + shape_str(t.shape) + " vs " + shape_str(first.shape));
                for (int dim = 0; dim < first.rank(); ++dim)
                    if (dim != ax && t.shape[static_cast<size_t>(dim)] != first.shape[static_cast<size_t>(dim)])
                        fail(kind, "dimension " + std::to_string(dim) + " mismatch " + shape_str(t.shape) +
                                       " vs " + shape_str(first.shape));
                total += t.shape[static_cast<size_t>(ax)];
            }
            Shape os = first.shape;
            os[static_cast<size_t>(ax)] = total;
            n.out = Tensor::zeros(os);
            int64_t inner = 1;
            for (int i = ax + 1; i < first.rank(); ++i) inner *= first.shape[static_cast<size_t>(i)];
            int64_t outer = 1;
            for (int i = 0; i < ax; ++i) outer *= first.shape[static_cast<size_t>(i)];
            int64_t out_row = static_cast<int64_t>(total) * inner;
            int64_t off = 0;
            for (size_t i = 0; i < inputs.size(); ++i) {
                const Tensor& t = in(i);
                int64_t rows = t.shape[static_cast<size_t>(ax)] * inner;
                for (int64_t o = 0; o < outer; ++o)
                    std::memcpy(n.out.data.data() + o * out_row + off, t.data.data() + o * rows,
                                static_cast<size_t>(rows) * sizeof(double));
                off += rows;
            }
            break;
        }
        case OpKind::reshape: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            Shape os(attrs.target.begin(), attrs.target.end());
            if (numel(os) != a.size())
                fail(kind, "cannot reshape " + shape_str(a.shape) + " to " + shape_str(os));
            n.out = Tensor(os, a.data);
            break;
        }
        case OpKind::transpose: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            const std::vector<int>& perm = attrs.axes;
            if (static_cast<int>(perm.size()) != a.rank())
                fail(kind, "permutation size " + std::to_string(perm.size()) + " vs rank " +
                               std::to_string(a.rank()));
            std::vector<bool> seen(static_cast<size_t>(a.rank()), false);
            for (int p : perm) {
                if (p < 0 || p >= a.rank() || seen[static_cast<size_t>(p)])
                    fail(kind, "invalid permutation for shape " + shape_str(a.shape));
                seen[static_cast<size_t>(p)] = true;
            }
            Shape os(static_cast<size_t>(a.rank()));
            for (int i = 0; i < a.rank(); ++i) os[static_cast<size_t>(i)] = a.shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];
            n.out = Tensor::zeros(os);
            if (a.rank() == 2 && perm[0] == 1 && perm[1] == 0) {
                int R = a.shape[0], Cc = a.shape[1];
                for (int i = 0; i < R; ++i)
                    for (int j = 0; j < Cc; ++j)
                        n.out.data[static_cast<size_t>(j) * R + i] = a.data[static_cast<size_t>(i) * Cc + j];
            } else {
                std::vector<int64_t> ist = row_strides(a.shape);
                std::vector<int64_t> ost = row_strides(os);
                for (int64_t idx = 0; idx < a.size(); ++idx) {
                    // decompose the output index, gather from the permuted input position
                    int64_t rem = idx, iidx = 0;
                    for (int i = 0; i < a.rank(); ++i) {
                        int64_t coord = rem / ost[static_cast<size_t>(i)];
                        rem %= ost[static_cast<size_t>(i)];
                        iidx += coord * ist[static_cast<size_t>(perm[static_cast<size_t>(i)])];
                    }
                    n.out.data[static_cast<size_t>(idx)] = a.data[static_cast<size_t>(iidx)];
                }
            }
            break;
        }
        case OpKind::slice: {
            if (inputs.size() != 1) fail(kind, "expects 1 input");
            const Tensor& a = in(0);
            check_axis(kind, a, attrs.axis);
            int len = a.shape[static_cast<size_t>(attrs.axis)];
            if (attrs.start < 0 || attrs.length < 1 || attrs.start + attrs.length > len)
                fail(kind, "range [" + std::to_string(attrs.start) + ", " +
                               std::to_string(attrs.start + attrs.length) + ") out of bounds for axis size " +
                               std::to_string(len));
            Shape os = a.shape;
            os[static_cast<size_t>(attrs.axis)] = attrs.length;
            n.out = Tensor::zeros(os);
            int64_t inner = 1;
            for (int i = attrs.axis + 1; i < a.rank(); ++i) inner *= a.shape[static_cast<size_t>(i)];
            int64_t outer = 1;
            for (int i = 0; i < attrs.axis; ++i) outer *= a.shape[static_cast<size_t>(i)];
            int64_t in_row = static_cast<int64_t>(len) * inner;
            int64_t out_row = static_cast<int64_t>(attrs.length) * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::memcpy(n.out.data.data() + o * out_row,
                            a.data.data() + o * in_row + static_cast<int64_t>(attrs.start) * inner,
                            static_cast<size_t>(out_row) * sizeof(double));
            break;
        }
        case OpKind::leaf:
        default:
            fail(kind, "unknown or non-applicable op kind");
    }

    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(const Var& loss) {
    if (!loss.valid() || loss.graph() != this) throw std::runtime_error("backward: loss is not a node of this graph");
    check_id(loss.id());
    const Node& ln = nodes_[static_cast<size_t>(loss.id())];
    if (ln.out.size() != 1)
        throw std::runtime_error("backward: loss must be scalar, got shape " + shape_str(ln.out.shape));
    grads_.assign(nodes_.size(), {});
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].needs_grad) grads_[i].assign(nodes_[i].out.data.size(), 0.0);
    ran_backward_ = true;
    if (!ln.needs_grad) return;  // loss detached from every trainable input
    grads_[static_cast<size_t>(loss.id())][0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
        const Node& node = nodes_[static_cast<size_t>(id)];
        if (!node.needs_grad || node.kind == OpKind::leaf) continue;
        backward_node(id);
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const std::vector<double>& go = grads_[static_cast<size_t>(id)];
    auto in = [&](size_t i) -> const Tensor& { return nodes_[static_cast<size_t>(n.inputs[i])].out; };
    auto gin = [&](size_t i) -> std::vector<double>* {
        int nid = n.inputs[i];
        if (!nodes_[static_cast<size_t>(nid)].needs_grad) return nullptr;
        return &grads_[static_cast<size_t>(nid)];
    };

    switch (n.kind) {
        case OpKind::matmul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
            if (auto* ga = gin(0)) mm_acc_nt(go.data(), b.data.data(), ga->data(), m, nn, k);
            if (auto* gb = gin(1)) mm_acc_tn(a.data.data(), go.data(), gb->data(), m, k, nn);
            break;
        }
        case OpKind::conv2d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            ConvDims d = conv_dims(x, w, n.attrs.stride, n.attrs.pad);
            int K = d.cols(), J = d.positions();
            std::vector<double>* gx = gin(0);
            std::vector<double>* gw = gin(1);
            std::vector<double>* gb = n.inputs.size() == 3 ? gin(2) : nullptr;
            std::vector<double> dmt;
            if (gx) dmt.assign(static_cast<size_t>(K) * J, 0.0);
            for (int b = 0; b < d.b; ++b) {
                const double* mt = n.saved.data() + static_cast<size_t>(b) * K * J;
                const double* gob = go.data() + static_cast<size_t>(b) * d.co * J;
                if (gw) mm_acc_nt(gob, mt, gw->data(), d.co, J, K);
                if (gx) {
                    std::fill(dmt.begin(), dmt.end(), 0.0);
                    mm_acc_tn(w.data.data(), gob, dmt.data(), d.co, K, J);
                    col2im_acc(dmt.data(), d, n.attrs.stride, n.attrs.pad,
                               gx->data() + static_cast<size_t>(b) * d.ci * d.h * d.w);
                }
                if (gb)
                    for (int co = 0; co < d.co; ++co) {
                        const double* gc = gob + static_cast<size_t>(co) * J;
                        double acc = 0.0;
                        for (int j = 0; j < J; ++j) acc += gc[j];
                        (*gb)[static_cast<size_t>(co)] += acc;
                    }
            }
            break;
        }
        case OpKind::add: {
            for (size_t s = 0; s < 2; ++s)
                if (auto* g = gin(s))
                    for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
            break;
        }
        case OpKind::mul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (auto* ga = gin(0))
                for (size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i] * b.data[i];
            if (auto* gb = gin(1))
                for (size_t i = 0; i < go.size(); ++i) (*gb)[i] += go[i] * a.data[i];
            break;
        }
        case OpKind::scalar_mul: {
            if (auto* g = gin(0))
                for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * n.attrs.scalar;
            break;
        }
        case OpKind::relu: {
            const Tensor& a = in(0);
            if (auto* g = gin(0))
                for (size_t i = 0; i < go.size(); ++i)
                    if (a.data[i] > 0.0) (*g)[i] += go[i];  // subgradient at 0 is 0
            break;
        }
        case OpKind::sigmoid: {
            if (auto* g = gin(0))
                for (size_t i = 0; i < go.size(); ++i) {
                    double s = n.out.data[i];
                    (*g)[i] += go[i] * s * (1.0 - s);
                }
            break;
        }
        case OpKind::exp: {
            if (auto* g = gin(0))
                for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * n.out.data[i];
            break;
        }
        case OpKind::softmax: {
            if (auto* g = gin(0)) {
                LaneView v = lane_view(n.out.shape, n.attrs.axis);
                for (int64_t l = 0; l < v.lanes; ++l) {
                    int64_t base = lane_base(v, l);
                    double dot = 0.0;
                    for (int i = 0; i < v.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * v.inner);
                        dot += go[idx] * n.out.data[idx];
                    }
                    for (int i = 0; i < v.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * v.inner);
                        (*g)[idx] += n.out.data[idx] * (go[idx] - dot);
                    }
                }
            }
            break;
        }
        case OpKind::log_softmax: {
            if (auto* g = gin(0)) {
                LaneView v = lane_view(n.out.shape, n.attrs.axis);
                for (int64_t l = 0; l < v.lanes; ++l) {
                    int64_t base = lane_base(v, l);
                    double gsum = 0.0;
                    for (int i = 0; i < v.len; ++i) gsum += go[static_cast<size_t>(base + i * v.inner)];
                    for (int i = 0; i < v.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * v.inner);
                        (*g)[idx] += go[idx] - std::exp(n.out.data[idx]) * gsum;
                    }
                }
            }
            break;
        }
        case OpKind::neg_sq_dist: {
            const Tensor& z = in(0);
            const Tensor& d = in(1);
            const Tensor& s = in(2);
            int N = z.shape[0], K = d.shape[0], D = z.shape[1];
            std::vector<double>* gz = gin(0);
            std::vector<double>* gd = gin(1);
            std::vector<double>* gs = gin(2);
            for (int i = 0; i < N; ++i) {
                const double* zi = z.data.data() + static_cast<size_t>(i) * D;
                for (int k = 0; k < K; ++k) {
                    double g = go[static_cast<size_t>(i) * K + k];
                    if (g == 0.0) continue;
                    const double* dk = d.data.data() + static_cast<size_t>(k) * D;
                    double sk = s.data[static_cast<size_t>(k)];
                    double sq = 0.0;
                    for (int c = 0; c < D; ++c) {
                        double r = zi[c] - dk[c];
                        sq += r * r;
                        double t = g * 2.0 * sk * r;
                        if (gz) (*gz)[static_cast<size_t>(i) * D + c] -= t;
                        if (gd) (*gd)[static_cast<size_t>(k) * D + c] += t;
                    }
                    if (gs) (*gs)[static_cast<size_t>(k)] -= g * sq;
                }
            }
            break;
        }
        case OpKind::reduce_sum: {
            if (auto* g = gin(0)) {
                const Tensor& a = in(0);
                const std::vector<int>& axes = n.attrs.axes;
                std::vector<int64_t> ist = row_strides(a.shape);
                std::vector<int64_t> map(static_cast<size_t>(a.rank()), 0);
                {
                    std::vector<int64_t> ost = row_strides(n.out.shape);
                    size_t oi = 0;
                    for (int i = 0; i < a.rank(); ++i) {
                        if (std::binary_search(axes.begin(), axes.end(), i))
                            map[static_cast<size_t>(i)] = 0;
                        else
                            map[static_cast<size_t>(i)] = ost.empty() ? 0 : ost[oi++];
                    }
                }
                for (int64_t idx = 0; idx < a.size(); ++idx) {
                    int64_t rem = idx, oidx = 0;
                    for (int i = 0; i < a.rank(); ++i) {
                        int64_t coord = rem / ist[static_cast<size_t>(i)];
                        rem %= ist[static_cast<size_t>(i)];
                        oidx += coord * map[static_cast<size_t>(i)];
                    }
                    (*g)[static_cast<size_t>(idx)] += go[static_cast<size_t>(oidx)];
                }
            }
            break;
        }
        case OpKind::batchnorm2d: {
            const Tensor& x = in(0);
            const Tensor& gm = in(1);
            int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
            int64_t plane = static_cast<int64_t>(H) * W;
            int64_t m = static_cast<int64_t>(B) * plane;
            std::vector<double>* gx = gin(0);
            std::vector<double>* gg = gin(1);
            std::vector<double>* gb = gin(2);
            for (int c = 0; c < C; ++c) {
                double mean = n.saved[static_cast<size_t>(c)];
                double inv = n.saved[static_cast<size_t>(C + c)];
                double gamma = gm.data[static_cast<size_t>(c)];
                double sum_g = 0.0, sum_gx = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* xp = x.data.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    const double* gp = go.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * (xp[i] - mean) * inv;
                    }
                }
                if (gg) (*gg)[static_cast<size_t>(c)] += sum_gx;
                if (gb) (*gb)[static_cast<size_t>(c)] += sum_g;
                if (gx) {
                    if (n.attrs.training) {
                        double mg = sum_g / static_cast<double>(m);
                        double mgx = sum_gx / static_cast<double>(m);
                        for (int b = 0; b < B; ++b) {
                            const double* xp = x.data.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            const double* gp = go.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            double* dp = gx->data() + (static_cast<int64_t>(b) * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i) {
                                double xhat = (xp[i] - mean) * inv;
                                dp[i] += gamma * inv * (gp[i] - mg - xhat * mgx);
                            }
                        }
                    } else {
                        double k = gamma * inv;
                        for (int b = 0; b < B; ++b) {
                            const double* gp = go.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            double* dp = gx->data() + (static_cast<int64_t>(b) * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i) dp[i] += k * gp[i];
                        }
                    }
                }
            }
            break;
        }
        case OpKind::bilinear_resize: {
            if (auto* g = gin(0)) {
                const Tensor& x = in(0);
                int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
                int th = n.attrs.target[0], tw = n.attrs.target[1];
                double sh = static_cast<double>(H) / th, sw = static_cast<double>(W) / tw;
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        double* gp = g->data() + (static_cast<int64_t>(b) * C + c) * H * W;
                        const double* op = go.data() + (static_cast<int64_t>(b) * C + c) * th * tw;
                        for (int y = 0; y < th; ++y) {
                            double sy = (y + 0.5) * sh - 0.5;
                            sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
                            int yy0 = static_cast<int>(sy);
                            int yy1 = std::min(yy0 + 1, H - 1);
                            double fy = sy - yy0;
                            for (int xo = 0; xo < tw; ++xo) {
                                double sx = (xo + 0.5) * sw - 0.5;
                                sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
                                int xx0 = static_cast<int>(sx);
                                int xx1 = std::min(xx0 + 1, W - 1);
                                double fx = sx - xx0;
                                double gv = op[static_cast<int64_t>(y) * tw + xo];
                                gp[static_cast<int64_t>(yy0) * W + xx0] += gv * (1 - fy) * (1 - fx);
                                gp[static_cast<int64_t>(yy0) * W + xx1] += gv * (1 - fy) * fx;
                                gp[static_cast<int64_t>(yy1) * W + xx0] += gv * fy * (1 - fx);
                                gp[static_cast<int64_t>(yy1) * W + xx1] += gv * fy * fx;
                            }
                        }
                    }
            }
            break;
        }
        case OpKind::concat: {
            const Tensor& first = in(0);
            int ax = n.attrs.axis;
            int64_t inner = 1;
            for (int i = ax + 1; i < first.rank(); ++i) inner *= first.shape[static_cast<size_t>(i)];
            int64_t outer = 1;
            for (int i = 0; i < ax; ++i) outer *= first.shape[static_cast<size_t>(i)];
            int64_t out_row = n.out.shape[static_cast<size_t>(ax)] * inner;
            int64_t off = 0;
            for (size_t s = 0; s < n.inputs.size(); ++s) {
                const Tensor& t = in(s);
                int64_t rows = t.shape[static_cast<size_t>(ax)] * inner;
                if (auto* g = gin(s))
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = go.data() + o * out_row + off;
                        double* dst = g->data() + o * rows;
                        for (int64_t i = 0; i < rows; ++i) dst[i] += src[i];
                    }
                off += rows;
            }
            break;
        }
        case OpKind::reshape: {
            if (auto* g = gin(0))
                for (size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i];
            break;
        }
        case OpKind::transpose: {
            if (auto* g = gin(0)) {
                const Tensor& a = in(0);
                const std::vector<int>& perm = n.attrs.axes;
                std::vector<int64_t> ist = row_strides(a.shape);
                std::vector<int64_t> ost = row_strides(n.out.shape);
                for (int64_t idx = 0; idx < a.size(); ++idx) {
                    int64_t rem = idx, iidx = 0;
                    for (int i = 0; i < a.rank(); ++i) {
                        int64_t coord = rem / ost[static_cast<size_t>(i)];
                        rem %= ost[static_cast<size_t>(i)];
                        iidx += coord * ist[static_cast<size_t>(perm[static_cast<size_t>(i)])];
                    }
                    (*g)[static_cast<size_t>(iidx)] += go[static_cast<size_t>(idx)];
                }
            }
            break;
        }
        case OpKind::slice: {
            if (auto* g = gin(0)) {
                const Tensor& a = in(0);
                int ax = n.attrs.axis;
                int64_t inner = 1;
                for (int i = ax + 1; i < a.rank(); ++i) inner *= a.shape[static_cast<size_t>(i)];
                int64_t outer = 1;
                for (int i = 0; i < ax; ++i) outer *= a.shape[static_cast<size_t>(i)];
                int64_t in_row = a.shape[static_cast<size_t>(ax)] * inner;
                int64_t out_row = static_cast<int64_t>(n.attrs.length) * inner;
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = go.data() + o * out_row;
                    double* dst = g->data() + o * in_row + static_cast<int64_t>(n.attrs.start) * inner;
                    for (int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
                }
            }
            break;
        }
        default:
            throw std::runtime_error(std::string("backward: unsupported op ") + op_name(n.kind));
    }
}

Var matmul(Var a, Var b) { return a.graph()->forward_op(OpKind::matmul, {a, b}); }

Var conv2d(Var x, Var w, int stride, int pad) {
    OpAttrs at;
    at.stride = stride;
    at.pad = pad;
    return x.graph()->forward_op(OpKind::conv2d, {x, w}, at);
}

Var conv2d(Var x, Var w, Var bias, int stride, int pad) {
    OpAttrs at;
    at.stride = stride;
    at.pad = pad;
    return x.graph()->forward_op(OpKind::conv2d, {x, w, bias}, at);
}

Var add(Var a, Var b) { return a.graph()->forward_op(OpKind::add, {a, b}); }
Var sub(Var a, Var b) { return add(a, smul(b, -1.0)); }
Var mul(Var a, Var b) { return a.graph()->forward_op(OpKind::mul, {a, b}); }

Var smul(Var a, double c) {
    OpAttrs at;
    at.scalar = c;
    return a.graph()->forward_op(OpKind::scalar_mul, {a}, at);
}

Var relu(Var x) { return x.graph()->forward_op(OpKind::relu, {x}); }
Var sigmoid(Var x) { return x.graph()->forward_op(OpKind::sigmoid, {x}); }
Var vexp(Var x) { return x.graph()->forward_op(OpKind::exp, {x}); }

Var softmax(Var x, int axis) {
    OpAttrs at;
    at.axis = axis;
    return x.graph()->forward_op(OpKind::softmax, {x}, at);
}

Var log_softmax(Var x, int axis) {
    OpAttrs at;
    at.axis = axis;
    return x.graph()->forward_op(OpKind::log_softmax, {x}, at);
}

Var neg_sq_dist(Var z, Var d, Var s) { return z.graph()->forward_op(OpKind::neg_sq_dist, {z, d, s}); }

Var reduce_sum(Var x, std::vector<int> axes) {
    OpAttrs at;
    at.axes = std::move(axes);
    return x.graph()->forward_op(OpKind::reduce_sum, {x}, at);
}

Var sum_all(Var x) {
    std::vector<int> axes(static_cast<size_t>(x.value().rank()));
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce_sum(x, std::move(axes));
}

Var batch_norm2d(Var x, Var gamma, Var beta, BatchNormState& state, bool training, double momentum, double eps) {
    OpAttrs at;
    at.training = training;
    at.momentum = momentum;
    at.eps = eps;
    at.bn = &state;
    return x.graph()->forward_op(OpKind::batchnorm2d, {x, gamma, beta}, at);
}

Var resize_bilinear(Var x, int out_h, int out_w) {
    OpAttrs at;
    at.target = {out_h, out_w};
    return x.graph()->forward_op(OpKind::bilinear_resize, {x}, at);
}

Var concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw std::runtime_error("concat: expects at least 1 input");
    OpAttrs at;
    at.axis = axis;
    return xs[0].graph()->forward_op(OpKind::concat, xs, at);
}

Var reshape(Var x, Shape target) {
    OpAttrs at;
    at.target.assign(target.begin(), target.end());
    return x.graph()->forward_op(OpKind::reshape, {x}, at);
}

Var transpose(Var x, std::vector<int> perm) {
    OpAttrs at;
    at.axes = std::move(perm);
    return x.graph()->forward_op(OpKind::transpose, {x}, at);
}

Var transpose2d(Var x) { return transpose(x, {1, 0}); }

Var slice(Var x, int axis, int start, int length) {
    OpAttrs at;
    at.axis = axis;
    at.start = start;
    at.length = length;
    return x.graph()->forward_op(OpKind::slice, {x}, at);
}

}  // namespace robseg
