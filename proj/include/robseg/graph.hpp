#pragma once

#include <vector>

#include "robseg/tensor.hpp"

namespace robseg {

// Reverse-mode tape. A Graph records one forward pass eagerly; backward walks
// the tape in reverse and accumulates gradients per node. One graph instance
// is single-threaded; independent graphs may run concurrently as long as they
// share no mutable state (parameters are read-only during evaluation).

enum class OpKind {
    leaf,
    matmul,
    conv2d,
    add,
    mul,
    scalar_mul,
    relu,
    sigmoid,
    exp,
    softmax,
    log_softmax,
    neg_sq_dist,
    reduce_sum,
    batchnorm2d,
    bilinear_resize,
    concat,
    reshape,
    transpose,
    slice,
};

const char* op_name(OpKind k);

// Running statistics for one batch-norm layer. Owned by the layer, referenced
// by the op; training-mode forward updates them, eval-mode forward only reads.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    void init(int channels) {
        running_mean.assign(static_cast<size_t>(channels), 0.0);
        running_var.assign(static_cast<size_t>(channels), 1.0);
    }
    int channels() const { return static_cast<int>(running_mean.size()); }
};

struct OpAttrs {
    int axis = 0;
    std::vector<int> axes;    // transpose permutation / reduce_sum axes
    std::vector<int> target;  // reshape shape / bilinear {h, w}
    int stride = 1;
    int pad = 0;
    int start = 0;
    int length = 0;
    double scalar = 0.0;
    bool training = false;
    double eps = 1e-5;
    double momentum = 0.1;
    BatchNormState* bn = nullptr;
};

class Graph;

// Handle to a node inside a Graph.
class Var {
public:
    Var() = default;
    Var(Graph* g, int id) : g_(g), id_(id) {}

    int id() const { return id_; }
    Graph* graph() const { return g_; }
    bool valid() const { return g_ != nullptr && id_ >= 0; }

    const Tensor& value() const;
    const Shape& shape() const;

private:
    Graph* g_ = nullptr;
    int id_ = -1;
};

class Graph {
public:
    Var input(Tensor t, bool needs_grad);
    Var constant(Tensor t) { return input(std::move(t), false); }

    // Central dispatcher: validates shapes, runs the forward kernel, records
    // the node. Throws on unknown kinds and on shape mismatches, naming the
    // op and the offending dimensions.
    Var forward_op(OpKind kind, const std::vector<Var>& inputs, const OpAttrs& attrs = OpAttrs{});

    // Seeds a scalar loss with 1 and accumulates gradients bottom-up for all
    // nodes on a needs-grad path. Callable once per recorded tape.
    void backward(const Var& loss);

    const Tensor& value(int id) const;
    bool needs_grad(int id) const;

    // Gradient of the loss w.r.t. a node. Requires a prior backward() call;
    // throws for detached nodes (needs_grad == false).
    Tensor grad(const Var& v) const;
    const std::vector<double>& grad_data(int id) const;

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        OpAttrs attrs;
        std::vector<int> inputs;
        Tensor out;
        bool needs_grad = false;
        std::vector<double> saved;  // op-specific intermediates for backward
    };

    void check_id(int id) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool ran_backward_ = false;
};

// Op wrappers.
Var matmul(Var a, Var b);
Var conv2d(Var x, Var w, int stride = 1, int pad = 0);
Var conv2d(Var x, Var w, Var bias, int stride = 1, int pad = 0);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var smul(Var a, double c);
Var relu(Var x);
Var sigmoid(Var x);
Var vexp(Var x);
Var softmax(Var x, int axis);
Var log_softmax(Var x, int axis);
// logits[i][k] = -s[k] * ||z_i - d_k||^2 for z [N,D], d [K,D], s [K]
Var neg_sq_dist(Var z, Var d, Var s);
Var reduce_sum(Var x, std::vector<int> axes);
Var sum_all(Var x);
Var batch_norm2d(Var x, Var gamma, Var beta, BatchNormState& state, bool training,
                 double momentum = 0.1, double eps = 1e-5);
Var resize_bilinear(Var x, int out_h, int out_w);
Var concat(const std::vector<Var>& xs, int axis);
Var reshape(Var x, Shape target);
Var transpose(Var x, std::vector<int> perm);
Var transpose2d(Var x);
Var slice(Var x, int axis, int start, int length);

}  // namespace robseg
