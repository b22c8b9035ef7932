#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "robseg/gradcheck.hpp"
#include "robseg/graph.hpp"
#include "robseg/params.hpp"
#include "robseg/rng.hpp"
#include "robseg/tensor.hpp"

using namespace robseg;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// values bounded away from zero so relu kinks never sit under a perturbation
Tensor random_signed_away_from_zero(Rng& rng, Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) v = rng.uniform(0.1, 1.0) * (rng.coin() ? 1.0 : -1.0);
    return t;
}

}  // namespace

TEST_CASE("tensor construction validates shape against data") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::runtime_error);
    CHECK_THROWS_AS(Tensor({0}, {}), std::runtime_error);
    CHECK_THROWS_AS(Tensor({2, -1}, {1.0, 2.0}), std::runtime_error);
    Tensor s = Tensor::scalar(5.0);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.data[0] == 5.0);
}

TEST_CASE("matmul against identity returns the input") {
    Graph g;
    Var a = g.constant(Tensor({2, 2}, {1.5, -2.0, 3.25, 0.5}));
    Var id = g.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    Var c = matmul(a, id);
    CHECK(c.value().data == a.value().data);
}

TEST_CASE("matmul small fixed values") {
    Graph g;
    Var a = g.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var b = g.constant(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
    Var c = matmul(a, b);
    CHECK(c.value().shape == Shape{2, 2});
    CHECK(c.value().data == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("matmul rejects mismatched inner dimensions with op name") {
    Graph g;
    Var a = g.constant(Tensor::zeros({2, 3}));
    Var b = g.constant(Tensor::zeros({4, 2}));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), std::runtime_error);
}

TEST_CASE("softmax of a zero vector is uniform") {
    Graph g;
    Var x = g.constant(Tensor({1, 3}, {0.0, 0.0, 0.0}));
    Var s = softmax(x, 1);
    for (double v : s.value().data) CHECK(v == 1.0 / 3.0);
}

TEST_CASE("softmax rows sum to one and shifting logits changes nothing") {
    Rng rng(7);
    Graph g;
    Tensor t = random_tensor(rng, {4, 6}, -30.0, 30.0);
    Tensor shifted = t;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) shifted.data[static_cast<size_t>(r) * 6 + c] += 100.0 * (r + 1);
    Var s1 = softmax(g.constant(t), 1);
    Var s2 = softmax(g.constant(shifted), 1);
    for (int r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 6; ++c) sum += s1.value().data[static_cast<size_t>(r) * 6 + c];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    for (size_t i = 0; i < t.data.size(); ++i)
        CHECK(s1.value().data[i] == doctest::Approx(s2.value().data[i]).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-finite logits and bad axes") {
    Graph g;
    Var inf = g.constant(Tensor({1, 2}, {1.0, HUGE_VAL}));
    CHECK_THROWS_WITH_AS(softmax(inf, 1), doctest::Contains("non-finite"), std::runtime_error);
    Var ok = g.constant(Tensor({1, 2}, {1.0, 2.0}));
    CHECK_THROWS_AS(softmax(ok, 2), std::runtime_error);
    CHECK_THROWS_AS(softmax(ok, -1), std::runtime_error);
}

TEST_CASE("log_softmax equals log of softmax and survives extreme logits") {
    Graph g;
    Var x = g.constant(Tensor({1, 3}, {0.0, 500.0, 1000.0}));
    Var ls = log_softmax(x, 1);
    // direct log(softmax) would round the small entries to log(0)
    CHECK(std::isfinite(ls.value().data[0]));
    CHECK(ls.value().data[0] == doctest::Approx(-1000.0).epsilon(1e-12));
    Var y = g.constant(Tensor({2, 2}, {0.3, -0.2, 1.0, 2.5}));
    Var a = log_softmax(y, 1);
    Var b = softmax(y, 1);
    for (size_t i = 0; i < 4; ++i)
        CHECK(a.value().data[i] == doctest::Approx(std::log(b.value().data[i])).epsilon(1e-12));
}

TEST_CASE("conv2d all-ones 2x2 kernel over all-ones 2x2 image gives 4") {
    Graph g;
    Var x = g.constant(Tensor::full({1, 1, 2, 2}, 1.0));
    Var w = g.constant(Tensor::full({1, 1, 2, 2}, 1.0));
    Var y = conv2d(x, w);
    CHECK(y.value().shape == Shape{1, 1, 1, 1});
    CHECK(y.value().data[0] == 4.0);
}

TEST_CASE("conv2d stride and padding shapes") {
    Graph g;
    Var x = g.constant(Tensor::zeros({2, 3, 8, 8}));
    Var w = g.constant(Tensor::zeros({5, 3, 3, 3}));
    CHECK(conv2d(x, w, 2, 1).value().shape == Shape{2, 5, 4, 4});
    CHECK(conv2d(x, w, 1, 1).value().shape == Shape{2, 5, 8, 8});
    CHECK(conv2d(x, w, 1, 0).value().shape == Shape{2, 5, 6, 6});
    Var wbig = g.constant(Tensor::zeros({1, 3, 9, 9}));
    CHECK_THROWS_WITH_AS(conv2d(x, wbig), doctest::Contains("conv2d"), std::runtime_error);
    Var wch = g.constant(Tensor::zeros({1, 4, 3, 3}));
    CHECK_THROWS_AS(conv2d(x, wch), std::runtime_error);
}

TEST_CASE("conv2d forward matches a direct sliding-window loop") {
    Rng rng(11);
    Tensor x = random_tensor(rng, {2, 3, 5, 6});
    Tensor w = random_tensor(rng, {4, 3, 3, 3});
    Tensor bias = random_tensor(rng, {4});
    int stride = 2, pad = 1;
    Graph g;
    Var y = conv2d(g.constant(x), g.constant(w), g.constant(bias), stride, pad);
    int ho = (5 + 2 * pad - 3) / stride + 1, wo = (6 + 2 * pad - 3) / stride + 1;
    REQUIRE(y.value().shape == Shape{2, 4, ho, wo});
    for (int b = 0; b < 2; ++b)
        for (int co = 0; co < 4; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias.data[static_cast<size_t>(co)];
                    for (int ci = 0; ci < 3; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                                acc += x.data[((static_cast<size_t>(b) * 3 + ci) * 5 + iy) * 6 + ix] *
                                       w.data[((static_cast<size_t>(co) * 3 + ci) * 3 + ky) * 3 + kx];
                            }
                    double got = y.value().data[((static_cast<size_t>(b) * 4 + co) * ho + oy) * wo + ox];
                    CHECK(got == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("gradient of x squared is 2x") {
    for (double xv : {-3.0, -0.5, 0.25, 2.0}) {
        Graph g;
        Var x = g.input(Tensor::scalar(xv), true);
        Var loss = mul(x, x);
        g.backward(loss);
        CHECK(g.grad(x).data[0] == 2.0 * xv);
    }
}

TEST_CASE("sigmoid gradient at zero is exactly one quarter") {
    Graph g;
    Var x = g.input(Tensor::scalar(0.0), true);
    Var loss = sigmoid(x);
    g.backward(loss);
    CHECK(g.grad(x).data[0] == 0.25);
}

TEST_CASE("relu picks the zero subgradient at the kink") {
    Graph g;
    Var x = g.input(Tensor({3}, {-1.0, 0.0, 2.0}), true);
    Var loss = sum_all(relu(x));
    g.backward(loss);
    CHECK(g.grad(x).data == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("backward requires a scalar loss and grads need a prior backward") {
    Graph g;
    Var x = g.input(Tensor({2}, {1.0, 2.0}), true);
    Var y = relu(x);
    CHECK_THROWS_WITH_AS(g.backward(y), doctest::Contains("scalar"), std::runtime_error);
    CHECK_THROWS_WITH_AS(g.grad(x), doctest::Contains("backward"), std::runtime_error);
    Var s = sum_all(y);
    g.backward(s);
    CHECK(g.grad(x).data == std::vector<double>{1.0, 1.0});
}

TEST_CASE("gradient of a detached node is an error") {
    Graph g;
    Var x = g.constant(Tensor({2}, {1.0, 2.0}));
    Var p = g.input(Tensor({2}, {3.0, 4.0}), true);
    Var loss = sum_all(mul(x, p));
    g.backward(loss);
    CHECK(g.grad(p).data == std::vector<double>{1.0, 2.0});
    CHECK_THROWS_WITH_AS(g.grad(x), doctest::Contains("detached"), std::runtime_error);
}

TEST_CASE("matmul chain gradients agree with central differences") {
    Rng rng(3);
    std::vector<Tensor> inputs{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}),
                               random_tensor(rng, {5, 2})};
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var c = matmul(matmul(in[0], in[1]), in[2]);
        return sum_all(mul(c, c));
    };
    GradReport rep = grad_check(build, inputs);
    INFO(rep.detail);
    CHECK(rep.pass);
    CHECK(rep.max_err < 1e-4);
}

TEST_CASE("elementwise op gradients agree with central differences") {
    Rng rng(5);
    std::vector<Tensor> inputs{random_signed_away_from_zero(rng, {3, 4}),
                               random_signed_away_from_zero(rng, {3, 4})};
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var a = relu(in[0]);
        Var b = sigmoid(in[1]);
        Var c = add(mul(a, b), smul(vexp(smul(in[0], 0.3)), 0.5));
        return sum_all(mul(c, c));
    };
    GradReport rep = grad_check(build, inputs);
    INFO(rep.detail);
    CHECK(rep.pass);
}

TEST_CASE("softmax and log_softmax gradients agree with central differences") {
    Rng rng(9);
    std::vector<Tensor> inputs{random_tensor(rng, {4, 5}, -2.0, 2.0)};
    auto weights = Tensor::zeros({4, 5});
    {
        Rng wr(10);
        for (double& v : weights.data) v = wr.uniform(-1.0, 1.0);
    }
    auto build_soft = [&](Graph& g, const std::vector<Var>& in) {
        return sum_all(mul(softmax(in[0], 1), g.constant(weights)));
    };
    auto build_log = [&](Graph& g, const std::vector<Var>& in) {
        return sum_all(mul(log_softmax(in[0], 1), g.constant(weights)));
    };
    CHECK(grad_check(build_soft, inputs).pass);
    CHECK(grad_check(build_log, inputs).pass);
}

TEST_CASE("conv2d gradients agree with central differences") {
    Rng rng(13);
    std::vector<Tensor> inputs{random_tensor(rng, {2, 2, 4, 4}), random_tensor(rng, {3, 2, 3, 3}),
                               random_tensor(rng, {3})};
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var y = conv2d(in[0], in[1], in[2], 2, 1);
        return sum_all(mul(y, y));
    };
    GradReport rep = grad_check(build, inputs);
    INFO(rep.detail);
    CHECK(rep.pass);
}

TEST_CASE("neg_sq_dist matches a direct loop and its gradients check out") {
    Rng rng(17);
    Tensor z = random_tensor(rng, {4, 3});
    Tensor d = random_tensor(rng, {5, 3});
    Tensor s = random_tensor(rng, {5}, 0.2, 1.5);
    {
        Graph g;
        Var out = neg_sq_dist(g.constant(z), g.constant(d), g.constant(s));
        REQUIRE(out.value().shape == Shape{4, 5});
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 5; ++k) {
                double sq = 0.0;
                for (int c = 0; c < 3; ++c) {
                    double r = z.data[static_cast<size_t>(i) * 3 + c] - d.data[static_cast<size_t>(k) * 3 + c];
                    sq += r * r;
                }
                CHECK(out.value().data[static_cast<size_t>(i) * 5 + k] ==
                      doctest::Approx(-s.data[static_cast<size_t>(k)] * sq).epsilon(1e-12));
            }
    }
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var logits = neg_sq_dist(in[0], in[1], in[2]);
        return sum_all(mul(logits, logits));
    };
    GradReport rep = grad_check(build, {z, d, s});
    INFO(rep.detail);
    CHECK(rep.pass);
}

TEST_CASE("reduce_sum collapses the requested axes") {
    Graph g;
    Var x = g.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(reduce_sum(x, {0}).value().data == std::vector<double>{5, 7, 9});
    CHECK(reduce_sum(x, {1}).value().data == std::vector<double>{6, 15});
    Var full = reduce_sum(x, {0, 1});
    CHECK(full.value().rank() == 0);
    CHECK(full.value().data[0] == 21.0);
    CHECK(sum_all(x).value().data[0] == 21.0);
    CHECK_THROWS_AS(reduce_sum(x, {2}), std::runtime_error);
}

TEST_CASE("reduce_sum and movement op gradients agree with central differences") {
    Rng rng(19);
    std::vector<Tensor> inputs{random_tensor(rng, {2, 3, 4})};
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var t = transpose(in[0], {2, 0, 1});          // [4,2,3]
        Var r = reshape(t, {4, 6});
        Var s = slice(r, 0, 1, 2);                    // [2,6]
        Var c = concat({s, s}, 1);                    // [2,12]
        Var red = reduce_sum(c, {1});                 // [2]
        return sum_all(mul(red, red));
    };
    GradReport rep = grad_check(build, inputs);
    INFO(rep.detail);
    CHECK(rep.pass);
}

TEST_CASE("transpose2d flips a matrix") {
    Graph g;
    Var x = g.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var t = transpose2d(x);
    CHECK(t.value().shape == Shape{3, 2});
    CHECK(t.value().data == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK_THROWS_AS(transpose(x, {0, 0}), std::runtime_error);
    CHECK_THROWS_AS(transpose(x, {0}), std::runtime_error);
}

TEST_CASE("concat and slice validate their ranges") {
    Graph g;
    Var a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b = g.constant(Tensor({3, 2}, {5, 6, 7, 8, 9, 10}));
    Var c = concat({a, b}, 0);
    CHECK(c.value().shape == Shape{5, 2});
    CHECK_THROWS_WITH_AS(concat({a, b}, 1), doctest::Contains("concat"), std::runtime_error);
    CHECK(slice(c, 0, 2, 3).value().data == b.value().data);
    CHECK_THROWS_WITH_AS(slice(c, 0, 3, 3), doctest::Contains("slice"), std::runtime_error);
    CHECK_THROWS_AS(reshape(a, {3, 2}), std::runtime_error);
}

TEST_CASE("batch norm standardizes within the batch in training mode") {
    // channel values spread near 1e2 so the eps term distorts variance by
    // only ~1e-7 and the unit-variance check stays meaningful
    Rng rng(23);
    Tensor x = random_tensor(rng, {4, 3, 5, 5}, -100.0, 100.0);
    Graph g;
    BatchNormState st;
    st.init(3);
    Var gamma = g.constant(Tensor::full({3}, 1.0));
    Var beta = g.constant(Tensor::zeros({3}));
    Var y = batch_norm2d(g.constant(x), gamma, beta, st, true);
    int64_t m = 4 * 5 * 5;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 25; ++i) {
                double v = y.value().data[(static_cast<size_t>(b) * 3 + c) * 25 + i];
                sum += v;
                sq += v * v;
            }
        double mean = sum / m;
        double var = sq / m - mean * mean;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batch norm running statistics blend with momentum and drive eval mode") {
    Tensor x({1, 1, 1, 4}, {2.0, 4.0, 6.0, 8.0});  // mean 5, biased var 5
    BatchNormState st;
    st.init(1);
    {
        Graph g;
        Var gamma = g.constant(Tensor::full({1}, 1.0));
        Var beta = g.constant(Tensor::zeros({1}));
        batch_norm2d(g.constant(x), gamma, beta, st, true, 0.1);
    }
    CHECK(st.running_mean[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.5).epsilon(1e-12));
    double rm = st.running_mean[0], rv = st.running_var[0];
    {
        Graph g;
        Var gamma = g.constant(Tensor::full({1}, 2.0));
        Var beta = g.constant(Tensor::full({1}, 1.0));
        Var y = batch_norm2d(g.constant(x), gamma, beta, st, false);
        for (int i = 0; i < 4; ++i) {
            double want = (x.data[static_cast<size_t>(i)] - rm) / std::sqrt(rv + 1e-5) * 2.0 + 1.0;
            CHECK(y.value().data[static_cast<size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
        }
    }
    // eval mode must not touch the buffers
    CHECK(st.running_mean[0] == rm);
    CHECK(st.running_var[0] == rv);
}

TEST_CASE("batch norm gradients agree with central differences in both modes") {
    Rng rng(29);
    std::vector<Tensor> inputs{random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2}, 0.5, 1.5),
                               random_tensor(rng, {2}, -0.5, 0.5)};
    for (bool training : {true, false}) {
        auto build = [training](Graph& g, const std::vector<Var>& in) {
            BatchNormState st;  // fresh per call so perturbations cannot leak between evaluations
            st.init(2);
            st.running_mean = {0.2, -0.1};
            st.running_var = {1.3, 0.8};
            Var y = batch_norm2d(in[0], in[1], in[2], st, training);
            return sum_all(mul(y, y));
        };
        GradReport rep = grad_check(build, inputs);
        INFO("training=", training, " ", rep.detail);
        CHECK(rep.pass);
    }
}

TEST_CASE("bilinear resize reproduces known values and the identity size is exact") {
    Graph g;
    Var x = g.constant(Tensor({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0}));
    Var up = resize_bilinear(x, 4, 4);
    REQUIRE(up.value().shape == Shape{1, 1, 4, 4});
    // corners clamp to source corners; the interior interpolates
    CHECK(up.value().data[0] == 0.0);
    CHECK(up.value().data[3] == 1.0);
    CHECK(up.value().data[12] == 2.0);
    CHECK(up.value().data[15] == 3.0);
    CHECK(up.value().data[5] == doctest::Approx(0.75).epsilon(1e-12));   // (1,1): 0.25 right, 0.25 down
    Var same = resize_bilinear(x, 2, 2);
    CHECK(same.value().data == x.value().data);
}

TEST_CASE("bilinear resize gradients agree with central differences") {
    Rng rng(31);
    std::vector<Tensor> inputs{random_tensor(rng, {1, 2, 3, 3})};
    auto build = [](Graph& g, const std::vector<Var>& in) {
        Var up = resize_bilinear(in[0], 5, 7);
        Var down = resize_bilinear(up, 2, 2);
        return sum_all(mul(down, down));
    };
    GradReport rep = grad_check(build, inputs);
    INFO(rep.detail);
    CHECK(rep.pass);
}

TEST_CASE("gradients accumulate when a node feeds two consumers") {
    Graph g;
    Var x = g.input(Tensor::scalar(3.0), true);
    Var y = add(mul(x, x), smul(x, 4.0));  // x^2 + 4x, derivative 2x + 4
    g.backward(y);
    CHECK(g.grad(x).data[0] == 10.0);
}

TEST_CASE("grad_check flags a nondeterministic objective") {
    int calls = 0;
    auto build = [&calls](Graph& g, const std::vector<Var>& in) {
        return smul(sum_all(in[0]), 1.0 + 0.001 * (calls++));
    };
    GradReport rep = grad_check(build, {Tensor({2}, {1.0, 2.0})});
    CHECK(!rep.pass);
    CHECK(!rep.deterministic);
}

TEST_CASE("parameter registry rejects duplicates and reports counts") {
    ParamRegistry reg;
    reg.add("w", Tensor::zeros({2, 2}));
    reg.add("b", Tensor::zeros({2}), false);
    CHECK_THROWS_WITH_AS(reg.add("w", Tensor::zeros({1})), doctest::Contains("duplicate"),
                         std::runtime_error);
    CHECK(reg.trainable_count() == 4);
    CHECK(reg.find("b") != nullptr);
    CHECK(reg.find("nope") == nullptr);
}

TEST_CASE("checkpoint round-trips parameters and running statistics bit for bit") {
    Rng rng(37);
    ParamRegistry reg;
    reg.add("layer.w", random_tensor(rng, {3, 4}));
    reg.add("layer.b", random_tensor(rng, {4}));
    BatchNormState st;
    st.init(4);
    st.running_mean = {0.1, -0.2, 0.3, -0.4};
    st.running_var = {1.0, 2.0, 0.5, 0.25};
    reg.add_state("layer.bn", &st);

    std::string path = "ckpt_roundtrip.bin";
    reg.save(path);
    std::vector<double> w0 = reg.find("layer.w")->value.data;

    for (double& v : reg.find("layer.w")->value.data) v = 99.0;
    st.running_mean.assign(4, 7.0);
    reg.load(path);
    CHECK(reg.find("layer.w")->value.data == w0);
    CHECK(st.running_mean == std::vector<double>{0.1, -0.2, 0.3, -0.4});
    CHECK(st.running_var == std::vector<double>{1.0, 2.0, 0.5, 0.25});
    std::remove(path.c_str());
}

TEST_CASE("checkpoint load names every mismatched entry") {
    ParamRegistry a;
    a.add("w", Tensor::zeros({2, 2}));
    a.add("only_in_a", Tensor::zeros({1}));
    std::string path = "ckpt_mismatch.bin";
    a.save(path);

    ParamRegistry b;
    b.add("w", Tensor::zeros({2, 3}));
    b.add("only_in_b", Tensor::zeros({1}));
    std::string msg;
    try {
        b.load(path);
    } catch (const std::runtime_error& e) {
        msg = e.what();
    }
    for (const char* piece : {"missing", "only_in_b", "unexpected", "only_in_a", "shape mismatch"}) {
        INFO("expected '", piece, "' in: ", msg);
        CHECK(msg.find(piece) != std::string::npos);
    }
    std::remove(path.c_str());

    ParamRegistry c;
    CHECK_THROWS_WITH_AS(c.load("does_not_exist.bin"), doctest::Contains("cannot open"),
                         std::runtime_error);
}

TEST_CASE("checkpoint loader rejects foreign files") {
    std::string path = "not_a_ckpt.bin";
    {
        std::ofstream f(path, std::ios::binary);
        f << "JUNKJUNKJUNK";
    }
    ParamRegistry reg;
    reg.add("w", Tensor::zeros({1}));
    CHECK_THROWS_WITH_AS(reg.load(path), doctest::Contains("magic"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("fnv1a checksum is stable and order-sensitive") {
    double a[2] = {1.0, 2.0};
    double b[2] = {2.0, 1.0};
    uint64_t ha = fnv1a64(a, sizeof(a));
    CHECK(ha == fnv1a64(a, sizeof(a)));
    CHECK(ha != fnv1a64(b, sizeof(b)));
    CHECK(hex64(0x1b3ULL) == "00000000000001b3");
}

TEST_CASE("rng streams are reproducible and distinct per stream") {
    Rng a(derive_seed(42, 0)), b(derive_seed(42, 0)), c(derive_seed(42, 1));
    for (int i = 0; i < 16; ++i) CHECK(a.next() == b.next());
    bool differs = false;
    Rng a2(derive_seed(42, 0));
    for (int i = 0; i < 16; ++i) differs = differs || (a2.next() != c.next());
    CHECK(differs);
    Rng u(1);
    for (int i = 0; i < 1000; ++i) {
        double v = u.uniform01();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
