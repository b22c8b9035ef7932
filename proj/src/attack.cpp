#include "robseg/attack.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "robseg/metrics.hpp"
#include "robseg/threadpool.hpp"

namespace robseg {

namespace {

void check_config(const AttackConfig& cfg) {
    if (!(cfg.epsilon > 0.0)) throw std::runtime_error("attack: epsilon must be positive");
    if (!(cfg.alpha > 0.0)) throw std::runtime_error("attack: alpha must be positive");
    if (!(cfg.pixel_lo < cfg.pixel_hi)) throw std::runtime_error("attack: empty pixel range");
}

Tensor image_tensor(const Image& img) {
    return Tensor({1, img.channels, img.h, img.w}, img.data);
}

Image tensor_image(const Tensor& t, const Image& like) {
    Image out;
    out.channels = like.channels;
    out.h = like.h;
    out.w = like.w;
    out.data = t.data;
    return out;
}

}  // namespace

Mask target_mask(const Mask& gt) {
    Mask out;
    out.h = gt.h;
    out.w = gt.w;
    out.data.resize(gt.data.size());
    for (size_t i = 0; i < gt.data.size(); ++i) {
        if (gt.data[i] > 1)
            throw std::runtime_error("target_mask: mask value " + std::to_string(int(gt.data[i])) +
                                     " outside {0,1}");
        out.data[i] = gt.data[i] ? 0 : 1;
    }
    return out;
}

int iteration_count(double epsilon) {
    if (!(epsilon > 0.0)) throw std::runtime_error("iteration_count: epsilon must be positive");
    double bound = std::min(epsilon + 4.0, std::ceil(1.25 * epsilon));
    int n = static_cast<int>(std::ceil(bound));
    return n < 1 ? 1 : n;
}

Tensor fgsm_step(const Tensor& x, const Tensor& grad, const Tensor& original, const AttackConfig& cfg) {
    check_config(cfg);
    if (x.shape != grad.shape || x.shape != original.shape)
        throw std::runtime_error("fgsm_step: image, gradient and original shapes must agree");
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
        double gv = grad.data[i];
        if (!std::isfinite(gv)) throw std::runtime_error("fgsm_step: non-finite gradient");
        double s = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
        double v = out.data[i] - cfg.alpha * s;
        double lo = std::max(original.data[i] - cfg.epsilon, cfg.pixel_lo);
        double hi = std::min(original.data[i] + cfg.epsilon, cfg.pixel_hi);
        out.data[i] = std::min(std::max(v, lo), hi);
    }
    return out;
}

AdversarialSample generate_adversarial(SegNet& model, const Image& img, const Mask& gt,
                                       const AttackConfig& cfg) {
    check_config(cfg);
    if (img.h != gt.h || img.w != gt.w)
        throw std::runtime_error("attack: image and mask sizes differ");

    Mask target = target_mask(gt);
    Tensor original = image_tensor(img);
    Tensor x = original;
    int iters = cfg.iterations_override > 0 ? cfg.iterations_override : iteration_count(cfg.epsilon);

    for (int t = 0; t < iters; ++t) {
        Graph g;
        GraphBinder bind(g, false);
        Var xv = g.input(x, true);
        SegNet::Outputs out = model.forward(g, bind, smul(xv, 1.0 / 255.0), false);
        Var loss = seg_loss(g, out.refined, {&target});
        g.backward(loss);
        const std::vector<double>& gd = g.grad_data(xv.id());
        for (double v : gd)
            if (!std::isfinite(v))
                throw std::runtime_error("attack: non-finite gradient at iteration " + std::to_string(t + 1));
        Tensor grad(x.shape, gd);
        x = fgsm_step(x, grad, original, cfg);
    }

    AdversarialSample sample;
    sample.original = img;
    sample.perturbed = tensor_image(x, img);
    sample.target = std::move(target);
    sample.epsilon = cfg.epsilon;
    sample.iterations_run = iters;
    return sample;
}

std::vector<double> default_intensities() {
    return {0.5, 1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32};
}

std::vector<SweepRow> sweep(SegNet& model, const std::vector<SampleRecord>& data,
                            const std::vector<double>& intensities, int threads) {
    if (data.empty()) throw std::runtime_error("sweep: empty dataset");
    int n_img = static_cast<int>(data.size());
    int n_eps = static_cast<int>(intensities.size());
    int levels = n_eps + 1;  // clean pass plus one level per intensity

    // slot (level, image): level 0 is the unattacked evaluation
    std::vector<double> dics(static_cast<size_t>(levels) * n_img, 0.0);
    std::vector<double> jscs(static_cast<size_t>(levels) * n_img, 0.0);
    parallel_for(levels * n_img, threads, [&](int job) {
        int level = job / n_img;
        int i = job % n_img;
        const SampleRecord& rec = data[static_cast<size_t>(i)];
        Mask pred;
        if (level == 0) {
            pred = model.predict(rec.image);
        } else {
            AttackConfig cfg;
            cfg.epsilon = intensities[static_cast<size_t>(level - 1)];
            AdversarialSample adv = generate_adversarial(model, rec.image, rec.mask, cfg);
            pred = model.predict(adv.perturbed);
        }
        ConfusionCounts c = confusion(pred.data, rec.mask.data);
        dics[static_cast<size_t>(job)] = dic(c);
        jscs[static_cast<size_t>(job)] = jsc(c);
    });

    std::vector<SweepRow> rows;
    rows.reserve(static_cast<size_t>(levels));
    for (int level = 0; level < levels; ++level) {
        SweepRow row;
        row.epsilon = level == 0 ? 0.0 : intensities[static_cast<size_t>(level - 1)];
        row.n_images = n_img;
        for (int i = 0; i < n_img; ++i) {
            row.dic += dics[static_cast<size_t>(level) * n_img + i];
            row.jsc += jscs[static_cast<size_t>(level) * n_img + i];
        }
        row.dic /= n_img;
        row.jsc /= n_img;
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write sweep csv: " + path);
    f << "epsilon,dic,jsc,n_images\n";
    char buf[128];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d\n", r.epsilon, r.dic, r.jsc, r.n_images);
        f << buf;
    }
    if (!f.good()) throw std::runtime_error("write failed for sweep csv: " + path);
}

}  // namespace robseg
