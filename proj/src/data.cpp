#include "robseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "robseg/rng.hpp"
#include "robseg/threadpool.hpp"

namespace fs = std::filesystem;

namespace robseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp255(double v) { return std::min(255.0, std::max(0.0, v)); }

// Low-frequency sinusoid mixture used as background texture. Frequencies and
// phases come from the per-sample stream, so texture is part of the sample
// identity.
struct TextureField {
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;

    static TextureField make(Rng& r, double amplitude) {
        TextureField t;
        double scale[4] = {0.9, 0.6, 0.45, 0.3};
        for (int k = 0; k < 4; ++k) {
            Wave w;
            w.fx = static_cast<double>(1 + r.below(4));
            w.fy = static_cast<double>(1 + r.below(4));
            w.phase = r.uniform(0.0, 2.0 * kPi);
            w.amp = amplitude * scale[k];
            t.waves.push_back(w);
        }
        return t;
    }

    double at(double xn, double yn) const {
        double v = 0.0;
        for (const Wave& w : waves) v += w.amp * std::sin(2.0 * kPi * (w.fx * xn + w.fy * yn) + w.phase);
        return v;
    }
};

// Star-shaped region: an ellipse whose boundary radius is modulated by low
// order harmonics. Star-shapedness keeps every instance connected.
struct Lobe {
    double cx, cy, rx, ry, tilt;
    double m3, p3, m5, p5;  // harmonic modulation

    // returns normalized radius; <= boundary(theta) means inside
    double rho(double x, double y, double* theta_out) const {
        double dx = x - cx, dy = y - cy;
        double c = std::cos(tilt), s = std::sin(tilt);
        double u = (c * dx + s * dy) / rx;
        double v = (-s * dx + c * dy) / ry;
        if (theta_out) *theta_out = std::atan2(v, u);
        return std::sqrt(u * u + v * v);
    }

    double boundary(double theta) const { return 1.0 + m3 * std::sin(3.0 * theta + p3) + m5 * std::sin(5.0 * theta + p5); }

    bool inside(double x, double y, double* rho_out = nullptr) const {
        double th;
        double r = rho(x, y, &th);
        if (rho_out) *rho_out = r;
        return r <= boundary(th);
    }
};

SampleRecord make_lung_sample(const SyntheticConfig& cfg, int index) {
    double side = static_cast<double>(cfg.side);
    double jscale = side / 64.0;  // positional jitter in pixels, scaled to resolution
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng r(derive_seed(derive_seed(cfg.seed, static_cast<uint64_t>(index)), static_cast<uint64_t>(attempt)));

        double cy = side * (0.50 + r.uniform(-0.03, 0.03));
        double lobe_dx = side * (0.23 + r.uniform(-0.015, 0.015));
        double rx = side * (0.15 + r.uniform(-0.015, 0.015));
        double ry = side * (0.23 + r.uniform(-0.025, 0.025));

        Lobe lobes[2];
        for (int li = 0; li < 2; ++li) {
            double sign = li == 0 ? -1.0 : 1.0;
            Lobe& L = lobes[li];
            L.cx = side * 0.5 + sign * lobe_dx + r.uniform(-1.0, 1.0) * jscale;
            L.cy = cy + r.uniform(-1.5, 1.5) * jscale;
            L.rx = rx * (1.0 + r.uniform(-0.05, 0.05));
            L.ry = ry * (1.0 + r.uniform(-0.05, 0.05));
            L.tilt = sign * (0.06 + r.uniform(0.0, 0.10));
            L.m3 = 0.06;
            L.p3 = r.uniform(0.0, 2.0 * kPi);
            L.m5 = 0.04;
            L.p5 = r.uniform(0.0, 2.0 * kPi);
        }

        TextureField tex = TextureField::make(r, cfg.noise_level);
        double rib_period = side / (6.0 + r.uniform(0.0, 2.0));
        double rib_phase = r.uniform(0.0, 2.0 * kPi);

        SampleRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "lung_%04d", index);
        rec.id = buf;
        rec.image.channels = 1;
        rec.image.h = rec.image.w = cfg.side;
        rec.image.data.assign(static_cast<size_t>(cfg.side) * cfg.side, 0.0);
        rec.mask.h = rec.mask.w = cfg.side;
        rec.mask.data.assign(static_cast<size_t>(cfg.side) * cfg.side, 0);

        for (int y = 0; y < cfg.side; ++y) {
            for (int x = 0; x < cfg.side; ++x) {
                double xn = x / side, yn = y / side;
                double base = 150.0 + 25.0 * (yn - 0.5) + tex.at(xn, yn);
                double rib = std::sin(2.0 * kPi * y / rib_period + rib_phase);
                if (rib > 0.0) base += 14.0 * rib * rib * rib;
                double noise = r.uniform(-cfg.noise_level / 3.0, cfg.noise_level / 3.0);
                double rho = 0.0;
                bool in0 = lobes[0].inside(x + 0.5, y + 0.5, &rho);
                double v;
                if (in0 || lobes[1].inside(x + 0.5, y + 0.5, &rho)) {
                    v = base - 75.0 + 20.0 * rho + noise;
                    rec.mask.at(y, x) = 1;
                } else {
                    v = base + noise;
                }
                rec.image.at(0, y, x) = std::round(clamp255(v));
            }
        }

        if (component_count(rec.mask) == 2) return rec;
    }
    throw std::runtime_error("lung generator failed to produce two lobes for sample " + std::to_string(index));
}

SampleRecord make_lesion_sample(const SyntheticConfig& cfg, int index) {
    double side = static_cast<double>(cfg.side);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng r(derive_seed(derive_seed(cfg.seed, static_cast<uint64_t>(index)), static_cast<uint64_t>(attempt)));

        double cx = side * (0.5 + r.uniform(-0.08, 0.08));
        double cy = side * (0.5 + r.uniform(-0.08, 0.08));
        double r0 = side * (0.20 + r.uniform(0.0, 0.08));
        double m3 = 0.15, p3 = r.uniform(0.0, 2.0 * kPi);
        double m6 = 0.10, p6 = r.uniform(0.0, 2.0 * kPi);
        double m1 = 0.05, p1 = r.uniform(0.0, 2.0 * kPi);

        TextureField tex = TextureField::make(r, cfg.noise_level);
        double base_rgb[3] = {185.0 + r.uniform(-10.0, 10.0), 150.0 + r.uniform(-10.0, 10.0),
                              130.0 + r.uniform(-10.0, 10.0)};
        double blob_rgb[3] = {95.0 + r.uniform(-12.0, 12.0), 65.0 + r.uniform(-8.0, 8.0),
                              55.0 + r.uniform(-8.0, 8.0)};
        double tex_gain[3] = {1.0, 0.8, 0.7};

        SampleRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "lesion_%04d", index);
        rec.id = buf;
        rec.image.channels = 3;
        rec.image.h = rec.image.w = cfg.side;
        rec.image.data.assign(static_cast<size_t>(3) * cfg.side * cfg.side, 0.0);
        rec.mask.h = rec.mask.w = cfg.side;
        rec.mask.data.assign(static_cast<size_t>(cfg.side) * cfg.side, 0);

        for (int y = 0; y < cfg.side; ++y) {
            for (int x = 0; x < cfg.side; ++x) {
                double xn = x / side, yn = y / side;
                double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
                double dist = std::sqrt(dx * dx + dy * dy);
                double theta = std::atan2(dy, dx);
                double boundary = r0 * (1.0 + m3 * std::sin(3.0 * theta + p3) + m6 * std::sin(6.0 * theta + p6) +
                                        m1 * std::sin(theta + p1));
                double rho = dist / boundary;
                if (rho <= 1.0) rec.mask.at(y, x) = 1;
                // smooth edge blend for the image only; the mask stays exact
                double wgt = std::min(1.0, std::max(0.0, (1.05 - rho) / 0.1));
                double t = tex.at(xn, yn);
                for (int c = 0; c < 3; ++c) {
                    double noise = r.uniform(-cfg.noise_level / 3.0, cfg.noise_level / 3.0);
                    double bg = base_rgb[c] + t * tex_gain[c] + 12.0 * (xn - 0.5);
                    double fg = blob_rgb[c] + 0.6 * t + 30.0 * rho * rho;
                    rec.image.at(c, y, x) = std::round(clamp255(bg * (1.0 - wgt) + fg * wgt + noise));
                }
            }
        }

        if (component_count(rec.mask) == 1) return rec;
    }
    throw std::runtime_error("lesion generator failed to produce one blob for sample " + std::to_string(index));
}

}  // namespace

SynthKind parse_synth_kind(const std::string& s) {
    if (s == "lung-like" || s == "lung") return SynthKind::lung;
    if (s == "lesion-like" || s == "lesion") return SynthKind::lesion;
    throw std::runtime_error("unknown synthetic kind: " + s + " (expected lung-like or lesion-like)");
}

std::vector<SampleRecord> synth_generate(const SyntheticConfig& cfg, int threads) {
    if (cfg.count < 1) throw std::runtime_error("synthetic count must be positive");
    if (cfg.side < 32) throw std::runtime_error("synthetic side " + std::to_string(cfg.side) + " too small, need >= 32");
    if (cfg.train_fraction < 0.0 || cfg.train_fraction > 1.0)
        throw std::runtime_error("train fraction must be in [0, 1]");
    std::vector<SampleRecord> out(static_cast<size_t>(cfg.count));
    int n_train = static_cast<int>(std::llround(cfg.train_fraction * cfg.count));
    parallel_for(cfg.count, threads, [&](int i) {
        out[static_cast<size_t>(i)] =
            cfg.kind == SynthKind::lung ? make_lung_sample(cfg, i) : make_lesion_sample(cfg, i);
        out[static_cast<size_t>(i)].train = i < n_train;
    });
    return out;
}

int component_count(const Mask& m) {
    std::vector<uint8_t> seen(m.data.size(), 0);
    int count = 0;
    std::deque<int> queue;
    for (int start = 0; start < static_cast<int>(m.data.size()); ++start) {
        if (!m.data[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        ++count;
        seen[static_cast<size_t>(start)] = 1;
        queue.push_back(start);
        while (!queue.empty()) {
            int p = queue.front();
            queue.pop_front();
            int y = p / m.w, x = p % m.w;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w) continue;
                int q = ny * m.w + nx;
                if (m.data[static_cast<size_t>(q)] && !seen[static_cast<size_t>(q)]) {
                    seen[static_cast<size_t>(q)] = 1;
                    queue.push_back(q);
                }
            }
        }
    }
    return count;
}

namespace {

Image flip_h(const Image& img) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(c, y, x) = img.at(c, y, img.w - 1 - x);
    return out;
}

Image flip_v(const Image& img) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(c, y, x) = img.at(c, img.h - 1 - y, x);
    return out;
}

Mask flip_h(const Mask& m) {
    Mask out = m;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) out.at(y, x) = m.at(y, m.w - 1 - x);
    return out;
}

Mask flip_v(const Mask& m) {
    Mask out = m;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) out.at(y, x) = m.at(m.h - 1 - y, x);
    return out;
}

}  // namespace

Image rotate_image(const Image& img, double deg) {
    Image out = img;
    double a = deg * kPi / 180.0;
    double ca = std::cos(a), sa = std::sin(a);
    double cy = (img.h - 1) * 0.5, cx = (img.w - 1) * 0.5;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double dx = x - cx, dy = y - cy;
            double sx = ca * dx + sa * dy + cx;
            double sy = -sa * dx + ca * dy + cy;
            sx = std::min(std::max(sx, 0.0), static_cast<double>(img.w - 1));
            sy = std::min(std::max(sy, 0.0), static_cast<double>(img.h - 1));
            int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
            double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < img.channels; ++c) {
                double top = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
                double bot = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
                out.at(c, y, x) = std::round(top * (1 - fy) + bot * fy);
            }
        }
    return out;
}

Mask rotate_mask(const Mask& m, double deg) {
    Mask out = m;
    double a = deg * kPi / 180.0;
    double ca = std::cos(a), sa = std::sin(a);
    double cy = (m.h - 1) * 0.5, cx = (m.w - 1) * 0.5;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            double dx = x - cx, dy = y - cy;
            int sx = static_cast<int>(std::lround(ca * dx + sa * dy + cx));
            int sy = static_cast<int>(std::lround(-sa * dx + ca * dy + cy));
            uint8_t v = 0;
            if (sx >= 0 && sx < m.w && sy >= 0 && sy < m.h) v = m.at(sy, sx);
            out.at(y, x) = v ? 1 : 0;
        }
    return out;
}

SampleRecord augment(const SampleRecord& s, uint64_t seed) {
    Rng r(seed);
    bool do_h = r.coin();
    bool do_v = r.coin();
    bool do_rot = r.coin();
    double angle = r.uniform(-10.0, 10.0);  // drawn unconditionally to keep the stream layout fixed
    SampleRecord out = s;
    if (do_h) {
        out.image = flip_h(out.image);
        out.mask = flip_h(out.mask);
    }
    if (do_v) {
        out.image = flip_v(out.image);
        out.mask = flip_v(out.mask);
    }
    if (do_rot) {
        out.image = rotate_image(out.image, angle);
        out.mask = rotate_mask(out.mask, angle);
    }
    return out;
}

Image read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P6") throw std::runtime_error("unsupported image format in " + path);
    auto next_int = [&]() {
        // skip whitespace and # comments between header fields
        for (;;) {
            int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
        int v;
        if (!(f >> v)) throw std::runtime_error("malformed header in " + path);
        return v;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    if (w < 1 || h < 1) throw std::runtime_error("bad dimensions in " + path);
    if (maxval != 255) throw std::runtime_error("maxval must be 255 in " + path);
    f.get();  // single whitespace after maxval
    int channels = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    if (!f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw std::runtime_error("truncated pixel data in " + path);
    Image img;
    img.channels = channels;
    img.h = h;
    img.w = w;
    img.data.assign(raw.size(), 0.0);
    // file rows are interleaved; storage is planar
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<double>(raw[(static_cast<size_t>(y) * w + x) * channels + c]);
    return img;
}

void write_pnm(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("image must have 1 or 3 channels, got " + std::to_string(img.channels));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write image: " + path);
    f << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(img.w) * img.h * img.channels);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.channels; ++c)
                raw[(static_cast<size_t>(y) * img.w + x) * img.channels + c] =
                    static_cast<unsigned char>(clamp255(std::round(img.at(c, y, x))));
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void save_dataset(const std::vector<SampleRecord>& records, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream split(fs::path(dir) / "split.txt");
    if (!split) throw std::runtime_error("cannot write split file in " + dir);
    for (const SampleRecord& s : records) {
        std::string ext = s.image.channels == 3 ? ".ppm" : ".pgm";
        write_pnm(s.image, (fs::path(dir) / "images" / (s.id + ext)).string());
        Image m;
        m.channels = 1;
        m.h = s.mask.h;
        m.w = s.mask.w;
        m.data.resize(s.mask.data.size());
        for (size_t i = 0; i < s.mask.data.size(); ++i) m.data[i] = s.mask.data[i] ? 255.0 : 0.0;
        write_pnm(m, (fs::path(dir) / "masks" / (s.id + ".pgm")).string());
        split << s.id << " " << (s.train ? "train" : "test") << "\n";
    }
}

std::vector<SampleRecord> load_dataset(const std::string& dir) {
    fs::path images = fs::path(dir) / "images";
    if (!fs::is_directory(images)) {
        std::cerr << "warning: no images directory under " << dir << ", loading empty dataset\n";
        return {};
    }
    std::map<std::string, bool> split;
    {
        std::ifstream f(fs::path(dir) / "split.txt");
        if (f) {
            std::string id, part;
            while (f >> id >> part) {
                if (part != "train" && part != "test")
                    throw std::runtime_error("bad split entry '" + part + "' for id " + id);
                split[id] = part == "train";
            }
        }
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) std::cerr << "warning: empty dataset directory " << dir << "\n";

    std::vector<SampleRecord> out;
    for (const fs::path& p : files) {
        SampleRecord s;
        s.id = p.stem().string();
        s.image = read_pnm(p.string());
        fs::path mask_path = fs::path(dir) / "masks" / (s.id + ".pgm");
        if (!fs::exists(mask_path)) throw std::runtime_error("missing mask for image " + s.id);
        Image m = read_pnm(mask_path.string());
        if (m.channels != 1 || m.h != s.image.h || m.w != s.image.w)
            throw std::runtime_error("mask shape does not match image for " + s.id);
        s.mask.h = m.h;
        s.mask.w = m.w;
        s.mask.data.resize(m.data.size());
        for (size_t i = 0; i < m.data.size(); ++i) s.mask.data[i] = m.data[i] >= 128.0 ? 1 : 0;
        auto it = split.find(s.id);
        if (it == split.end()) throw std::runtime_error("id " + s.id + " missing from split.txt");
        s.train = it->second;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace robseg
