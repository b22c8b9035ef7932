#include "robseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "robseg/graph.hpp"
#include "robseg/metrics.hpp"
#include "robseg/nlce.hpp"
#include "robseg/rng.hpp"
#include "robseg/threadpool.hpp"

namespace fs = std::filesystem;

namespace robseg {

void Adam::step(ParamRegistry& reg, double lr) {
    if (!(lr > 0.0)) throw std::runtime_error("optimizer: learning rate must be positive");
    ++t_;
    // bias corrections for the running moments at this step count
    double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& up : reg.params()) {
        Parameter& p = *up;
        if (!p.trainable || p.value.grad.empty()) continue;
        size_t n = p.value.data.size();
        Moments& mo = state_[p.name];
        if (mo.m.size() != n) {
            mo.m.assign(n, 0.0);
            mo.v.assign(n, 0.0);
        }
        for (size_t i = 0; i < n; ++i) {
            double g = p.value.grad[i] + cfg_.weight_decay * p.value.data[i];
            mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
            mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
            p.value.data[i] -= lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + cfg_.eps);
        }
        p.value.grad.clear();
    }
}

double PlateauSchedule::observe(double epoch_loss) {
    if (!seen_ || epoch_loss < best_) {
        best_ = epoch_loss;
        seen_ = true;
        stale_ = 0;
        return lr_;
    }
    if (++stale_ >= patience_ && lr_ > floor_) {
        lr_ = std::max(lr_ * decay_, floor_);
        stale_ = 0;
    }
    return lr_;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void config_fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("config: " + what + " at " + where);
}

double parse_double_value(const std::string& v, const std::string& where) {
    size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        config_fail(where, "expected a number, got '" + v + "'");
    }
    if (pos != v.size()) config_fail(where, "expected a number, got '" + v + "'");
    return d;
}

int parse_int_value(const std::string& v, const std::string& where) {
    size_t pos = 0;
    long n = 0;
    try {
        n = std::stol(v, &pos);
    } catch (const std::exception&) {
        config_fail(where, "expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) config_fail(where, "expected an integer, got '" + v + "'");
    return static_cast<int>(n);
}

uint64_t parse_u64_value(const std::string& v, const std::string& where) {
    size_t pos = 0;
    uint64_t n = 0;
    try {
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        config_fail(where, "expected an unsigned integer, got '" + v + "'");
    }
    if (pos != v.size()) config_fail(where, "expected an unsigned integer, got '" + v + "'");
    return n;
}

bool parse_bool_value(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    config_fail(where, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

std::string format(const char* fmt, ...) {
    char buf[256];
    va_list args;
    va_start(args, fmt);
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    return f;
}

void finish_out(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::vector<double> parse_intensity_list(const std::string& text) {
    std::vector<double> out;
    for (const std::string& item : split_commas(text)) {
        if (item.empty()) throw std::runtime_error("intensity list has an empty entry: '" + text + "'");
        double eps = parse_double_value(item, "intensity list");
        if (!(eps > 0.0)) throw std::runtime_error("intensities must be positive, got " + item);
        out.push_back(eps);
    }
    if (out.empty()) throw std::runtime_error("intensity list is empty");
    return out;
}

namespace {

void apply_key(ExperimentConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
               const std::string& where) {
    if (section == "data") {
        if (key == "kind") {
            cfg.data.kind = parse_synth_kind(value);
        } else if (key == "count") {
            cfg.data.count = parse_int_value(value, where);
            if (cfg.data.count <= 0) config_fail(where, "count must be positive");
        } else if (key == "side") {
            cfg.data.side = parse_int_value(value, where);
            if (cfg.data.side <= 0) config_fail(where, "side must be positive");
        } else if (key == "noise") {
            cfg.data.noise = parse_double_value(value, where);
            if (cfg.data.noise < 0.0) config_fail(where, "noise must be non-negative");
        } else if (key == "train_fraction") {
            cfg.data.train_fraction = parse_double_value(value, where);
            if (cfg.data.train_fraction < 0.0 || cfg.data.train_fraction > 1.0)
                config_fail(where, "train_fraction must lie in [0, 1]");
        } else if (key == "path") {
            cfg.data.path = value;
        } else {
            config_fail(where, "unknown key '" + key + "' in [data]");
        }
    } else if (section == "model") {
        if (key == "variant") {
            cfg.variant = parse_variant(value);
        } else if (key == "channels") {
            std::vector<std::string> parts = split_commas(value);
            if (parts.size() != 4) config_fail(where, "channels needs exactly four values");
            for (int i = 0; i < 4; ++i) {
                int c = parse_int_value(parts[i], where);
                if (c <= 0) config_fail(where, "channels must be positive");
                cfg.backbone.stage_channels[i] = c;
            }
        } else if (key == "blocks") {
            cfg.backbone.blocks_per_stage = parse_int_value(value, where);
            if (cfg.backbone.blocks_per_stage <= 0) config_fail(where, "blocks must be positive");
        } else if (key == "pyramid_width") {
            cfg.backbone.pyramid_width = parse_int_value(value, where);
            if (cfg.backbone.pyramid_width <= 0) config_fail(where, "pyramid_width must be positive");
        } else if (key == "codebook") {
            cfg.backbone.codebook_size = parse_int_value(value, where);
            if (cfg.backbone.codebook_size <= 0) config_fail(where, "codebook must be positive");
        } else {
            config_fail(where, "unknown key '" + key + "' in [model]");
        }
    } else if (section == "train") {
        if (key == "epochs") {
            cfg.train.epochs = parse_int_value(value, where);
            if (cfg.train.epochs < 0) config_fail(where, "epochs must be non-negative");
        } else if (key == "finetune_epochs") {
            cfg.train.finetune_epochs = parse_int_value(value, where);
            if (cfg.train.finetune_epochs < 0) config_fail(where, "finetune_epochs must be non-negative");
        } else if (key == "batch") {
            cfg.train.batch = parse_int_value(value, where);
            if (cfg.train.batch <= 0) config_fail(where, "batch must be positive");
        } else if (key == "lr") {
            cfg.train.lr = parse_double_value(value, where);
            if (!(cfg.train.lr > 0.0)) config_fail(where, "lr must be positive");
        } else if (key == "lr_floor") {
            cfg.train.lr_floor = parse_double_value(value, where);
            if (!(cfg.train.lr_floor > 0.0)) config_fail(where, "lr_floor must be positive");
        } else if (key == "lr_decay") {
            cfg.train.lr_decay = parse_double_value(value, where);
            if (!(cfg.train.lr_decay > 0.0) || cfg.train.lr_decay > 1.0)
                config_fail(where, "lr_decay must lie in (0, 1]");
        } else if (key == "patience") {
            cfg.train.patience = parse_int_value(value, where);
            if (cfg.train.patience <= 0) config_fail(where, "patience must be positive");
        } else if (key == "weight_decay") {
            cfg.train.weight_decay = parse_double_value(value, where);
            if (cfg.train.weight_decay < 0.0) config_fail(where, "weight_decay must be non-negative");
        } else if (key == "beta1") {
            cfg.train.beta1 = parse_double_value(value, where);
            if (cfg.train.beta1 < 0.0 || cfg.train.beta1 >= 1.0) config_fail(where, "beta1 must lie in [0, 1)");
        } else if (key == "beta2") {
            cfg.train.beta2 = parse_double_value(value, where);
            if (cfg.train.beta2 < 0.0 || cfg.train.beta2 >= 1.0) config_fail(where, "beta2 must lie in [0, 1)");
        } else if (key == "augment") {
            cfg.train.augment = parse_bool_value(value, where);
        } else {
            config_fail(where, "unknown key '" + key + "' in [train]");
        }
    } else if (section == "attack") {
        if (key == "intensities") {
            cfg.attack.intensities = parse_intensity_list(value);
        } else {
            config_fail(where, "unknown key '" + key + "' in [attack]");
        }
    } else if (section == "run") {
        if (key == "seed") {
            cfg.seed = parse_u64_value(value, where);
        } else if (key == "out") {
            cfg.out = value;
        } else if (key == "checkpoint") {
            cfg.checkpoint = value;
        } else if (key == "threads") {
            cfg.threads = parse_int_value(value, where);
            if (cfg.threads < 0) config_fail(where, "threads must be non-negative");
        } else {
            config_fail(where, "unknown key '" + key + "' in [run]");
        }
    } else {
        config_fail(where, "key outside any section");
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') config_fail(where, "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" && section != "attack" &&
                section != "run")
                config_fail(where, "unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) config_fail(where, "expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) config_fail(where, "empty key");
        apply_key(cfg, section, key, value, where);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::vector<SampleRecord> acquire_data(const ExperimentConfig& cfg) {
    if (!cfg.data.path.empty()) {
        std::vector<SampleRecord> records = load_dataset(cfg.data.path);
        if (records.empty()) throw std::runtime_error("dataset at " + cfg.data.path + " is empty");
        return records;
    }
    SyntheticConfig sc;
    sc.kind = cfg.data.kind;
    sc.count = cfg.data.count;
    sc.side = cfg.data.side;
    sc.noise_level = cfg.data.noise;
    sc.seed = cfg.seed;
    sc.train_fraction = cfg.data.train_fraction;
    return synth_generate(sc, cfg.threads);
}

SegNet build_model_for(const ExperimentConfig& cfg, const std::vector<SampleRecord>& data) {
    if (data.empty()) throw std::runtime_error("cannot size a model for an empty dataset");
    BackboneConfig bc = cfg.backbone;
    bc.input_hw = data[0].image.h;
    bc.in_channels = data[0].image.channels;
    // weight init draws from a stream separate from data generation and
    // shuffling, so the same weights appear for every variant of a run
    return SegNet(bc, cfg.variant, derive_seed(cfg.seed, 0xB00ull));
}

std::vector<EpochLog> train_model(SegNet& net, const std::vector<SampleRecord>& data, const TrainConfig& tc,
                                  uint64_t seed, int threads, int epochs_override) {
    std::vector<int> train_idx;
    for (size_t i = 0; i < data.size(); ++i)
        if (data[i].train) train_idx.push_back(static_cast<int>(i));
    if (train_idx.empty()) throw std::runtime_error("training split is empty");
    if (tc.batch <= 0) throw std::runtime_error("batch size must be positive");
    int epochs = epochs_override > 0 ? epochs_override : tc.epochs;

    // unaugmented copy of the training split for the per-epoch score
    std::vector<SampleRecord> train_view;
    for (int i : train_idx) train_view.push_back(data[i]);

    Adam opt(AdamConfig{tc.beta1, tc.beta2, 1e-8, tc.weight_decay});
    PlateauSchedule sched(tc.lr, tc.lr_decay, tc.patience, tc.lr_floor);
    std::vector<EpochLog> log;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        double lr = sched.lr();
        std::vector<int> order = train_idx;
        Rng shuffler(derive_seed(seed, 0x0e70c000ull + static_cast<uint64_t>(epoch)));
        shuffler.shuffle(order);
        uint64_t aug_stream = derive_seed(seed, 0xa0600000ull + static_cast<uint64_t>(epoch));

        double loss_sum = 0.0;
        int n_seen = 0;
        int step = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(tc.batch)) {
            ++step;
            size_t end = std::min(order.size(), off + static_cast<size_t>(tc.batch));
            // augmentation keys on the sample's dataset index, not its batch
            // position, so the epoch's view is independent of batch boundaries
            std::vector<SampleRecord> batch;
            for (size_t j = off; j < end; ++j) {
                const SampleRecord& rec = data[static_cast<size_t>(order[j])];
                if (tc.augment)
                    batch.push_back(augment(rec, derive_seed(aug_stream, static_cast<uint64_t>(order[j]))));
                else
                    batch.push_back(rec);
            }
            std::vector<const Image*> imgs;
            std::vector<const Mask*> masks;
            for (const SampleRecord& r : batch) {
                imgs.push_back(&r.image);
                masks.push_back(&r.mask);
            }
            Tensor x = SegNet::normalize(SegNet::image_batch(imgs));

            Graph g;
            GraphBinder bind(g, true);
            Var xv = g.input(std::move(x), false);
            SegNet::Outputs out = net.forward(g, bind, xv, true);
            std::array<Var, 4> level_losses = {
                seg_loss(g, out.level_logits[0], masks), seg_loss(g, out.level_logits[1], masks),
                seg_loss(g, out.level_logits[2], masks), seg_loss(g, out.level_logits[3], masks)};
            Var refined_loss = seg_loss(g, out.refined, masks);
            Var loss = total_loss(g, level_losses, refined_loss);
            double lv = loss.value().data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(step));
            g.backward(loss);
            bind.harvest();
            opt.step(net.registry(), lr);
            loss_sum += lv * static_cast<double>(end - off);
            n_seen += static_cast<int>(end - off);
        }

        double epoch_loss = loss_sum / n_seen;
        double epoch_dic = mean_dic(evaluate(net, train_view, threads));
        log.push_back(EpochLog{epoch, epoch_loss, epoch_dic, lr});
        sched.observe(epoch_loss);
    }
    return log;
}

std::vector<EvalRow> evaluate_with(const std::function<Mask(const SampleRecord&)>& predict,
                                   const std::vector<SampleRecord>& records, int threads) {
    std::vector<EvalRow> rows(records.size());
    parallel_for(static_cast<int64_t>(records.size()), threads, [&](int64_t i) {
        const SampleRecord& rec = records[static_cast<size_t>(i)];
        Mask pred = predict(rec);
        if (pred.h != rec.mask.h || pred.w != rec.mask.w)
            throw std::runtime_error("prediction size mismatch for sample " + rec.id);
        ConfusionCounts c = confusion(pred.data, rec.mask.data);
        rows[static_cast<size_t>(i)] = EvalRow{rec.id, dic(c), jsc(c)};
    });
    return rows;
}

std::vector<EvalRow> evaluate(SegNet& net, const std::vector<SampleRecord>& records, int threads) {
    return evaluate_with([&net](const SampleRecord& rec) { return net.predict(rec.image); }, records, threads);
}

double mean_dic(const std::vector<EvalRow>& rows) {
    if (rows.empty()) throw std::runtime_error("mean of an empty evaluation");
    double s = 0.0;
    for (const EvalRow& r : rows) s += r.dic;
    return s / static_cast<double>(rows.size());
}

double mean_jsc(const std::vector<EvalRow>& rows) {
    if (rows.empty()) throw std::runtime_error("mean of an empty evaluation");
    double s = 0.0;
    for (const EvalRow& r : rows) s += r.jsc;
    return s / static_cast<double>(rows.size());
}

void write_train_log_csv(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "epoch,loss,dic,lr\n";
    for (const EpochLog& e : log) f << format("%d,%.6f,%.6f,%.6f\n", e.epoch, e.loss, e.dic, e.lr);
    finish_out(f, path);
}

void write_metrics_csv(const std::vector<EvalRow>& rows, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "id,dic,jsc\n";
    for (const EvalRow& r : rows) f << format("%s,%.6f,%.6f\n", r.id.c_str(), r.dic, r.jsc);
    if (!rows.empty()) f << format("mean,%.6f,%.6f\n", mean_dic(rows), mean_jsc(rows));
    finish_out(f, path);
}

namespace {

// Plot area 60..600 x, 40..440 y; intensity clamps to the fixed 0..32 axis so
// curves from different runs land on comparable coordinates.
double plot_x(double eps) { return 60.0 + std::min(std::max(eps, 0.0), 32.0) / 32.0 * 540.0; }
double plot_y(double m) { return 440.0 - std::min(std::max(m, 0.0), 1.0) * 400.0; }

void svg_frame(std::string& s, const std::string& title) {
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"#ffffff\"/>\n";
    s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title +
         "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        double eps = 8.0 * i;
        double x = plot_x(eps);
        s += format("<line x1=\"%.1f\" y1=\"440\" x2=\"%.1f\" y2=\"40\" stroke=\"#dddddd\"/>\n", x, x);
        s += format("<text x=\"%.1f\" y=\"458\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                    "font-size=\"12\">%g</text>\n",
                    x, eps);
        double m = 0.25 * i;
        double y = plot_y(m);
        s += format("<line x1=\"60\" y1=\"%.1f\" x2=\"600\" y2=\"%.1f\" stroke=\"#dddddd\"/>\n", y, y);
        s += format("<text x=\"52\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                    "font-size=\"12\">%.2f</text>\n",
                    y + 4.0, m);
    }
    s += "<line x1=\"60\" y1=\"440\" x2=\"600\" y2=\"440\" stroke=\"#333333\"/>\n";
    s += "<line x1=\"60\" y1=\"440\" x2=\"60\" y2=\"40\" stroke=\"#333333\"/>\n";
    s += "<text x=\"330\" y=\"476\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
         "attack intensity (pixel levels)</text>\n";
    s += "<text x=\"16\" y=\"240\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 16 240)\">overlap score</text>\n";
}

std::string svg_polyline(const std::vector<SweepRow>& rows, bool use_jsc, const std::string& color) {
    std::string pts;
    for (const SweepRow& r : rows) pts += format("%.2f,%.2f ", plot_x(r.epsilon), plot_y(use_jsc ? r.jsc : r.dic));
    if (!pts.empty()) pts.pop_back();
    return "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
}

std::string svg_legend_entry(int slot, const std::string& color, const std::string& label) {
    double y = 56.0 + 18.0 * slot;
    return format("<line x1=\"470\" y1=\"%.1f\" x2=\"498\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n", y, y,
                  color.c_str()) +
           format("<text x=\"504\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\">%s</text>\n", y + 4.0,
                  label.c_str());
}

const char* const kCurveColors[] = {"#2c6fbb", "#c23b3b", "#2e8b57", "#8a2be2", "#e08b00"};

}  // namespace

void write_sweep_svg(const std::vector<SweepRow>& rows, const std::string& path) {
    std::string s;
    svg_frame(s, "segmentation robustness under attack");
    s += svg_polyline(rows, false, kCurveColors[0]);
    s += svg_polyline(rows, true, kCurveColors[1]);
    s += svg_legend_entry(0, kCurveColors[0], "dic");
    s += svg_legend_entry(1, kCurveColors[1], "jsc");
    s += "</svg>\n";
    std::ofstream f = open_out(path);
    f << s;
    finish_out(f, path);
}

void write_comparison_svg(const std::vector<std::pair<std::string, std::vector<SweepRow>>>& curves,
                          const std::string& path) {
    std::string s;
    svg_frame(s, "dic under attack, by model");
    int slot = 0;
    for (const auto& [name, rows] : curves) {
        const char* color = kCurveColors[slot % 5];
        s += svg_polyline(rows, false, color);
        s += svg_legend_entry(slot, color, name);
        ++slot;
    }
    s += "</svg>\n";
    std::ofstream f = open_out(path);
    f << s;
    finish_out(f, path);
}

void write_manifest(const std::string& dir, const std::vector<std::string>& rel_paths) {
    std::vector<std::string> sorted = rel_paths;
    std::sort(sorted.begin(), sorted.end());
    std::ofstream f = open_out((fs::path(dir) / "manifest.txt").string());
    for (const std::string& rel : sorted) {
        uint64_t h = fnv1a64_file((fs::path(dir) / rel).string());
        f << hex64(h) << "  " << rel << "\n";
    }
    finish_out(f, (fs::path(dir) / "manifest.txt").string());
}

namespace {

std::vector<SampleRecord> test_split(const std::vector<SampleRecord>& data) {
    std::vector<SampleRecord> out;
    for (const SampleRecord& r : data)
        if (!r.train) out.push_back(r);
    return out;
}

void load_checkpoint_into(SegNet& net, const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw std::runtime_error("this command needs a checkpoint (--checkpoint)");
    net.registry().load(cfg.checkpoint);
}

}  // namespace

void cmd_synth(const ExperimentConfig& cfg) {
    SyntheticConfig sc;
    sc.kind = cfg.data.kind;
    sc.count = cfg.data.count;
    sc.side = cfg.data.side;
    sc.noise_level = cfg.data.noise;
    sc.seed = cfg.seed;
    sc.train_fraction = cfg.data.train_fraction;
    std::vector<SampleRecord> records = synth_generate(sc, cfg.threads);
    save_dataset(records, cfg.out);

    std::vector<std::string> rels = {"split.txt"};
    int n_train = 0;
    for (const SampleRecord& r : records) {
        std::string ext = r.image.channels == 3 ? ".ppm" : ".pgm";
        rels.push_back("images/" + r.id + ext);
        rels.push_back("masks/" + r.id + ".pgm");
        if (r.train) ++n_train;
    }
    write_manifest(cfg.out, rels);
    std::cout << format("wrote %d samples (%d train, %d test) to %s\n", static_cast<int>(records.size()), n_train,
                        static_cast<int>(records.size()) - n_train, cfg.out.c_str());
}

void cmd_train(const ExperimentConfig& cfg) {
    std::vector<SampleRecord> data = acquire_data(cfg);
    SegNet net = build_model_for(cfg, data);
    if (!cfg.checkpoint.empty()) net.registry().load(cfg.checkpoint);

    std::vector<EpochLog> log = train_model(net, data, cfg.train, cfg.seed, cfg.threads);

    fs::create_directories(cfg.out);
    net.registry().save((fs::path(cfg.out) / "model.ckpt").string());
    write_train_log_csv(log, (fs::path(cfg.out) / "train_log.csv").string());
    write_manifest(cfg.out, {"model.ckpt", "train_log.csv"});

    if (log.empty()) {
        std::cout << format("saved untrained %s weights to %s\n", variant_name(net.variant()).c_str(),
                            cfg.out.c_str());
    } else {
        const EpochLog& last = log.back();
        std::cout << format("trained %s for %d epochs: loss %.4f, train dic %.4f\n",
                            variant_name(net.variant()).c_str(), last.epoch, last.loss, last.dic);
    }
}

void cmd_eval(const ExperimentConfig& cfg) {
    std::vector<SampleRecord> data = acquire_data(cfg);
    SegNet net = build_model_for(cfg, data);
    load_checkpoint_into(net, cfg);
    std::vector<SampleRecord> tests = test_split(data);
    if (tests.empty()) throw std::runtime_error("test split is empty");

    std::vector<EvalRow> rows = evaluate(net, tests, cfg.threads);
    fs::create_directories(cfg.out);
    write_metrics_csv(rows, (fs::path(cfg.out) / "metrics.csv").string());
    write_manifest(cfg.out, {"metrics.csv"});
    std::cout << format("%d test images: mean dic %.4f, mean jsc %.4f\n", static_cast<int>(rows.size()),
                        mean_dic(rows), mean_jsc(rows));
}

void cmd_sweep(const ExperimentConfig& cfg) {
    std::vector<SampleRecord> data = acquire_data(cfg);
    SegNet net = build_model_for(cfg, data);
    load_checkpoint_into(net, cfg);
    std::vector<SampleRecord> tests = test_split(data);
    if (tests.empty()) throw std::runtime_error("test split is empty");

    std::vector<SweepRow> rows = sweep(net, tests, cfg.attack.intensities, cfg.threads);
    fs::create_directories(cfg.out);
    write_sweep_csv(rows, (fs::path(cfg.out) / "sweep.csv").string());
    write_sweep_svg(rows, (fs::path(cfg.out) / "sweep.svg").string());
    write_manifest(cfg.out, {"sweep.csv", "sweep.svg"});
    for (const SweepRow& r : rows)
        std::cout << format("intensity %5.2f: dic %.4f, jsc %.4f\n", r.epsilon, r.dic, r.jsc);
}

void cmd_ablate(const ExperimentConfig& cfg) {
    std::vector<SampleRecord> data = acquire_data(cfg);
    std::vector<SampleRecord> tests = test_split(data);
    if (tests.empty()) throw std::runtime_error("test split is empty");
    fs::create_directories(cfg.out);

    struct Stage {
        const char* name;
        ModelVariant variant;
        bool frozen;  // context/attention modules train, everything else is pinned
    };
    // protocol: train the plain network once, then graft each enhancement
    // onto its weights with the shared trunk pinned; the final stage resumes
    // from the grafted full model with everything free
    const Stage stages[] = {{"no-nlce", ModelVariant::no_nlce, false},
                            {"no-nl", ModelVariant::no_nl, true},
                            {"no-ce", ModelVariant::no_ce, true},
                            {"full-frozen", ModelVariant::full, true},
                            {"full", ModelVariant::full, false}};

    std::string base_ckpt;
    std::string grafted_ckpt;
    std::vector<std::pair<std::string, std::vector<SweepRow>>> curves;
    std::vector<std::string> rels;
    std::string audit = "stage,name,frozen,before,after,changed\n";

    for (int si = 0; si < 5; ++si) {
        const Stage& st = stages[si];
        ExperimentConfig scfg = cfg;
        scfg.variant = st.variant;
        SegNet net = build_model_for(scfg, data);

        int epochs_override = 0;
        if (si > 0) {
            epochs_override = cfg.train.finetune_epochs > 0 ? cfg.train.finetune_epochs : cfg.train.epochs;
            if (si == 4) {
                net.registry().load(grafted_ckpt);
            } else {
                net.registry().load_matching(base_ckpt);
            }
        }
        net.freeze_base(st.frozen);

        std::vector<std::pair<std::string, uint64_t>> before;
        if (st.frozen) before = net.registry().checksums();

        std::vector<EpochLog> log =
            train_model(net, data, cfg.train, derive_seed(cfg.seed, 0x57a6e00ull + static_cast<uint64_t>(si)),
                        cfg.threads, epochs_override);

        if (st.frozen) {
            std::vector<std::pair<std::string, uint64_t>> after = net.registry().checksums();
            for (size_t i = 0; i < before.size(); ++i) {
                bool frozen_entry = before[i].first.rfind("nlce", 0) != 0;
                audit += format("%s,%s,%d,%s,%s,%d\n", st.name, before[i].first.c_str(), frozen_entry ? 1 : 0,
                                hex64(before[i].second).c_str(), hex64(after[i].second).c_str(),
                                before[i].second != after[i].second ? 1 : 0);
            }
        }

        fs::path sdir = fs::path(cfg.out) / st.name;
        fs::create_directories(sdir);
        net.registry().save((sdir / "model.ckpt").string());
        write_train_log_csv(log, (sdir / "train_log.csv").string());
        rels.push_back(std::string(st.name) + "/model.ckpt");
        rels.push_back(std::string(st.name) + "/train_log.csv");

        if (si == 0) base_ckpt = (sdir / "model.ckpt").string();
        if (si == 3) grafted_ckpt = (sdir / "model.ckpt").string();

        std::vector<SweepRow> sweep_rows = sweep(net, tests, cfg.attack.intensities, cfg.threads);
        write_sweep_csv(sweep_rows, (sdir / "sweep.csv").string());
        rels.push_back(std::string(st.name) + "/sweep.csv");
        curves.emplace_back(st.name, sweep_rows);

        const SweepRow& clean = sweep_rows.front();
        const SweepRow& worst = sweep_rows.back();
        std::cout << format("%-12s clean dic %.4f, dic at intensity %g: %.4f\n", st.name, clean.dic, worst.epsilon,
                            worst.dic);
    }

    std::ofstream ab = open_out((fs::path(cfg.out) / "ablation.csv").string());
    ab << "model,epsilon,dic,jsc,n_images\n";
    for (const auto& [name, rows] : curves)
        for (const SweepRow& r : rows)
            ab << format("%s,%.6f,%.6f,%.6f,%d\n", name.c_str(), r.epsilon, r.dic, r.jsc, r.n_images);
    finish_out(ab, (fs::path(cfg.out) / "ablation.csv").string());

    std::ofstream au = open_out((fs::path(cfg.out) / "freeze_audit.csv").string());
    au << audit;
    finish_out(au, (fs::path(cfg.out) / "freeze_audit.csv").string());

    write_comparison_svg(curves, (fs::path(cfg.out) / "ablation.svg").string());
    rels.insert(rels.end(), {"ablation.csv", "ablation.svg", "freeze_audit.csv"});
    write_manifest(cfg.out, rels);
}

}  // namespace robseg
