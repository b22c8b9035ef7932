#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "robseg/attack.hpp"
#include "robseg/data.hpp"
#include "robseg/params.hpp"
#include "robseg/segnet.hpp"

namespace robseg {

// Orchestration: optimizer, schedules, config files, training/evaluation
// loops, and the report artifacts every command writes next to its outputs.

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // folded into the gradient, classic L2
};

// Moment state is keyed by parameter name, so one optimizer instance follows
// a registry through freeze/unfreeze cycles.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update from the accumulated gradients, then leaves the
    // gradients cleared. Parameters without gradients are skipped.
    void step(ParamRegistry& reg, double lr);

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
    int64_t t_ = 0;
};

// Learning-rate plateau rule: decay by a fixed factor after `patience`
// consecutive epochs without a new best loss, never below the floor.
class PlateauSchedule {
public:
    PlateauSchedule(double lr, double decay, int patience, double floor)
        : lr_(lr), decay_(decay), patience_(patience), floor_(floor) {}

    // Feed one epoch-mean loss; returns the rate to use for the next epoch.
    double observe(double epoch_loss);
    double lr() const { return lr_; }

private:
    double lr_, decay_;
    int patience_;
    double floor_;
    double best_ = 0.0;
    bool seen_ = false;
    int stale_ = 0;
};

struct DataConfig {
    std::string path;  // non-empty: load this directory instead of synthesizing
    SynthKind kind = SynthKind::lung;
    int count = 250;
    int side = 64;
    double noise = 8.0;
    double train_fraction = 0.8;
};

struct TrainConfig {
    int epochs = 30;
    int finetune_epochs = 0;  // 0: reuse epochs for fine-tuning stages
    int batch = 8;
    double lr = 1e-3;
    double lr_floor = 1e-4;
    double lr_decay = 0.9;
    int patience = 3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool augment = true;
};

struct AttackRunConfig {
    std::vector<double> intensities = default_intensities();
};

struct ExperimentConfig {
    DataConfig data;
    ModelVariant variant = ModelVariant::full;
    BackboneConfig backbone;
    TrainConfig train;
    AttackRunConfig attack;
    uint64_t seed = 0;
    std::string out = "run_out";
    std::string checkpoint;
    int threads = 1;
};

// Comma-separated positive attack intensities, e.g. "0.5,1,2,4".
std::vector<double> parse_intensity_list(const std::string& text);

// Plain-text config: [section] headers over key = value lines, '#' comments.
// Unknown sections or keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
// Same grammar from a string, for embedding and tests.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

// Loads the configured directory or synthesizes the configured dataset.
std::vector<SampleRecord> acquire_data(const ExperimentConfig& cfg);
// Backbone adjusted to the dataset at hand (input side, channel count).
SegNet build_model_for(const ExperimentConfig& cfg, const std::vector<SampleRecord>& data);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double dic = 0.0;
    double lr = 0.0;
};

// Trains on the records flagged train, in place. Deterministic in (seed,
// thread count). Aborts with epoch/step context if the loss leaves the reals.
std::vector<EpochLog> train_model(SegNet& net, const std::vector<SampleRecord>& data, const TrainConfig& tc,
                                  uint64_t seed, int threads, int epochs_override = 0);

struct EvalRow {
    std::string id;
    double dic = 0.0;
    double jsc = 0.0;
};

std::vector<EvalRow> evaluate_with(const std::function<Mask(const SampleRecord&)>& predict,
                                   const std::vector<SampleRecord>& records, int threads);
std::vector<EvalRow> evaluate(SegNet& net, const std::vector<SampleRecord>& records, int threads);
double mean_dic(const std::vector<EvalRow>& rows);
double mean_jsc(const std::vector<EvalRow>& rows);

void write_train_log_csv(const std::vector<EpochLog>& log, const std::string& path);
// Per-record rows plus a closing mean row.
void write_metrics_csv(const std::vector<EvalRow>& rows, const std::string& path);
// DIC and JSC curves over intensity; fixed axes, intensity 0..32, metric 0..1.
void write_sweep_svg(const std::vector<SweepRow>& rows, const std::string& path);
// One DIC curve per named model on the same fixed axes.
void write_comparison_svg(const std::vector<std::pair<std::string, std::vector<SweepRow>>>& curves,
                          const std::string& path);
// manifest.txt inside dir: content hash and relative path per emitted file.
void write_manifest(const std::string& dir, const std::vector<std::string>& rel_paths);

// Subcommand bodies; they throw on failure, the CLI maps that to exit codes.
void cmd_synth(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_sweep(const ExperimentConfig& cfg);
void cmd_ablate(const ExperimentConfig& cfg);

}  // namespace robseg
