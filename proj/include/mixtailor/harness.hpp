#pragma once

// Deterministic single-process simulation of the distributed training loop:
// datasets, partitioning, desk-scale models with closed-form gradients, SGD
// with momentum, per-round attack injection and aggregation, metrics.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mixtailor/aggregators.hpp"
#include "mixtailor/attacks.hpp"
#include "mixtailor/bounds.hpp"
#include "mixtailor/core.hpp"

namespace mixtailor {

enum class DatasetKind { SyntheticLinear, SyntheticLogistic, SyntheticBlobs, IdxImages };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::SyntheticBlobs;
    int num_examples = 1200;
    int dim = 19;
    int num_classes = 10;
    double noise_scale = 1.0;
    std::string images_path;
    std::string labels_path;
};

struct Dataset {
    std::vector<GradVec> x;
    std::vector<int> label;      // classification; empty for regression
    std::vector<double> target;  // regression; empty for classification
    int dim = 0;
    int num_classes = 0;  // 0 for regression
};

Dataset make_dataset(const DatasetSpec& spec, SeededRng& rng);

// IDX ubyte pair: big-endian magic 0x803 (images) / 0x801 (labels),
// big-endian 32-bit dimension sizes, row-major pixel bytes scaled to [0,1].
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

enum class PartitionMode { IidEqual, LabelSorted };

// IidEqual: global shuffle with the data stream, then round-robin split.
// LabelSorted: stable sort by label, then contiguous equal split.
std::vector<std::vector<int>> partition_dataset(const Dataset& ds, PartitionMode mode,
                                                int n, SeededRng& rng);

enum class ModelKind { Linear, Logistic, Mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    int hidden = 16;  // Mlp hidden width
    double weight_decay = 0.0;
    double init_scale = 0.01;
};

// Parameter layout plus closed-form loss/gradient/prediction.
class Model {
public:
    Model(const ModelSpec& spec, int dim, int num_classes);

    int param_count() const { return param_count_; }
    GradVec init_params(SeededRng& rng) const;

    // loss and gradient include the weight-decay term
    double loss(const GradVec& w, const Dataset& ds, std::span<const int> idx) const;
    GradVec gradient(const GradVec& w, const Dataset& ds, std::span<const int> idx) const;
    double accuracy(const GradVec& w, const Dataset& ds, std::span<const int> idx) const;

private:
    ModelSpec spec_;
    int dim_ = 0;
    int classes_ = 0;
    int param_count_ = 0;
};

struct ExperimentConfig {
    int n = 12;
    int f = 2;
    DatasetSpec dataset;
    PartitionMode partition = PartitionMode::IidEqual;
    ModelSpec model;
    std::variant<AggregatorSpec, PoolSpec> aggregator = AggregatorSpec{};
    AttackSpec attack;
    double lr = 0.05;
    double momentum = 0.9;
    LrSchedule lr_schedule = LrSchedule::Constant;
    int batch_size = 2;
    int iterations = 2000;
    int eval_every = 50;
    std::uint64_t seed = 0;
    bool with_baseline = false;  // CLI: also run and report the omniscient gap
};

// Validates all module-level preconditions at load time. Throws ConfigError.
void validate_config(const ExperimentConfig& cfg);

struct RoundRecord {
    int iteration = 0;
    int chosen_member = -1;  // pool index, -1 for deterministic rules
    double attack_param = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double dot_clean = 0.0;
    long long wall_clock_us = 0;
};

struct DivergenceError : std::runtime_error {
    int iteration;
    explicit DivergenceError(int iter)
        : std::runtime_error("model state diverged (NaN) at iteration " +
                             std::to_string(iter)),
          iteration(iter) {}
};

std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg);

// Attack-free reference: averages exactly the honest workers' gradients.
std::vector<RoundRecord> run_omniscient_baseline(const ExperimentConfig& cfg);

double final_test_accuracy(const std::vector<RoundRecord>& records);

struct BenchRow {
    std::string name;
    double mean_us = 0.0;
};

// Times each rule (and the pool draw) on synthetic panels of shape (n, d).
std::vector<BenchRow> bench_aggregators(int n, int f, int d, int repeats,
                                        SeededRng& rng);

// Flat key = value config file, '#' comments, unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config(std::istream& in);

// Metrics CSV. Timings are zeroed unless with_timings so that identical
// (config, seed) runs produce byte-identical files.
void write_metrics_csv(std::ostream& out, std::span<const RoundRecord> records,
                       bool with_timings = false);

// key=value[,key=value...] descriptions used by the aggregate/attack commands
AggregatorSpec parse_aggregator_descr(const std::string& descr);
AttackSpec parse_attack_descr(const std::string& descr);

}  // namespace mixtailor
