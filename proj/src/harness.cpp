#include "mixtailor/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mixtailor {

namespace {

// stream id for deterministic pool construction from the experiment seed
constexpr std::uint64_t kPoolBuildStream = 6;

Dataset make_blobs(const DatasetSpec& spec, SeededRng& rng) {
    Dataset ds;
    ds.dim = spec.dim;
    ds.num_classes = spec.num_classes;
    // class centers drawn once per dataset; the spread is deliberately modest
    // so accuracy stays noise-sensitive instead of saturating
    std::vector<GradVec> centers(spec.num_classes, GradVec(spec.dim));
    for (auto& c : centers)
        for (double& v : c) v = 0.5 * rng.normal();
    ds.x.reserve(spec.num_examples);
    ds.label.reserve(spec.num_examples);
    for (int i = 0; i < spec.num_examples; ++i) {
        int cls = i % spec.num_classes;  // balanced classes
        GradVec x(spec.dim);
        for (int c = 0; c < spec.dim; ++c)
            x[c] = centers[cls][c] + spec.noise_scale * rng.normal();
        ds.x.push_back(std::move(x));
        ds.label.push_back(cls);
    }
    return ds;
}

Dataset make_linear(const DatasetSpec& spec, SeededRng& rng) {
    Dataset ds;
    ds.dim = spec.dim;
    ds.num_classes = 0;
    GradVec w_star(spec.dim);
    for (double& v : w_star) v = rng.normal();
    double b_star = rng.normal();
    for (int i = 0; i < spec.num_examples; ++i) {
        GradVec x(spec.dim);
        for (double& v : x) v = rng.normal();
        double y = dot(w_star, x) + b_star + spec.noise_scale * rng.normal();
        ds.x.push_back(std::move(x));
        ds.target.push_back(y);
    }
    return ds;
}

Dataset make_logistic(const DatasetSpec& spec, SeededRng& rng) {
    Dataset ds;
    ds.dim = spec.dim;
    ds.num_classes = 2;
    GradVec w_star(spec.dim);
    for (double& v : w_star) v = rng.normal();
    for (int i = 0; i < spec.num_examples; ++i) {
        GradVec x(spec.dim);
        for (double& v : x) v = rng.normal();
        double margin = dot(w_star, x) + spec.noise_scale * rng.normal();
        ds.x.push_back(std::move(x));
        ds.label.push_back(margin > 0.0 ? 1 : 0);
    }
    return ds;
}

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw InvalidInput(std::string("idx: truncated ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec, SeededRng& rng) {
    if (spec.kind == DatasetKind::IdxImages)
        return load_idx_dataset(spec.images_path, spec.labels_path);
    if (spec.num_examples < 1) throw InvalidInput("dataset: num_examples must be >= 1");
    if (spec.dim < 1) throw InvalidInput("dataset: dim must be >= 1");
    switch (spec.kind) {
        case DatasetKind::SyntheticBlobs:
            if (spec.num_classes < 2) throw InvalidInput("blobs: num_classes must be >= 2");
            return make_blobs(spec, rng);
        case DatasetKind::SyntheticLinear:
            return make_linear(spec, rng);
        case DatasetKind::SyntheticLogistic:
            return make_logistic(spec, rng);
        case DatasetKind::IdxImages:
            break;
    }
    throw InvalidInput("make_dataset: unknown kind");
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw InvalidInput("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw InvalidInput("idx: cannot open " + labels_path);

    if (read_be32(imgs, "image magic") != 0x00000803u)
        throw InvalidInput("idx: bad image magic, expected 0x00000803");
    std::uint32_t count = read_be32(imgs, "image count");
    std::uint32_t rows = read_be32(imgs, "rows");
    std::uint32_t cols = read_be32(imgs, "cols");

    if (read_be32(labs, "label magic") != 0x00000801u)
        throw InvalidInput("idx: bad label magic, expected 0x00000801");
    std::uint32_t lcount = read_be32(labs, "label count");
    if (lcount != count) throw InvalidInput("idx: image/label count mismatch");

    Dataset ds;
    ds.dim = static_cast<int>(rows * cols);
    std::vector<unsigned char> buf(ds.dim);
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), ds.dim);
        if (!imgs) throw InvalidInput("idx: truncated image data");
        GradVec x(ds.dim);
        for (int c = 0; c < ds.dim; ++c) x[c] = buf[c] / 255.0;
        ds.x.push_back(std::move(x));
        char lb;
        labs.read(&lb, 1);
        if (!labs) throw InvalidInput("idx: truncated label data");
        int lv = static_cast<unsigned char>(lb);
        ds.label.push_back(lv);
        max_label = std::max(max_label, lv);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

std::vector<std::vector<int>> partition_dataset(const Dataset& ds, PartitionMode mode,
                                                int n, SeededRng& rng) {
    const int total = static_cast<int>(ds.x.size());
    if (total < n) throw InvalidInput("partition: dataset smaller than n");
    std::vector<int> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::vector<int>> shards(n);
    if (mode == PartitionMode::IidEqual) {
        rng.shuffle(idx);
        for (int i = 0; i < total; ++i) shards[i % n].push_back(idx[i]);
    } else {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return ds.label[a] < ds.label[b]; });
        // contiguous split, sizes differing by at most one
        int base = total / n, extra = total % n, pos = 0;
        for (int w = 0; w < n; ++w) {
            int sz = base + (w < extra ? 1 : 0);
            shards[w].assign(idx.begin() + pos, idx.begin() + pos + sz);
            pos += sz;
        }
    }
    return shards;
}

// --- Model ----------------------------------------------------------------

Model::Model(const ModelSpec& spec, int dim, int num_classes)
    : spec_(spec), dim_(dim), classes_(num_classes) {
    switch (spec.kind) {
        case ModelKind::Linear:
            param_count_ = dim + 1;
            break;
        case ModelKind::Logistic:
            if (classes_ < 2) throw ConfigError("logistic model needs >= 2 classes");
            param_count_ = classes_ * dim + classes_;
            break;
        case ModelKind::Mlp:
            if (classes_ < 2) throw ConfigError("mlp model needs >= 2 classes");
            if (spec.hidden < 1) throw ConfigError("mlp hidden width must be >= 1");
            param_count_ = spec.hidden * dim + spec.hidden + classes_ * spec.hidden + classes_;
            break;
    }
}

GradVec Model::init_params(SeededRng& rng) const {
    GradVec w(param_count_);
    for (double& v : w) v = spec_.init_scale * rng.normal();
    return w;
}

namespace {

void softmax_in_place(std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

}  // namespace

double Model::loss(const GradVec& w, const Dataset& ds, std::span<const int> idx) const {
    if (idx.empty()) throw InvalidInput("model loss: empty index set");
    double total = 0.0;
    switch (spec_.kind) {
        case ModelKind::Linear: {
            for (int i : idx) {
                double pred = w[dim_];
                for (int c = 0; c < dim_; ++c) pred += w[c] * ds.x[i][c];
                double e = pred - ds.target[i];
                total += 0.5 * e * e;
            }
            break;
        }
        case ModelKind::Logistic: {
            std::vector<double> logits(classes_);
            for (int i : idx) {
                for (int k = 0; k < classes_; ++k) {
                    double z = w[classes_ * dim_ + k];
                    for (int c = 0; c < dim_; ++c) z += w[k * dim_ + c] * ds.x[i][c];
                    logits[k] = z;
                }
                double mx = *std::max_element(logits.begin(), logits.end());
                double lse = 0.0;
                for (double z : logits) lse += std::exp(z - mx);
                total += mx + std::log(lse) - logits[ds.label[i]];
            }
            break;
        }
        case ModelKind::Mlp: {
            const int h = spec_.hidden;
            const int w2_off = h * dim_ + h;
            std::vector<double> hid(h), logits(classes_);
            for (int i : idx) {
                for (int j = 0; j < h; ++j) {
                    double z = w[h * dim_ + j];
                    for (int c = 0; c < dim_; ++c) z += w[j * dim_ + c] * ds.x[i][c];
                    hid[j] = std::tanh(z);
                }
                for (int k = 0; k < classes_; ++k) {
                    double z = w[w2_off + classes_ * h + k];
                    for (int j = 0; j < h; ++j) z += w[w2_off + k * h + j] * hid[j];
                    logits[k] = z;
                }
                double mx = *std::max_element(logits.begin(), logits.end());
                double lse = 0.0;
                for (double z : logits) lse += std::exp(z - mx);
                total += mx + std::log(lse) - logits[ds.label[i]];
            }
            break;
        }
    }
    double avg = total / static_cast<double>(idx.size());
    return avg + 0.5 * spec_.weight_decay * dot(w, w);
}

GradVec Model::gradient(const GradVec& w, const Dataset& ds, std::span<const int> idx) const {
    if (idx.empty()) throw InvalidInput("model gradient: empty index set");
    GradVec g(param_count_, 0.0);
    switch (spec_.kind) {
        case ModelKind::Linear: {
            for (int i : idx) {
                double pred = w[dim_];
                for (int c = 0; c < dim_; ++c) pred += w[c] * ds.x[i][c];
                double e = pred - ds.target[i];
                for (int c = 0; c < dim_; ++c) g[c] += e * ds.x[i][c];
                g[dim_] += e;
            }
            break;
        }
        case ModelKind::Logistic: {
            std::vector<double> logits(classes_);
            for (int i : idx) {
                for (int k = 0; k < classes_; ++k) {
                    double z = w[classes_ * dim_ + k];
                    for (int c = 0; c < dim_; ++c) z += w[k * dim_ + c] * ds.x[i][c];
                    logits[k] = z;
                }
                softmax_in_place(logits);
                logits[ds.label[i]] -= 1.0;
                for (int k = 0; k < classes_; ++k) {
                    for (int c = 0; c < dim_; ++c) g[k * dim_ + c] += logits[k] * ds.x[i][c];
                    g[classes_ * dim_ + k] += logits[k];
                }
            }
            break;
        }
        case ModelKind::Mlp: {
            const int h = spec_.hidden;
            const int w2_off = h * dim_ + h;
            std::vector<double> pre(h), hid(h), logits(classes_), dhid(h);
            for (int i : idx) {
                for (int j = 0; j < h; ++j) {
                    double z = w[h * dim_ + j];
                    for (int c = 0; c < dim_; ++c) z += w[j * dim_ + c] * ds.x[i][c];
                    pre[j] = z;
                    hid[j] = std::tanh(z);
                }
                for (int k = 0; k < classes_; ++k) {
                    double z = w[w2_off + classes_ * h + k];
                    for (int j = 0; j < h; ++j) z += w[w2_off + k * h + j] * hid[j];
                    logits[k] = z;
                }
                softmax_in_place(logits);
                logits[ds.label[i]] -= 1.0;
                std::fill(dhid.begin(), dhid.end(), 0.0);
                for (int k = 0; k < classes_; ++k) {
                    for (int j = 0; j < h; ++j) {
                        g[w2_off + k * h + j] += logits[k] * hid[j];
                        dhid[j] += logits[k] * w[w2_off + k * h + j];
                    }
                    g[w2_off + classes_ * h + k] += logits[k];
                }
                for (int j = 0; j < h; ++j) {
                    double dz = dhid[j] * (1.0 - hid[j] * hid[j]);
                    for (int c = 0; c < dim_; ++c) g[j * dim_ + c] += dz * ds.x[i][c];
                    g[h * dim_ + j] += dz;
                }
            }
            break;
        }
    }
    double inv = 1.0 / static_cast<double>(idx.size());
    for (int c = 0; c < param_count_; ++c) g[c] = g[c] * inv + spec_.weight_decay * w[c];
    return g;
}

double Model::accuracy(const GradVec& w, const Dataset& ds, std::span<const int> idx) const {
    if (idx.empty()) throw InvalidInput("model accuracy: empty index set");
    if (spec_.kind == ModelKind::Linear) {
        // regression: report negative mean squared error
        double mse = 0.0;
        for (int i : idx) {
            double pred = w[dim_];
            for (int c = 0; c < dim_; ++c) pred += w[c] * ds.x[i][c];
            double e = pred - ds.target[i];
            mse += e * e;
        }
        return -mse / static_cast<double>(idx.size());
    }
    int correct = 0;
    std::vector<double> logits;
    for (int i : idx) {
        int best = 0;
        double best_z = 0.0;
        if (spec_.kind == ModelKind::Logistic) {
            for (int k = 0; k < classes_; ++k) {
                double z = w[classes_ * dim_ + k];
                for (int c = 0; c < dim_; ++c) z += w[k * dim_ + c] * ds.x[i][c];
                if (k == 0 || z > best_z) {
                    best = k;
                    best_z = z;
                }
            }
        } else {
            const int h = spec_.hidden;
            const int w2_off = h * dim_ + h;
            std::vector<double> hid(h);
            for (int j = 0; j < h; ++j) {
                double z = w[h * dim_ + j];
                for (int c = 0; c < dim_; ++c) z += w[j * dim_ + c] * ds.x[i][c];
                hid[j] = std::tanh(z);
            }
            for (int k = 0; k < classes_; ++k) {
                double z = w[w2_off + classes_ * h + k];
                for (int j = 0; j < h; ++j) z += w[w2_off + k * h + j] * hid[j];
                if (k == 0 || z > best_z) {
                    best = k;
                    best_z = z;
                }
            }
        }
        if (best == ds.label[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// --- experiment loop ------------------------------------------------------

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("config: n must be >= 1");
    if (cfg.f < 0) throw ConfigError("config: f must be >= 0");
    if (cfg.n < 2 * cfg.f + 1) throw ConfigError("config: need n >= 2f+1");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.iterations < 1) throw ConfigError("config: iterations must be >= 1");
    if (cfg.eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (cfg.lr <= 0.0) throw ConfigError("config: lr must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("config: momentum must be in [0, 1)");
    if (cfg.dataset.kind != DatasetKind::IdxImages &&
        cfg.dataset.num_examples < cfg.n * cfg.batch_size)
        throw ConfigError("config: need num_examples >= n * batch_size");
    try {
        if (const auto* pool = std::get_if<PoolSpec>(&cfg.aggregator)) {
            validate_pool(*pool, cfg.n, cfg.f);
        } else {
            validate_aggregator(std::get<AggregatorSpec>(cfg.aggregator), cfg.n, cfg.f);
        }
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (cfg.attack.kind == AttackKind::PartialKnowledge &&
        (cfg.attack.k <= cfg.f || cfg.attack.k > cfg.n))
        throw ConfigError("config: partial_knowledge needs f < k <= n");
}

namespace {

std::vector<RoundRecord> run_loop(const ExperimentConfig& cfg, bool omniscient) {
    validate_config(cfg);

    SeededRng data_rng(cfg.seed, Stream::DataShuffle);
    SeededRng init_rng(cfg.seed, Stream::ModelInit);
    SeededRng server_rng(cfg.seed, Stream::PoolDraw);
    SeededRng adversary_rng(cfg.seed, Stream::AttackSearch);

    Dataset ds = make_dataset(cfg.dataset, data_rng);
    // fixed held-out 20% split generated before partitioning
    std::vector<int> all_idx(ds.x.size());
    std::iota(all_idx.begin(), all_idx.end(), 0);
    data_rng.shuffle(all_idx);
    const int test_count = static_cast<int>(ds.x.size()) / 5;
    std::vector<int> test_idx(all_idx.begin(), all_idx.begin() + test_count);
    std::vector<int> train_idx(all_idx.begin() + test_count, all_idx.end());

    Dataset train;
    train.dim = ds.dim;
    train.num_classes = ds.num_classes;
    for (int i : train_idx) {
        train.x.push_back(ds.x[i]);
        if (!ds.label.empty()) train.label.push_back(ds.label[i]);
        if (!ds.target.empty()) train.target.push_back(ds.target[i]);
    }
    auto shards = partition_dataset(train, cfg.partition, cfg.n, data_rng);

    Model model(cfg.model, ds.dim, ds.num_classes);
    GradVec weights = model.init_params(init_rng);
    GradVec momentum_buf(model.param_count(), 0.0);

    std::vector<SeededRng> worker_rngs;
    worker_rngs.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i)
        worker_rngs.emplace_back(cfg.seed, static_cast<std::uint64_t>(Stream::WorkerBase) + i);

    // with no attack every worker is honest; otherwise the first f are Byzantine
    const bool attacked = cfg.attack.kind != AttackKind::None;
    const int f_eff = attacked ? cfg.f : 0;

    const PoolSpec* pool = std::get_if<PoolSpec>(&cfg.aggregator);
    PoolSpec singleton;
    if (!pool) singleton.members = {std::get<AggregatorSpec>(cfg.aggregator)};
    const PoolSpec& known_pool = pool ? *pool : singleton;

    std::vector<int> full_train(train.x.size());
    std::iota(full_train.begin(), full_train.end(), 0);

    std::vector<RoundRecord> records;
    std::vector<int> batch(cfg.batch_size);
    for (int t = 0; t < cfg.iterations; ++t) {
        auto t0 = std::chrono::steady_clock::now();

        std::vector<GradVec> honest;
        honest.reserve(cfg.n - f_eff);
        for (int i = f_eff; i < cfg.n; ++i) {
            const auto& shard = shards[i];
            if (shard.empty()) throw InvalidInput("run_experiment: empty shard");
            for (int b = 0; b < cfg.batch_size; ++b)
                batch[b] = shard[worker_rngs[i].uniform_index(shard.size())];
            honest.push_back(model.gradient(weights, train, batch));
        }
        GradVec honest_mean = agg_mean(honest);

        AggregationOutcome out;
        double attack_param = 0.0;
        if (omniscient) {
            out.result = honest_mean;
            out.chosen_member = -1;
        } else {
            std::vector<GradVec> panel;
            if (attacked) {
                AdversaryView view{honest, known_pool, &adversary_rng};
                AttackOutcome atk = run_attack(cfg.attack, view, cfg.n, cfg.f, nullptr);
                attack_param = atk.attack_param;
                panel = std::move(atk.byzantine);
            }
            panel.insert(panel.end(), honest.begin(), honest.end());
            if (pool) {
                out = agg_mixtailor(panel, *pool, f_eff, server_rng);
            } else {
                out = apply_aggregator(singleton.members[0], panel, f_eff, &server_rng);
                out.chosen_member = -1;
            }
        }

        // server-side momentum on the aggregated vector
        for (int c = 0; c < model.param_count(); ++c)
            momentum_buf[c] = cfg.momentum * momentum_buf[c] + out.result[c];
        double eta = cfg.lr_schedule == LrSchedule::InverseT ? cfg.lr / (t + 1) : cfg.lr;
        double wd = cfg.model.weight_decay;
        for (int c = 0; c < model.param_count(); ++c)
            weights[c] -= eta * (momentum_buf[c] + wd * weights[c]);

        if (!all_finite(weights)) throw DivergenceError(t);

        if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.iterations) {
            RoundRecord rec;
            rec.iteration = t + 1;
            rec.chosen_member = pool && !omniscient ? out.chosen_member : -1;
            rec.attack_param = attack_param;
            rec.train_loss = model.loss(weights, train, full_train);
            rec.test_accuracy = model.accuracy(weights, ds, test_idx);
            rec.dot_clean = dot(out.result, honest_mean);
            rec.wall_clock_us = std::chrono::duration_cast<std::chrono::microseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count();
            records.push_back(rec);
        }
    }
    return records;
}

}  // namespace

std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg) {
    return run_loop(cfg, false);
}

std::vector<RoundRecord> run_omniscient_baseline(const ExperimentConfig& cfg) {
    return run_loop(cfg, true);
}

double final_test_accuracy(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw InvalidInput("final_test_accuracy: no records");
    return records.back().test_accuracy;
}

std::vector<BenchRow> bench_aggregators(int n, int f, int d, int repeats, SeededRng& rng) {
    if (repeats < 1) throw InvalidInput("bench: need repeats >= 1");
    auto make_panel = [&] {
        std::vector<GradVec> panel(n, GradVec(d));
        for (auto& g : panel)
            for (double& v : g) v = rng.normal();
        return panel;
    };

    AggregatorSpec mean, comed, krum, geomed, bulyan;
    mean.kind = AggKind::Mean;
    comed.kind = AggKind::CoordMedian;
    krum.kind = AggKind::GeneralizedKrum;
    geomed.kind = AggKind::GeomMedian;
    bulyan.kind = AggKind::Bulyan;
    // Bulyan with mean selection and Krum-style aggregation, the timing setup
    bulyan.bulyan_select = std::make_shared<AggregatorSpec>(mean);
    bulyan.bulyan_aggregate = std::make_shared<AggregatorSpec>(krum);
    SeededRng pool_rng(12345, kPoolBuildStream);
    PoolSpec pool = build_paper_pool(pool_rng);

    std::vector<BenchRow> rows;
    auto time_one = [&](const std::string& name, auto&& fn) {
        // warmup
        auto warm = make_panel();
        fn(warm);
        double total_us = 0.0;
        for (int r = 0; r < repeats; ++r) {
            auto panel = make_panel();
            auto t0 = std::chrono::steady_clock::now();
            fn(panel);
            total_us += std::chrono::duration_cast<std::chrono::nanoseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count() /
                        1000.0;
        }
        rows.push_back({name, total_us / repeats});
    };

    time_one("mean", [&](std::span<const GradVec> p) { return agg_mean(p); });
    time_one("comed", [&](std::span<const GradVec> p) { return agg_coord_median(p); });
    time_one("krum", [&](std::span<const GradVec> p) {
        return agg_generalized_krum(p, PNorm{2.0}, f).result;
    });
    time_one("geomed", [&](std::span<const GradVec> p) { return agg_geom_median(p); });
    time_one("bulyan", [&](std::span<const GradVec> p) {
        return agg_bulyan(p, f, *bulyan.bulyan_select, *bulyan.bulyan_aggregate);
    });
    time_one("mixtailor", [&](std::span<const GradVec> p) {
        return agg_mixtailor(p, pool, f, rng).result;
    });
    return rows;
}

// --- config and description parsing ---------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<double> parse_list(const std::string& s, char sep) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, sep)) {
        cell = trim(cell);
        if (cell.empty()) continue;
        out.push_back(std::stod(cell));
    }
    return out;
}

AggKind parse_agg_kind(const std::string& v, const std::string& ctx) {
    if (v == "mean") return AggKind::Mean;
    if (v == "comed") return AggKind::CoordMedian;
    if (v == "trimmed_mean") return AggKind::TrimmedMean;
    if (v == "krum") return AggKind::GeneralizedKrum;
    if (v == "geomed") return AggKind::GeomMedian;
    if (v == "bulyan") return AggKind::Bulyan;
    throw ConfigError(ctx + ": unknown aggregator kind '" + v + "'");
}

AttackKind parse_attack_kind(const std::string& v, const std::string& ctx) {
    if (v == "none") return AttackKind::None;
    if (v == "epsilon_reverse") return AttackKind::EpsilonReverse;
    if (v == "partial_knowledge") return AttackKind::PartialKnowledge;
    if (v == "random_epsilon") return AttackKind::RandomEpsilon;
    if (v == "adaptive") return AttackKind::Adaptive;
    if (v == "minmax_pool") return AttackKind::MinMaxPool;
    if (v == "a_little") return AttackKind::ALittle;
    throw ConfigError(ctx + ": unknown attack kind '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    AggregatorSpec agg;  // assembled then stored
    bool use_paper_pool = false;
    std::string bulyan_select = "krum", bulyan_aggregate = "trimmed_mean";
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        const std::string ctx = "config line " + std::to_string(lineno);
        try {
            if (key == "n") cfg.n = std::stoi(val);
            else if (key == "f") cfg.f = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "momentum") cfg.momentum = std::stod(val);
            else if (key == "lr_schedule") {
                if (val == "constant") cfg.lr_schedule = LrSchedule::Constant;
                else if (val == "inv_t") cfg.lr_schedule = LrSchedule::InverseT;
                else throw ConfigError(ctx + ": unknown lr_schedule '" + val + "'");
            }
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "iterations") cfg.iterations = std::stoi(val);
            else if (key == "eval_every") cfg.eval_every = std::stoi(val);
            else if (key == "dataset") {
                if (val == "blobs") cfg.dataset.kind = DatasetKind::SyntheticBlobs;
                else if (val == "linear") cfg.dataset.kind = DatasetKind::SyntheticLinear;
                else if (val == "logistic") cfg.dataset.kind = DatasetKind::SyntheticLogistic;
                else if (val == "idx") cfg.dataset.kind = DatasetKind::IdxImages;
                else throw ConfigError(ctx + ": unknown dataset '" + val + "'");
            }
            else if (key == "num_examples") cfg.dataset.num_examples = std::stoi(val);
            else if (key == "dim") cfg.dataset.dim = std::stoi(val);
            else if (key == "num_classes") cfg.dataset.num_classes = std::stoi(val);
            else if (key == "noise_scale") cfg.dataset.noise_scale = std::stod(val);
            else if (key == "images_path") cfg.dataset.images_path = val;
            else if (key == "labels_path") cfg.dataset.labels_path = val;
            else if (key == "partition") {
                if (val == "iid") cfg.partition = PartitionMode::IidEqual;
                else if (val == "label_sorted") cfg.partition = PartitionMode::LabelSorted;
                else throw ConfigError(ctx + ": unknown partition '" + val + "'");
            }
            else if (key == "model") {
                if (val == "linear") cfg.model.kind = ModelKind::Linear;
                else if (val == "logistic") cfg.model.kind = ModelKind::Logistic;
                else if (val == "mlp") cfg.model.kind = ModelKind::Mlp;
                else throw ConfigError(ctx + ": unknown model '" + val + "'");
            }
            else if (key == "hidden") cfg.model.hidden = std::stoi(val);
            else if (key == "weight_decay") cfg.model.weight_decay = std::stod(val);
            else if (key == "init_scale") cfg.model.init_scale = std::stod(val);
            else if (key == "aggregator") {
                if (val == "paper_pool") use_paper_pool = true;
                else agg.kind = parse_agg_kind(val, ctx);
            }
            else if (key == "agg_p") agg.p = std::stod(val);
            else if (key == "trim_f") agg.trim_f = std::stoi(val);
            else if (key == "resample_s") agg.resample_s = std::stoi(val);
            else if (key == "bulyan_select") bulyan_select = val;
            else if (key == "bulyan_aggregate") bulyan_aggregate = val;
            else if (key == "attack") cfg.attack.kind = parse_attack_kind(val, ctx);
            else if (key == "epsilon") cfg.attack.epsilon = std::stod(val);
            else if (key == "epsilon_set") cfg.attack.epsilon_set = parse_list(val, ',');
            else if (key == "k") cfg.attack.k = std::stoi(val);
            else if (key == "z") cfg.attack.z = std::stod(val);
            else if (key == "lambda_grid") cfg.attack.lambda_grid = parse_list(val, ',');
            else if (key == "baseline") cfg.with_baseline = (val == "1" || val == "omniscient" || val == "true");
            else throw ConfigError(ctx + ": unknown key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(ctx + ": bad value '" + val + "' for key '" + key + "'");
        }
    }
    if (use_paper_pool) {
        SeededRng pool_rng(cfg.seed, kPoolBuildStream);
        cfg.aggregator = build_paper_pool(pool_rng);
    } else {
        if (agg.kind == AggKind::Bulyan) {
            auto sel = std::make_shared<AggregatorSpec>();
            sel->kind = parse_agg_kind(bulyan_select, "config bulyan_select");
            sel->p = agg.p;
            auto ag = std::make_shared<AggregatorSpec>();
            ag->kind = parse_agg_kind(bulyan_aggregate, "config bulyan_aggregate");
            ag->p = agg.p;
            agg.bulyan_select = sel;
            agg.bulyan_aggregate = ag;
        }
        cfg.aggregator = agg;
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

void write_metrics_csv(std::ostream& out, std::span<const RoundRecord> records,
                       bool with_timings) {
    out << "iteration,chosen_member,attack_param,train_loss,test_accuracy,dot_clean,"
           "wall_clock_us\n";
    for (const auto& r : records) {
        out << r.iteration << ',' << r.chosen_member << ',' << format_real(r.attack_param)
            << ',' << format_real(r.train_loss) << ',' << format_real(r.test_accuracy)
            << ',' << format_real(r.dot_clean) << ','
            << (with_timings ? r.wall_clock_us : 0) << '\n';
    }
}

AggregatorSpec parse_aggregator_descr(const std::string& descr) {
    AggregatorSpec agg;
    std::string select = "krum", aggregate = "trimmed_mean";
    std::stringstream ss(descr);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        pair = trim(pair);
        if (pair.empty()) continue;
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw ConfigError("aggregator descr: expected key=value, got '" + pair + "'");
        std::string key = trim(pair.substr(0, eq));
        std::string val = trim(pair.substr(eq + 1));
        if (key == "kind") agg.kind = parse_agg_kind(val, "aggregator descr");
        else if (key == "p") agg.p = std::stod(val);
        else if (key == "trim_f") agg.trim_f = std::stoi(val);
        else if (key == "resample_s") agg.resample_s = std::stoi(val);
        else if (key == "select") select = val;
        else if (key == "aggregate") aggregate = val;
        else throw ConfigError("aggregator descr: unknown key '" + key + "'");
    }
    if (agg.kind == AggKind::Bulyan) {
        auto sel = std::make_shared<AggregatorSpec>();
        sel->kind = parse_agg_kind(select, "aggregator descr select");
        sel->p = agg.p;
        auto ag = std::make_shared<AggregatorSpec>();
        ag->kind = parse_agg_kind(aggregate, "aggregator descr aggregate");
        ag->p = agg.p;
        agg.bulyan_select = sel;
        agg.bulyan_aggregate = ag;
    }
    return agg;
}

AttackSpec parse_attack_descr(const std::string& descr) {
    AttackSpec atk;
    std::stringstream ss(descr);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        pair = trim(pair);
        if (pair.empty()) continue;
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw ConfigError("attack descr: expected key=value, got '" + pair + "'");
        std::string key = trim(pair.substr(0, eq));
        std::string val = trim(pair.substr(eq + 1));
        if (key == "kind") atk.kind = parse_attack_kind(val, "attack descr");
        else if (key == "epsilon") atk.epsilon = std::stod(val);
        else if (key == "epsilon_set") atk.epsilon_set = parse_list(val, ';');
        else if (key == "k") atk.k = std::stoi(val);
        else if (key == "z") atk.z = std::stod(val);
        else if (key == "lambda_grid") atk.lambda_grid = parse_list(val, ';');
        else throw ConfigError("attack descr: unknown key '" + key + "'");
    }
    return atk;
}

}  // namespace mixtailor
