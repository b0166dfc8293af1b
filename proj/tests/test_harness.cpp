#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mixtailor/harness.hpp"

using namespace mixtailor;

namespace {

// central finite difference over every parameter
GradVec numeric_gradient(const Model& model, const GradVec& w, const Dataset& ds,
                         std::span<const int> idx, double h = 1e-5) {
    GradVec g(w.size());
    GradVec wp = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        wp[i] = w[i] + h;
        double up = model.loss(wp, ds, idx);
        wp[i] = w[i] - h;
        double dn = model.loss(wp, ds, idx);
        wp[i] = w[i];
        g[i] = (up - dn) / (2 * h);
    }
    return g;
}

void check_gradient(const ModelSpec& spec, const DatasetSpec& dspec, std::uint64_t seed) {
    SeededRng data_rng(seed, static_cast<std::uint64_t>(Stream::DataShuffle));
    Dataset ds = make_dataset(dspec, data_rng);
    Model model(spec, ds.dim, ds.num_classes);
    SeededRng init_rng(seed, static_cast<std::uint64_t>(Stream::ModelInit));
    GradVec w = model.init_params(init_rng);
    // perturb away from the origin so the test is not trivially at a symmetric point
    for (double& v : w) v += 0.1 * init_rng.normal();
    std::vector<int> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    GradVec analytic = model.gradient(w, ds, idx);
    GradVec numeric = numeric_gradient(model, w, ds, idx);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        num += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        den += numeric[i] * numeric[i];
    }
    CHECK(std::sqrt(num) <= 1e-4 * (1.0 + std::sqrt(den)));
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

TEST_CASE("synthetic dataset shapes") {
    SeededRng rng(40, static_cast<std::uint64_t>(Stream::DataShuffle));
    DatasetSpec spec;
    spec.kind = DatasetKind::SyntheticBlobs;
    spec.num_examples = 120;
    spec.dim = 5;
    spec.num_classes = 4;
    Dataset ds = make_dataset(spec, rng);
    CHECK(ds.x.size() == 120);
    CHECK(ds.dim == 5);
    CHECK(ds.num_classes == 4);
    REQUIRE(ds.label.size() == 120);
    std::vector<int> counts(4, 0);
    for (int l : ds.label) {
        REQUIRE(l >= 0);
        REQUIRE(l < 4);
        counts[l]++;
    }
    for (int c : counts) CHECK(c == 30);  // balanced by construction
}

TEST_CASE("partition iid: sizes, disjointness, coverage") {
    SeededRng rng(41, static_cast<std::uint64_t>(Stream::DataShuffle));
    DatasetSpec spec;
    spec.num_examples = 120;
    Dataset ds = make_dataset(spec, rng);
    auto parts = partition_dataset(ds, PartitionMode::IidEqual, 12, rng);
    REQUIRE(parts.size() == 12);
    std::set<int> seen;
    for (const auto& p : parts) {
        CHECK(p.size() == 10);
        for (int i : p) {
            CHECK(seen.insert(i).second);  // disjoint
            CHECK(i >= 0);
            CHECK(i < 120);
        }
    }
    CHECK(seen.size() == 120);
}

TEST_CASE("partition label-sorted concentrates labels") {
    SeededRng rng(42, static_cast<std::uint64_t>(Stream::DataShuffle));
    DatasetSpec spec;
    spec.num_examples = 200;
    spec.num_classes = 10;
    Dataset ds = make_dataset(spec, rng);
    auto parts = partition_dataset(ds, PartitionMode::LabelSorted, 10, rng);
    REQUIRE(parts.size() == 10);
    // each shard of 20 spans at most 2 adjacent labels
    for (const auto& p : parts) {
        std::set<int> labels;
        for (int i : p) labels.insert(ds.label[i]);
        CHECK(labels.size() <= 2);
    }
}

TEST_CASE("linear model gradient matches finite differences") {
    ModelSpec m;
    m.kind = ModelKind::Linear;
    m.weight_decay = 0.01;
    DatasetSpec d;
    d.kind = DatasetKind::SyntheticLinear;
    d.num_examples = 40;
    d.dim = 6;
    check_gradient(m, d, 50);
}

TEST_CASE("logistic model gradient matches finite differences") {
    ModelSpec m;
    m.kind = ModelKind::Logistic;
    m.weight_decay = 0.005;
    DatasetSpec d;
    d.kind = DatasetKind::SyntheticBlobs;
    d.num_examples = 40;
    d.dim = 5;
    d.num_classes = 3;
    check_gradient(m, d, 51);
}

TEST_CASE("mlp model gradient matches finite differences") {
    ModelSpec m;
    m.kind = ModelKind::Mlp;
    m.hidden = 7;
    m.weight_decay = 0.0;
    DatasetSpec d;
    d.kind = DatasetKind::SyntheticBlobs;
    d.num_examples = 40;
    d.dim = 4;
    d.num_classes = 3;
    check_gradient(m, d, 52);
}

TEST_CASE("full-batch linear gradient matches the normal-equation residual form") {
    // loss = 1/m sum 0.5 (w.x+b - y)^2, grad_w = 1/m sum (pred-y) x
    SeededRng rng(53, static_cast<std::uint64_t>(Stream::DataShuffle));
    DatasetSpec d;
    d.kind = DatasetKind::SyntheticLinear;
    d.num_examples = 30;
    d.dim = 3;
    Dataset ds = make_dataset(d, rng);
    ModelSpec mspec;
    mspec.kind = ModelKind::Linear;
    Model model(mspec, ds.dim, 0);
    GradVec w(model.param_count(), 0.3);
    std::vector<int> idx(30);
    std::iota(idx.begin(), idx.end(), 0);
    GradVec got = model.gradient(w, ds, idx);
    GradVec want(model.param_count(), 0.0);
    for (int i : idx) {
        double pred = w[3];  // bias last
        for (int c = 0; c < 3; ++c) pred += w[c] * ds.x[i][c];
        double r = pred - ds.target[i];
        for (int c = 0; c < 3; ++c) want[c] += r * ds.x[i][c] / 30.0;
        want[3] += r / 30.0;
    }
    for (int c = 0; c < 4; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-9));
}

TEST_CASE("mean aggregation drives a clean linear problem to convergence") {
    ExperimentConfig cfg;
    cfg.n = 12;
    cfg.f = 0;
    cfg.dataset.kind = DatasetKind::SyntheticLinear;
    cfg.dataset.num_examples = 600;
    cfg.dataset.dim = 6;
    cfg.dataset.noise_scale = 0.01;
    cfg.model.kind = ModelKind::Linear;
    cfg.aggregator = AggregatorSpec{AggKind::Mean};
    cfg.iterations = 800;
    cfg.lr = 0.05;
    cfg.seed = 7;
    auto records = run_experiment(cfg);
    REQUIRE(!records.empty());
    double first_loss = records.front().train_loss;
    double last_loss = records.back().train_loss;
    CHECK(last_loss < 0.05 * first_loss);
    CHECK(last_loss < 0.01);
}

TEST_CASE("runs are deterministic byte for byte") {
    ExperimentConfig cfg;
    cfg.n = 8;
    cfg.f = 2;
    cfg.iterations = 60;
    cfg.eval_every = 20;
    cfg.seed = 11;
    cfg.attack.kind = AttackKind::EpsilonReverse;
    cfg.attack.epsilon = 0.5;
    cfg.aggregator = AggregatorSpec{AggKind::CoordMedian};
    cfg.dataset.num_examples = 160;
    auto a = run_experiment(cfg);
    auto b = run_experiment(cfg);
    std::ostringstream sa, sb;
    write_metrics_csv(sa, a);
    write_metrics_csv(sb, b);
    CHECK(sa.str() == sb.str());

    cfg.seed = 12;
    auto c = run_experiment(cfg);
    std::ostringstream sc;
    write_metrics_csv(sc, c);
    CHECK(sa.str() != sc.str());
}

TEST_CASE("momentum zero equals plain sgd") {
    ExperimentConfig cfg;
    cfg.n = 6;
    cfg.f = 0;
    cfg.iterations = 40;
    cfg.eval_every = 10;
    cfg.momentum = 0.0;
    cfg.dataset.num_examples = 120;
    cfg.aggregator = AggregatorSpec{AggKind::Mean};
    auto a = run_experiment(cfg);
    auto b = run_experiment(cfg);  // identical config: a sanity proxy for w <- w - eta*U
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].train_loss == doctest::Approx(b[i].train_loss).epsilon(1e-12));
}

TEST_CASE("honest flag never influences aggregation") {
    // run with f Byzantine workers marked honest=false vs the same vectors in a
    // raw panel: aggregation output must depend only on the gradients
    SeededRng rng(54, 1);
    std::vector<WorkerUpdate> updates;
    std::vector<GradVec> raw;
    for (int i = 0; i < 9; ++i) {
        GradVec g(3);
        for (double& v : g) v = rng.normal();
        updates.push_back({i, g, i >= 2});
        raw.push_back(g);
    }
    auto out = apply_aggregator(AggregatorSpec{AggKind::GeneralizedKrum}, raw, 2);
    // flip all flags; rebuild the panel from updates
    std::vector<GradVec> raw2;
    for (auto& u : updates) {
        u.honest = !u.honest;
        raw2.push_back(u.gradient);
    }
    auto out2 = apply_aggregator(AggregatorSpec{AggKind::GeneralizedKrum}, raw2, 2);
    CHECK(out.result == out2.result);
}

TEST_CASE("idx reader roundtrip") {
    std::string img = temp_path("mt_test_images.idx");
    std::string lab = temp_path("mt_test_labels.idx");
    {
        std::ofstream out(img, std::ios::binary);
        write_be32(out, 0x803);
        write_be32(out, 3);  // 3 examples
        write_be32(out, 2);  // 2x2 images
        write_be32(out, 2);
        unsigned char px[12] = {0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60};
        out.write(reinterpret_cast<char*>(px), 12);
    }
    {
        std::ofstream out(lab, std::ios::binary);
        write_be32(out, 0x801);
        write_be32(out, 3);
        unsigned char lb[3] = {7, 0, 9};
        out.write(reinterpret_cast<char*>(lb), 3);
    }
    Dataset ds = load_idx_dataset(img, lab);
    REQUIRE(ds.x.size() == 3);
    CHECK(ds.dim == 4);
    CHECK(ds.num_classes == 10);
    CHECK(ds.x[0][0] == doctest::Approx(0.0));
    CHECK(ds.x[0][1] == doctest::Approx(51.0 / 255.0));
    CHECK(ds.x[1][1] == doctest::Approx(1.0));
    CHECK(ds.label[0] == 7);
    CHECK(ds.label[2] == 9);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("idx reader rejects bad magic and mismatched counts") {
    std::string img = temp_path("mt_bad_images.idx");
    std::string lab = temp_path("mt_bad_labels.idx");
    {
        std::ofstream out(img, std::ios::binary);
        write_be32(out, 0x123);
        write_be32(out, 1);
        write_be32(out, 1);
        write_be32(out, 1);
        char z = 0;
        out.write(&z, 1);
    }
    {
        std::ofstream out(lab, std::ios::binary);
        write_be32(out, 0x801);
        write_be32(out, 1);
        char z = 0;
        out.write(&z, 1);
    }
    CHECK_THROWS_AS(load_idx_dataset(img, lab), InvalidInput);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("config parser accepts the full key set") {
    std::istringstream in(
        "# experiment\n"
        "n = 12\n"
        "f = 2\n"
        "seed = 99\n"
        "lr = 0.1\n"
        "momentum = 0.5\n"
        "batch_size = 4\n"
        "iterations = 100\n"
        "eval_every = 25\n"
        "dataset = blobs\n"
        "num_examples = 240\n"
        "dim = 10\n"
        "num_classes = 5\n"
        "noise_scale = 1.5\n"
        "partition = iid\n"
        "model = logistic\n"
        "weight_decay = 0.001\n"
        "aggregator = krum\n"
        "agg_p = 4\n"
        "attack = epsilon_reverse\n"
        "epsilon = 0.1\n");
    ExperimentConfig cfg = parse_config(in);
    CHECK(cfg.n == 12);
    CHECK(cfg.f == 2);
    CHECK(cfg.seed == 99);
    CHECK(cfg.lr == doctest::Approx(0.1));
    CHECK(cfg.dataset.num_classes == 5);
    CHECK(cfg.attack.kind == AttackKind::EpsilonReverse);
    auto* agg = std::get_if<AggregatorSpec>(&cfg.aggregator);
    REQUIRE(agg != nullptr);
    CHECK(agg->kind == AggKind::GeneralizedKrum);
    CHECK(agg->p == doctest::Approx(4.0));
}

TEST_CASE("config parser reports unknown keys with line numbers") {
    std::istringstream in("n = 12\nbogus_key = 3\n");
    try {
        parse_config(in);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("bogus_key") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);  // the offending line
    }
}

TEST_CASE("config validation rejects infeasible (n, f) pairs") {
    ExperimentConfig cfg;
    cfg.n = 4;
    cfg.f = 2;  // n < 2f+1
    cfg.aggregator = AggregatorSpec{AggKind::Mean};
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.n = 5;  // n = 2f+1 is the boundary and is allowed for the mean
    CHECK_NOTHROW(validate_config(cfg));

    cfg.n = 6;  // krum needs n > 2f+2
    cfg.aggregator = AggregatorSpec{AggKind::GeneralizedKrum};
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.n = 7;
    CHECK_NOTHROW(validate_config(cfg));
}

TEST_CASE("metrics csv layout") {
    std::vector<RoundRecord> recs(1);
    recs[0].iteration = 5;
    recs[0].chosen_member = 3;
    recs[0].train_loss = 0.25;
    recs[0].wall_clock_us = 777;
    std::ostringstream out;
    write_metrics_csv(out, recs);
    std::string s = out.str();
    CHECK(s.find("iteration,chosen_member,attack_param,train_loss,test_accuracy,"
                 "dot_clean,wall_clock_us") == 0);
    CHECK(s.find("777") == std::string::npos);  // timings zeroed by default
    std::ostringstream out2;
    write_metrics_csv(out2, recs, true);
    CHECK(out2.str().find("777") != std::string::npos);
}

TEST_CASE("divergence raises with the iteration number") {
    ExperimentConfig cfg;
    cfg.n = 6;
    cfg.f = 0;
    cfg.lr = 1e6;  // guaranteed blowup
    cfg.iterations = 500;
    cfg.dataset.num_examples = 120;
    cfg.aggregator = AggregatorSpec{AggKind::Mean};
    cfg.model.kind = ModelKind::Logistic;
    bool threw = false;
    try {
        run_experiment(cfg);
    } catch (const DivergenceError& e) {
        threw = true;
        CHECK(e.iteration >= 0);
        CHECK(e.iteration < 500);
    }
    // logistic loss saturates rather than producing NaN in some regimes; a
    // linear model with huge lr reliably overflows
    if (!threw) {
        cfg.model.kind = ModelKind::Linear;
        cfg.dataset.kind = DatasetKind::SyntheticLinear;
        CHECK_THROWS_AS(run_experiment(cfg), DivergenceError);
    }
}

TEST_CASE("aggregator and attack description parsers") {
    AggregatorSpec a = parse_aggregator_descr("kind=krum,p=8");
    CHECK(a.kind == AggKind::GeneralizedKrum);
    CHECK(a.p == doctest::Approx(8.0));
    AggregatorSpec b = parse_aggregator_descr("kind=bulyan,select=krum,aggregate=mean");
    CHECK(b.kind == AggKind::Bulyan);
    REQUIRE(b.bulyan_select);
    CHECK(b.bulyan_select->kind == AggKind::GeneralizedKrum);
    REQUIRE(b.bulyan_aggregate);
    CHECK(b.bulyan_aggregate->kind == AggKind::Mean);

    AttackSpec atk = parse_attack_descr("kind=adaptive,epsilon_set=0.1;0.5;1;10");
    CHECK(atk.kind == AttackKind::Adaptive);
    REQUIRE(atk.epsilon_set.size() == 4);
    CHECK(atk.epsilon_set[3] == doctest::Approx(10.0));

    CHECK_THROWS_AS(parse_aggregator_descr("kind=unheard_of"), ConfigError);
}
