// Command-line entry point: experiments, one-shot aggregation, attack
// generation, bound calculation, benchmarking, pool inspection.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>

#include "mixtailor/aggregators.hpp"
#include "mixtailor/attacks.hpp"
#include "mixtailor/bounds.hpp"
#include "mixtailor/core.hpp"
#include "mixtailor/harness.hpp"

using namespace mixtailor;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_csv, bool timings) {
    ExperimentConfig cfg;
    try {
        cfg = parse_config_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        auto records = run_experiment(cfg);
        std::ofstream out(out_csv);
        if (!out) {
            std::cerr << "error: cannot write " << out_csv << "\n";
            return 2;
        }
        write_metrics_csv(out, records, timings);
        double final_acc = final_test_accuracy(records);
        std::cout << "final_test_accuracy = " << format_real(final_acc) << "\n";
        if (cfg.with_baseline) {
            auto baseline = run_omniscient_baseline(cfg);
            double omni = final_test_accuracy(baseline);
            std::cout << "omniscient_final_accuracy = " << format_real(omni) << "\n";
            std::cout << "omniscient_gap = " << format_real(omni - final_acc) << "\n";
        }
        return 0;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_aggregate(const std::string& grad_csv, const std::string& agg_descr, int f,
                  std::uint64_t seed) {
    try {
        auto updates = read_gradient_csv(grad_csv);
        AggregatorSpec agg = parse_aggregator_descr(agg_descr);
        validate_aggregator(agg, static_cast<int>(updates.size()), f);
        SeededRng rng(seed, Stream::PoolDraw);
        AggregationOutcome out = apply_aggregator(agg, updates, f, &rng);
        write_gradient_row(std::cout, out.result);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_attack(const std::string& grad_csv, const std::string& attack_descr, int f,
               int n, const std::string& agg_descr, std::uint64_t seed) {
    try {
        auto honest = read_gradient_csv(grad_csv);
        AttackSpec spec = parse_attack_descr(attack_descr);
        SeededRng adv_rng(seed, Stream::AttackSearch);
        AdversaryView view;
        view.honest_gradients = honest;
        view.rng = &adv_rng;
        AggregatorSpec agg = parse_aggregator_descr(agg_descr);
        view.pool_description = PoolSpec{{agg}};
        if (n == 0) n = static_cast<int>(honest.size()) + f;
        AttackOutcome atk = run_attack(spec, view, n, f);
        for (const auto& b : atk.byzantine) write_gradient_row(std::cout, b);
        VerifyResult v = verify_attack(atk.byzantine, honest, agg, nullptr, &adv_rng);
        std::cerr << "{\"attack_param\": " << format_real(atk.attack_param)
                  << ", \"dot_clean\": " << format_real(v.dot_with_clean_direction)
                  << ", \"success\": " << (v.success ? "true" : "false") << "}\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct BoundFlags {
    int n = 12, f = 2, d = 4, q = 1, M = 64;
    double p = 2.0, sigma2 = 1.0, delta2 = 0.0, lambda = 0.0, L = 1.0, beta = 1.0;
};

int cmd_bounds(const BoundFlags& fl) {
    try {
        if (fl.n <= 2 * fl.f + 2) {
            std::cerr << "error: n > 2f+2 violated\n";
            return 2;
        }
        if (fl.beta <= 0.0) {
            std::cerr << "error: beta > 0 violated\n";
            return 2;
        }
        BoundInputs in;
        in.n = fl.n;
        in.f = fl.f;
        in.d = fl.d;
        in.p = fl.p;
        in.sigma2 = fl.sigma2;
        in.delta2 = fl.delta2;
        std::cout << "lambda = " << format_real(capital_lambda(fl.n, fl.f, fl.d, fl.p))
                  << "\n";
        std::cout << "iid_bias_bound = " << format_real(iid_bias_bound(in)) << "\n";
        std::cout << "noniid_bias_bound = " << format_real(noniid_bias_bound(in)) << "\n";
        std::cout << "sufficient_M_threshold = "
                  << format_real(mixtailor_sufficient_M(fl.q, fl.lambda, fl.L, fl.beta))
                  << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_bench(int n, int f, int d, int repeats, std::uint64_t seed) {
    try {
        SeededRng rng(seed, Stream::MonteCarlo);
        auto rows = bench_aggregators(n, f, d, repeats, rng);
        for (const auto& r : rows)
            std::cout << r.name << " = " << format_real(r.mean_us) << " us\n";
        auto sorted = rows;
        std::sort(sorted.begin(), sorted.end(),
                  [](const BenchRow& a, const BenchRow& b) { return a.mean_us < b.mean_us; });
        std::cout << "ordering =";
        for (const auto& r : sorted) std::cout << " " << r.name;
        std::cout << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_pool(std::uint64_t seed) {
    SeededRng rng(seed, 6);  // pool construction stream
    PoolSpec pool = build_paper_pool(rng);
    for (std::size_t i = 0; i < pool.members.size(); ++i)
        std::cout << i << ": " << pool.members[i].describe() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Byzantine-resilient distributed SGD simulator with randomized aggregation"};
    app.require_subcommand(1);

    std::string config_path, out_csv = "metrics.csv";
    bool timings = false;
    auto* run = app.add_subcommand("run", "run a training experiment from a config file");
    run->add_option("config", config_path, "key = value config file")->required();
    run->add_option("-o,--out", out_csv, "metrics CSV output path");
    run->add_flag("--timings", timings, "include measured wall-clock times in the CSV");

    std::string grad_csv, agg_descr = "kind=mean", attack_descr = "kind=epsilon_reverse";
    int f = 0, n = 0, d = 10000, repeats = 20;
    std::uint64_t seed = 0;
    auto* aggregate = app.add_subcommand("aggregate", "aggregate a CSV gradient matrix");
    aggregate->add_option("gradients", grad_csv, "CSV, one row per worker")->required();
    aggregate->add_option("-a,--agg", agg_descr, "aggregator description (kind=...,p=...)");
    aggregate->add_option("-f", f, "Byzantine bound");
    aggregate->add_option("--seed", seed, "seed for resampling draws");

    auto* attack = app.add_subcommand("attack", "generate Byzantine rows for an honest panel");
    attack->add_option("gradients", grad_csv, "honest gradients CSV")->required();
    attack->add_option("-a,--attack", attack_descr, "attack description (kind=...,epsilon=...)");
    attack->add_option("-f", f, "number of Byzantine workers")->required();
    attack->add_option("-n", n, "total workers (default: honest rows + f)");
    attack->add_option("--agg", agg_descr, "aggregator used for verification");
    attack->add_option("--seed", seed, "adversary seed");

    BoundFlags fl;
    auto* bounds = app.add_subcommand("bounds", "print the closed-form theoretical bounds");
    bounds->add_option("--n", fl.n, "total workers");
    bounds->add_option("--f", fl.f, "Byzantine workers");
    bounds->add_option("--d", fl.d, "model dimension");
    bounds->add_option("--p", fl.p, "distance norm");
    bounds->add_option("--sigma2", fl.sigma2, "per-worker gradient variance bound");
    bounds->add_option("--delta2", fl.delta2, "inter-client heterogeneity");
    bounds->add_option("--lambda", fl.lambda, "sup norm of compromised-rule outputs");
    bounds->add_option("--L", fl.L, "gradient norm bound");
    bounds->add_option("--beta", fl.beta, "min resilience margin");
    bounds->add_option("--q", fl.q, "compromised rules");
    bounds->add_option("--M", fl.M, "pool size");

    auto* bench = app.add_subcommand("bench", "time each aggregation rule");
    bench->add_option("--n", n, "panel rows")->default_val(12);
    bench->add_option("--f", f, "Byzantine bound")->default_val(2);
    bench->add_option("--d", d, "panel dimension");
    bench->add_option("--repeats", repeats, "timed repetitions");
    bench->add_option("--seed", seed, "panel seed");

    auto* pool = app.add_subcommand("pool", "print the 64-member pool for a seed");
    pool->add_option("--seed", seed, "pool seed");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, out_csv, timings);
    if (aggregate->parsed()) return cmd_aggregate(grad_csv, agg_descr, f, seed);
    if (attack->parsed()) return cmd_attack(grad_csv, attack_descr, f, n, agg_descr, seed);
    if (bounds->parsed()) return cmd_bounds(fl);
    if (bench->parsed()) return cmd_bench(n, f, d, repeats, seed);
    if (pool->parsed()) return cmd_pool(seed);
    return 1;
}
