// End-to-end checks of the command-line binary. Receives the binary path as
// argv[1] and shells out to it with temp files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mixtailor/core.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_bin;
fs::path g_dir;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "ok: " << what << "\n";
    } else {
        std::cout << "FAIL: " << what << "\n";
        ++g_failures;
    }
}

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cmd(const std::string& args) {
    fs::path out_file = g_dir / "cmd_out.txt";
    std::string full = g_bin + " " + args + " > " + out_file.string() + " 2>&1";
    int rc = std::system(full.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void test_aggregate_mean() {
    fs::path csv = g_dir / "grads.csv";
    write_file(csv, "1,2\n3,4\n5,6\n");
    auto r = run_cmd("aggregate " + csv.string() + " -a kind=mean");
    check(r.exit_code == 0, "aggregate mean exit code");
    std::istringstream parsed(r.out);
    auto rows = mixtailor::parse_gradient_csv(parsed);
    check(rows.size() == 1 && std::abs(rows[0][0] - 3.0) < 1e-9 &&
              std::abs(rows[0][1] - 4.0) < 1e-9,
          "aggregate mean value");
}

void test_aggregate_validation() {
    fs::path csv = g_dir / "small.csv";
    write_file(csv, "1\n2\n3\n");
    auto r = run_cmd("aggregate " + csv.string() + " -a kind=krum -f 1");
    check(r.exit_code == 2, "aggregate rejects krum with n <= 2f+2");
}

void test_attack_roundtrip() {
    // attack then aggregate; the reported dot must match recomputation
    fs::path csv = g_dir / "honest.csv";
    std::ostringstream content;
    mixtailor::SeededRng rng(5, 1);
    std::vector<mixtailor::GradVec> honest;
    for (int i = 0; i < 10; ++i) {
        mixtailor::GradVec g(3);
        for (double& v : g) v = 1.0 + 0.2 * rng.normal();
        honest.push_back(g);
        mixtailor::write_gradient_row(content, g);
    }
    write_file(csv, content.str());

    fs::path byz_file = g_dir / "byz.csv";
    std::string cmd = g_bin + " attack " + csv.string() +
                      " -a kind=epsilon_reverse,epsilon=10 -f 2 --agg kind=mean > " +
                      byz_file.string() + " 2> " + (g_dir / "attack_meta.txt").string();
    int rc = std::system(cmd.c_str());
    check(WIFEXITED(rc) && WEXITSTATUS(rc) == 0, "attack exit code");

    auto byz = mixtailor::read_gradient_csv(byz_file.string());
    check(byz.size() == 2, "attack emits f rows");

    std::string meta = read_file(g_dir / "attack_meta.txt");
    check(meta.find("\"success\": true") != std::string::npos,
          "epsilon=10 reversal defeats the mean");

    // recompute: aggregate the combined panel and dot with the clean mean
    mixtailor::GradVec mean(3, 0.0);
    for (const auto& h : honest) mixtailor::add_in_place(mean, h);
    mean = mixtailor::scale(mean, 0.1);
    mixtailor::GradVec agg(3, 0.0);
    for (const auto& h : honest) mixtailor::add_in_place(agg, h);
    for (const auto& b : byz) mixtailor::add_in_place(agg, b);
    agg = mixtailor::scale(agg, 1.0 / 12.0);
    double d = mixtailor::dot(agg, mean);
    // parse the reported dot_clean out of the JSON line
    auto pos = meta.find("\"dot_clean\": ");
    check(pos != std::string::npos, "attack meta has dot_clean");
    double reported = std::strtod(meta.c_str() + pos + 13, nullptr);
    // the CLI prints 9 significant digits, so compare at a matching tolerance
    check(std::abs(reported - d) < 1e-6 * std::max(1.0, std::abs(d)),
          "reported dot matches recomputation");
}

void test_bounds() {
    auto r = run_cmd("bounds --n 12 --f 2 --d 4 --p 2 --sigma2 1");
    check(r.exit_code == 0, "bounds exit code");
    check(r.out.find("lambda = 1.66666667") != std::string::npos, "bounds lambda value");
    check(r.out.find("iid_bias_bound = 5.33333333") != std::string::npos,
          "bounds iid value");
    auto bad = run_cmd("bounds --n 6 --f 2");
    check(bad.exit_code == 2, "bounds rejects n <= 2f+2");
    check(bad.out.find("n > 2f+2 violated") != std::string::npos, "bounds error text");
}

void test_pool() {
    auto a = run_cmd("pool --seed 7");
    auto b = run_cmd("pool --seed 7");
    auto c = run_cmd("pool --seed 8");
    check(a.exit_code == 0, "pool exit code");
    check(a.out == b.out, "pool deterministic per seed");
    check(a.out != c.out, "pool differs across seeds");
    int lines = 0;
    for (char ch : a.out)
        if (ch == '\n') ++lines;
    check(lines == 64, "pool prints 64 members");
}

void test_run_and_determinism() {
    fs::path cfg = g_dir / "exp.cfg";
    write_file(cfg,
               "n = 8\n"
               "f = 2\n"
               "seed = 3\n"
               "iterations = 80\n"
               "eval_every = 20\n"
               "num_examples = 160\n"
               "aggregator = comed\n"
               "attack = epsilon_reverse\n"
               "epsilon = 0.5\n");
    fs::path m1 = g_dir / "m1.csv";
    fs::path m2 = g_dir / "m2.csv";
    auto r1 = run_cmd("run " + cfg.string() + " -o " + m1.string());
    auto r2 = run_cmd("run " + cfg.string() + " -o " + m2.string());
    check(r1.exit_code == 0, "run exit code");
    check(r1.out.find("final_test_accuracy = ") != std::string::npos,
          "run prints final accuracy");
    check(read_file(m1) == read_file(m2), "identical configs give identical CSVs");

    fs::path bad = g_dir / "bad.cfg";
    write_file(bad, "n = 8\nwat = 1\n");
    auto rb = run_cmd("run " + bad.string() + " -o " + (g_dir / "x.csv").string());
    check(rb.exit_code == 2, "bad config exits 2");

    fs::path div = g_dir / "div.cfg";
    write_file(div,
               "n = 6\nf = 0\nseed = 1\nlr = 1000000\niterations = 400\n"
               "num_examples = 120\ndataset = linear\nmodel = linear\n"
               "aggregator = mean\n");
    auto rd = run_cmd("run " + div.string() + " -o " + (g_dir / "y.csv").string());
    check(rd.exit_code == 3, "divergence exits 3");
}

void test_bench() {
    auto r = run_cmd("bench --n 12 --f 2 --d 200 --repeats 3");
    check(r.exit_code == 0, "bench exit code");
    check(r.out.find("ordering =") != std::string::npos, "bench prints ordering");
    check(r.out.find("bulyan") != std::string::npos, "bench includes bulyan");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <mixtailor-binary>\n";
        return 2;
    }
    g_bin = argv[1];
    g_dir = fs::temp_directory_path() / "mixtailor_cli_test";
    fs::create_directories(g_dir);

    test_aggregate_mean();
    test_aggregate_validation();
    test_attack_roundtrip();
    test_bounds();
    test_pool();
    test_run_and_determinism();
    test_bench();

    fs::remove_all(g_dir);
    if (g_failures) {
        std::cout << g_failures << " failure(s)\n";
        return 1;
    }
    std::cout << "all cli checks passed\n";
    return 0;
}
