// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "robtree/adversary.hpp"
#include "robtree/error.hpp"
#include "robtree/master.hpp"
#include "robtree/uncertainty.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace robtree;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

int failures = 0;

void run(int id, const std::string& name, double limit_seconds, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_seconds) o.require(false, "took " + std::to_string(secs) + " s");
    std::printf("%s [%d] %s (%.2f s)%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
}

// Remembers every incumbent so certificates can be matched to their trees.
class RecordingSolver final : public MainSolver {
public:
    MainSolution solve(const MainProblem& p) override
    {
        auto s = inner_.solve(p);
        trees.push_back(s.tree);
        return s;
    }
    std::string name() const override { return "builtin-enum"; }
    std::vector<TreeEncoding> trees;

private:
    EnumerativeSolver inner_;
};

struct Harvest {
    testing::Micro inst;
    TreeEncoding tree;
    AdversaryCertificate cert;
};

std::vector<Harvest> harvested;

std::size_t robust(const SolveReport& r) { return r.worst_case_correct; }

// ---------------------------------------------------------------------------

Outcome table3_example()
{
    Outcome o;
    const auto d = testing::table3();
    const auto m = UncertaintyModel::uniform(d, 1.0, 2.0);
    EnumerativeSolver solver;
    const auto ex = exhaustive_solve(d, m, 1);
    const auto cp = cutting_plane_solve(d, m, 1, solver);
    o.require(ex.objective == 7.0, "exhaustive eps=2 gave " + std::to_string(ex.objective));
    o.require(cp.objective == 7.0 && cp.status == SolveStatus::Optimal,
              "cutting plane eps=2 gave " + std::to_string(cp.objective));
    o.require(robust(cp) == 7 && brute_force_adversary(cp.tree, d, m) == 7, "cutting-plane tree is not worth 7");
    const auto m0 = m.with_epsilon(0.0);
    o.require(exhaustive_solve(d, m0, 1).objective == 9.0, "exhaustive eps=0 != 9");
    o.require(cutting_plane_solve(d, m0, 1, solver).objective == 9.0, "cutting plane eps=0 != 9");
    o.require(exhaustive_solve(d, m, 0).objective == 5.0, "depth 0 != 5");
    o.require(cutting_plane_solve(d, m, 0, solver).objective == 5.0, "cutting plane depth 0 != 5");
    std::ostringstream s;
    s << "eps=2 -> " << cp.objective << ", eps=0 -> 9, depth 0 -> 5";
    if (o.pass) o.detail = s.str();
    return o;
}

Outcome oracle_sweep()
{
    Outcome o;
    std::size_t trees_checked = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto inst = testing::micro_instance(1000 + s);
        const auto& d = inst.data;
        const auto ex = exhaustive_solve(d, inst.model, inst.depth);
        for (bool strengthen : {true, false}) {
            RecordingSolver rec;
            SolveOptions opts;
            opts.strengthen = strengthen;
            const auto cp = cutting_plane_solve(d, inst.model, inst.depth, rec, opts);
            o.require(cp.status == SolveStatus::Optimal, "instance " + std::to_string(s) + " did not converge");
            o.require(cp.objective == ex.objective, "instance " + std::to_string(s) + (strengthen ? " (+" : " (-") +
                                                        "strengthen): cutting plane " + std::to_string(cp.objective) +
                                                        " vs exhaustive " + std::to_string(ex.objective));
            for (std::size_t k = 0; k < rec.trees.size(); ++k) {
                const auto& cert = cp.certificates[k];
                o.require(cert.value == brute_force_adversary(rec.trees[k], d, inst.model),
                          "adversary mismatch on an incumbent of instance " + std::to_string(s));
                ++trees_checked;
                if (harvested.size() < 50 && s % 3 == 0)
                    harvested.push_back({inst, rec.trees[k], cert});
            }
        }
        const auto th = compute_thresholds(d);
        CounterRng rng(derive_seed(s, 77));
        for (int rep = 0; rep < 3; ++rep) {
            const auto t = testing::random_tree(inst.depth, th, d.num_labels(), rng);
            o.require(worst_case_correct(t, d, inst.model).value == brute_force_adversary(t, d, inst.model),
                      "adversary mismatch on a random tree of instance " + std::to_string(s));
            ++trees_checked;
        }
        o.require(worst_case_correct(ex.tree, d, inst.model).value == brute_force_adversary(ex.tree, d, inst.model),
                  "adversary mismatch on the exhaustive optimum of instance " + std::to_string(s));
    }
    if (o.pass) o.detail = "200 instances, " + std::to_string(trees_checked) + " adversary checks";
    return o;
}

Outcome calibration()
{
    Outcome o;
    CounterRng rng(20241014);
    double worst_res = 0.0, worst_norm = 0.0;
    auto note = [&](double res, double norm) {
        worst_res = std::max(worst_res, res);
        worst_norm = std::max(worst_norm, norm);
    };
    for (int k = 0; k < 100; ++k) {
        // Unbounded: P(0) = rho, P(+-j) = rho r^j / 2 with r = exp(-gamma).
        {
            const double rho = 0.02 + 0.97 * rng.uniform();
            const double r = std::exp(-gamma_unbounded(rho));
            o.require(r > 0.0 && r <= 1.0, "unbounded r outside (0, 1]");
            double sum = rho, term = rho;
            for (int j = 1; j < 1'000'000 && term > 1e-18; ++j) {
                term *= r;
                sum += term;
            }
            note(0.0, std::abs(sum - 1.0));
        }
        // One-sided: support [L - x, inf).
        {
            const double rho = 0.05 + 0.94 * rng.uniform();
            const Value L = static_cast<Value>(rng.uniform_index(21)) - 10;
            const Value x = L + static_cast<Value>(rng.uniform_index(40));
            const double r = find_r_one_sided(rho, x, L);
            o.require(r > 0.0 && r <= 1.0, "one-sided r outside (0, 1]");
            const double kx = static_cast<double>(x - L);
            note(std::abs(rho * std::pow(r, kx + 1) - (rho + 1) * r + 1 - rho), 0.0);
            double sum = rho;
            double term = rho;
            for (Value j = 1; j <= x - L; ++j) sum += rho * std::pow(r, static_cast<double>(j));
            for (int j = 1; j < 1'000'000 && term > 1e-18; ++j) {
                term *= r;
                sum += term;
            }
            note(0.0, std::abs(sum - 1.0));
            o.require(std::abs(gamma_bounded(rho, x, L, std::nullopt) + std::log(r)) <= 1e-12,
                      "gamma_bounded disagrees with the one-sided root");
        }
        // Two-sided: support [L - x, U - x].
        {
            const Value L = static_cast<Value>(rng.uniform_index(11));
            const Value U = L + 1 + static_cast<Value>(rng.uniform_index(30));
            const Value x = L + static_cast<Value>(rng.uniform_index(static_cast<std::uint64_t>(U - L + 1)));
            const double lo = 1.0 / static_cast<double>(U - L + 1);
            const double rho = lo + (0.99 - lo) * rng.uniform();
            const double r = find_r_two_sided(rho, x, L, U);
            o.require(r > 0.0 && r <= 1.0, "two-sided r outside (0, 1]");
            const double M = static_cast<double>(std::max(U - x, x - L));
            const double m = static_cast<double>(std::min(U - x, x - L));
            note(std::abs(rho * std::pow(r, M + 1) + rho * std::pow(r, m + 1) - (rho + 1) * r + 1 - rho), 0.0);
            double sum = 0.0;
            for (Value xi = L - x; xi <= U - x; ++xi) sum += rho * std::pow(r, static_cast<double>(std::abs(xi)));
            note(0.0, std::abs(sum - 1.0));
        }
        // Categorical and binary: stay with rho, each other level rho exp(-flip cost).
        {
            const std::size_t n = 2 + rng.uniform_index(6);
            const double lo = 1.0 / static_cast<double>(n);
            const double rho = lo + (0.99 - lo) * rng.uniform();
            const double g = gamma_categorical(rho, n);
            const double sum = rho + static_cast<double>(n - 1) * rho * std::exp(-2.0 * g);
            note(0.0, std::abs(sum - 1.0));
            const double rb = 0.5 + 0.49 * rng.uniform();
            note(0.0, std::abs(rb + rb * std::exp(-gamma_binary(rb)) - 1.0));
            o.require(std::abs(2.0 * gamma_categorical(rb, 2) - gamma_binary(rb)) <= 1e-10,
                      "size-2 group flip cost differs from the binary cost");
        }
        // Boundary identities.
        {
            const double rho = 0.01 + 0.98 * rng.uniform();
            const Value x = static_cast<Value>(rng.uniform_index(50));
            o.require(std::abs(find_r_one_sided(rho, x, x) - (1.0 - rho)) <= 1e-10, "at-bound r != 1 - rho");
            const Value width = 1 + static_cast<Value>(rng.uniform_index(20));
            const Value xu = static_cast<Value>(rng.uniform_index(static_cast<std::uint64_t>(width + 1)));
            o.require(std::abs(find_r_two_sided(1.0 / static_cast<double>(width + 1), xu, 0, width) - 1.0) <= 1e-10,
                      "uniform limit r != 1");
        }
    }
    o.require(worst_res <= 1e-10, "residual " + std::to_string(worst_res));
    o.require(worst_norm <= 1e-9, "normalisation error " + std::to_string(worst_norm));
    if (o.pass) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "max residual %.2e, max normalisation error %.2e", worst_res, worst_norm);
        o.detail = buf;
    }
    return o;
}

Outcome monotonicity()
{
    Outcome o;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto inst = testing::micro_instance(5000 + s);
        const auto& d = inst.data;
        const auto th = compute_thresholds(d);
        CounterRng rng(derive_seed(s, 5));
        const auto t = testing::random_tree(2, th, 2, rng);
        std::size_t prev = d.num_rows() + 1;
        for (int step = 0; step <= 10; ++step) {
            const auto v = worst_case_correct(t, d, inst.model.with_epsilon(0.5 * step)).value;
            o.require(v <= prev, "worst case grew with the budget on instance " + std::to_string(s));
            prev = v;
        }
        for (std::size_t k = 0; k < 2; ++k) {
            const auto c = TreeEncoding::constant(0, k);
            const auto v0 = worst_case_correct(c, d, inst.model.with_epsilon(0)).value;
            for (double e : {0.5, 1.0, 3.0, 5.0, 1e6})
                o.require(worst_case_correct(c, d, inst.model.with_epsilon(e)).value == v0,
                          "depth-0 tree depends on the budget");
        }
    }
    // Full pipeline at lambda = 1 against the non-robust one, with and without a branch penalty.
    const auto toy = load_dataset(fs::path(ROBTREE_SOURCE_DIR) / "data/toy/mixed.csv",
                                  fs::path(ROBTREE_SOURCE_DIR) / "data/toy/mixed.schema.json");
    const auto model = calibrate(toy, RhoMatrix::from_schema(toy), 1.0);
    o.require(model.epsilon() == 0.0, "lambda = 1 gave a nonzero budget");
    EnumerativeSolver solver;
    for (double R : {1.0, 0.9}) {
        SolveOptions opts;
        opts.R = R;
        const auto robust_run = cutting_plane_solve(toy, model, 1, solver, opts);
        const auto plain = nonrobust_regularized_solve(toy, 1, R, solver, opts);
        o.require(robust_run.objective == plain.objective,
                  "lambda = 1 objective " + std::to_string(robust_run.objective) + " vs non-robust " +
                      std::to_string(plain.objective));
    }
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto inst = testing::micro_instance(7000 + s);
        const auto m0 = inst.model.with_epsilon(budget_from_lambda(1.0, inst.data.num_rows()));
        o.require(cutting_plane_solve(inst.data, m0, inst.depth, solver).objective ==
                      nonrobust_regularized_solve(inst.data, inst.depth, 1.0, solver).objective,
                  "lambda = 1 mismatch on micro instance " + std::to_string(s));
    }
    if (o.pass) o.detail = "100 trees x 11 budgets, depth-0 invariance, lambda = 1 on toy + 50 micro";
    return o;
}

Outcome proxy()
{
    Outcome o;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto inst = testing::micro_instance(1000 + s);
        const auto& d = inst.data;
        const auto ex = exhaustive_solve(d, inst.model, inst.depth);
        const auto px = proxy_solve(d, inst.model, inst.depth, BudgetMode::Shared);
        o.require(px.objective <= ex.objective, "proxy above robust on instance " + std::to_string(s));
        // A proxy-feasible tree cannot be pushed anywhere, so its worst case is its nominal count.
        o.require(static_cast<double>(px.worst_case_correct) == px.objective,
                  "proxy tree is attackable on instance " + std::to_string(s));
        const auto pp = proxy_solve(d, inst.model, inst.depth, BudgetMode::PerSample);
        o.require(pp.worst_case_correct <= pp.nominal_correct, "per-sample proxy report inconsistent");
    }
    const auto d = testing::table3();
    const auto t3 = proxy_solve(d, UncertaintyModel::uniform(d, 1.0, 2.0), 1, BudgetMode::Shared);
    o.require(t3.objective == 5.0, "table example proxy gave " + std::to_string(t3.objective));
    if (o.pass) o.detail = "200 instances; table example proxy = 5";
    return o;
}

Outcome sampler()
{
    Outcome o;
    constexpr std::size_t N = 100'000;
    {
        std::vector<std::vector<Value>> rows(N, std::vector<Value>{0});
        std::vector<std::size_t> y(N, 0);
        y[0] = 1;
        const auto d = testing::integer_dataset(rows, y);
        const auto v = sample_perturbation(d, RhoMatrix::uniform(d, 0.6), 31337);
        std::size_t zero = 0, one = 0;
        for (auto x : v) {
            zero += x == 0;
            one += x == 1 || x == -1;
        }
        const double p0 = static_cast<double>(zero) / N, p1 = static_cast<double>(one) / N;
        const double se0 = std::sqrt(0.6 * 0.4 / N), se1 = std::sqrt(0.24 * 0.76 / N);
        o.require(std::abs(p0 - 0.6) <= 3 * se0, "P(0) = " + std::to_string(p0));
        o.require(std::abs(p1 - 0.24) <= 3 * se1, "P(|xi| = 1) = " + std::to_string(p1));
        char buf[128];
        std::snprintf(buf, sizeof buf, "P(0)=%.4f (%.1f SE), P(|xi|=1)=%.4f (%.1f SE)", p0, (p0 - 0.6) / se0, p1,
                      (p1 - 0.24) / se1);
        o.detail = buf;
    }
    {
        // Bounded two-sided, one-sided, up-only, binary and a 4-level group; 10^5 draws per column.
        std::ostringstream csv;
        csv << "b,l,u,s,c,y\n";
        const std::size_t rows = 1000;
        for (std::size_t i = 0; i < rows; ++i)
            csv << (i % 6) << "," << (i % 3) << "," << (i % 8) << "," << (i % 2) << "," << (i % 4) << "," << (i % 2)
                << "\n";
        const auto d = parse_dataset(csv.str(), R"({"version":1,"label":"y","columns":[
            {"name":"b","kind":"integer","lower":0,"upper":5,"rho":0.4},
            {"name":"l","kind":"integer","lower":0,"rho":0.3},
            {"name":"u","kind":"integer","lower":0,"upper":7,"shift":"up","rho":0.5},
            {"name":"s","kind":"binary","rho":0.6},
            {"name":"c","kind":"categorical","levels":[0,1,2,3],"rho":0.3}]})");
        const auto rho = RhoMatrix::from_schema(d);
        const std::size_t F = d.num_features();
        bool ok = true;
        std::size_t moved = 0;
        for (std::uint64_t seed = 0; seed < N / rows; ++seed) {
            const auto v = sample_perturbation(d, rho, seed);
            for (std::size_t i = 0; i < rows; ++i) {
                const auto r = std::span<const Value>(v).subspan(i * F, F);
                ok = ok && r[0] >= 0 && r[0] <= 5 && r[1] >= 0 && r[2] >= d.value(i, 2) && r[2] <= 7 &&
                     (r[3] == 0 || r[3] == 1);
                Value hot = 0;
                for (std::size_t f = 4; f < 8; ++f) {
                    ok = ok && (r[f] == 0 || r[f] == 1);
                    hot += r[f];
                }
                ok = ok && hot == 1;
                for (std::size_t f = 0; f < F; ++f) moved += r[f] != d.value(i, f);
            }
        }
        o.require(ok, "a bounded or categorical draw left its domain");
        o.require(moved > 0, "bounded sampler never moved");
    }
    return o;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome cli_determinism()
{
    Outcome o;
    const fs::path src(ROBTREE_SOURCE_DIR);
    const fs::path work = fs::temp_directory_path() / "robtree_acceptance_cli";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string data = "--data '" + (src / "data/toy/mixed.csv").string() + "' --schema '" +
                             (src / "data/toy/mixed.schema.json").string() + "'";
    std::vector<std::string> outputs;
    for (int run = 0; run < 2; ++run) {
        const auto dir = work / std::to_string(run);
        fs::create_directories(dir);
        const std::string train = std::string("'") + ROBTREE_CLI + "' train " + data +
                                  " --depth 1 --lambda 0.95 --R 0.95 --out '" + (dir / "tree.json").string() +
                                  "' --report '" + (dir / "report.json").string() + "'";
        const std::string eval = std::string("'") + ROBTREE_CLI + "' evaluate " + data + " --tree '" +
                                 (dir / "tree.json").string() + "' --K 300 --seed 7 --threads 2 --lambda 0.95" +
                                 " --out '" + (dir / "eval.json").string() + "'";
        o.require(std::system(train.c_str()) == 0, "train exited nonzero");
        o.require(std::system(eval.c_str()) == 0, "evaluate exited nonzero");
        outputs.push_back(slurp(dir / "tree.json") + slurp(dir / "report.json") + slurp(dir / "eval.json"));
    }
    o.require(!outputs[0].empty(), "no output written");
    o.require(outputs[0] == outputs[1], "outputs differ between runs");
    if (o.pass) o.detail = "tree, report and evaluation byte-identical (" + std::to_string(outputs[0].size()) + " bytes)";
    fs::remove_all(work);
    return o;
}

Outcome cut_validity()
{
    Outcome o;
    o.require(harvested.size() >= 50, "only " + std::to_string(harvested.size()) + " certificates harvested");
    std::size_t probes = 0, per_sample = 0;
    for (std::size_t h = 0; h < harvested.size(); ++h) {
        const auto& [inst, gen, cert] = harvested[h];
        const auto& d = inst.data;
        const auto th = compute_thresholds(d);
        const auto cut = build_cut_global(cert, d, th, inst.depth);
        CounterRng rng(derive_seed(h, 88));
        for (int k = 0; k < 100; ++k) {
            const auto t = testing::random_tree(inst.depth, th, d.num_labels(), rng);
            // Restricted count: correct rows of t with q and xi fixed, by max flow.
            const auto count = testing::flow_correct(t, d, th, cert.xi);
            o.require(cut.rhs_at(t, th) >= static_cast<double>(count) - 1e-9,
                      "global cut below the restricted count");
            ++probes;
        }
        for (std::size_t i = 0; i < d.num_rows(); ++i) {
            if (route(gen, d.row(i)).label == d.label(i)) continue;
            o.require(build_cut_single(d, i, gen, th).rhs_at(gen, th) == 0.0, "per-sample cut nonzero at its tree");
            ++per_sample;
        }
    }
    if (o.pass)
        o.detail = std::to_string(harvested.size()) + " certificates, " + std::to_string(probes) + " probes, " +
                   std::to_string(per_sample) + " per-sample cuts";
    return o;
}

} // namespace

int main()
{
    run(1, "table example: robust 7, nominal 9, depth 0 gives 5", 1.0, table3_example);
    run(2, "oracle sweep: adversary = brute force, cutting plane = exhaustive", 300.0, oracle_sweep);
    run(3, "calibration roots, normalisation and boundary identities", 10.0, calibration);
    run(4, "monotone in the budget, depth-0 invariance, lambda = 1 equals non-robust", 10.0, monotonicity);
    run(5, "proxy optimum below robust optimum; table example proxy = 5", 60.0, proxy);
    run(6, "sampler frequencies and domains", 10.0, sampler);
    run(7, "train + evaluate are byte-reproducible", 60.0, cli_determinism);
    run(8, "cut validity on harvested certificates", 60.0, cut_validity);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
