#include "robtree/evaluation.hpp"

#include "robtree/adversary.hpp"
#include "robtree/error.hpp"
#include "robtree/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <thread>

namespace robtree {

using json = nlohmann::ordered_json;

namespace {

std::size_t correct_on(const TreeEncoding& tree, const Dataset& data, const std::vector<Value>& values)
{
    const std::size_t F = data.num_features();
    std::size_t c = 0;
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        std::span<const Value> row(values.data() + i * F, F);
        c += tree.node(route_terminal(tree, row)).label == data.label(i);
    }
    return c;
}

} // namespace

EvaluationReport evaluate_under_shifts(const TreeEncoding& tree, const Dataset& test, const RhoMatrix& rho,
                                       const EvaluationOptions& options, const std::optional<TreeEncoding>& baseline,
                                       const UncertaintyModel* model)
{
    if (options.K == 0) throw ValidationError("K must be positive");
    tree.check_ranges(test.num_features(), test.num_labels());
    RhoMatrix effective = rho;
    if (options.rho_offset != 0.0) effective = effective.offset(test, options.rho_offset);
    if (options.rho_radius != 0.0) effective = effective.resample(test, options.rho_radius, derive_seed(options.seed, 0xbeef));

    const double n = static_cast<double>(test.num_rows());
    EvaluationReport r;
    r.num_rows = test.num_rows();
    r.K = options.K;
    r.seed = options.seed;
    r.rho_offset = options.rho_offset;
    r.rho_radius = options.rho_radius;
    r.depth = tree.depth();
    r.branch_nodes = tree.num_branch_nodes();
    r.nominal_accuracy = static_cast<double>(nominal_correct(tree, test)) / n;

    r.set_seeds.resize(options.K);
    for (std::size_t k = 0; k < options.K; ++k) r.set_seeds[k] = derive_seed(options.seed, k + 1);

    std::vector<std::size_t> correct(options.K);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k)
            correct[k] = correct_on(tree, test, sample_perturbation(test, effective, r.set_seeds[k]));
    };
    const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, options.K);
    if (threads == 1) {
        work(0, options.K);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (options.K + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(options.K, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    std::size_t worst = correct.front(), total = 0;
    for (auto c : correct) {
        worst = std::min(worst, c);
        total += c;
    }
    r.worst_accuracy = static_cast<double>(worst) / n;
    r.average_accuracy = static_cast<double>(total) / (n * static_cast<double>(options.K));
    if (baseline) {
        baseline->check_ranges(test.num_features(), test.num_labels());
        r.price_of_robustness = static_cast<double>(nominal_correct(*baseline, test)) / n - r.nominal_accuracy;
    }
    if (model) r.adversarial_accuracy = static_cast<double>(worst_case_correct(tree, test, *model).value) / n;
    return r;
}

std::string evaluation_json(const EvaluationReport& r)
{
    json root;
    root["rows"] = r.num_rows;
    root["K"] = r.K;
    root["seed"] = r.seed;
    root["rho_offset"] = r.rho_offset;
    root["rho_radius"] = r.rho_radius;
    root["depth"] = r.depth;
    root["branch_nodes"] = r.branch_nodes;
    root["nominal_accuracy"] = r.nominal_accuracy;
    root["worst_accuracy"] = r.worst_accuracy;
    root["average_accuracy"] = r.average_accuracy;
    root["price_of_robustness"] = r.price_of_robustness ? json(*r.price_of_robustness) : json(nullptr);
    root["adversarial_accuracy"] = r.adversarial_accuracy ? json(*r.adversarial_accuracy) : json(nullptr);
    root["set_seeds"] = r.set_seeds;
    return root.dump(2) + "\n";
}

} // namespace robtree
