#include "robtree/error.hpp"
#include "robtree/evaluation.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace robtree;

namespace {

TreeEncoding stump(Value t)
{
    return TreeEncoding(1, {NodeSpec{}, NodeSpec::branch(0, t), NodeSpec::predict(0), NodeSpec::predict(1)});
}

} // namespace

TEST_CASE("evaluation is reproducible and independent of the thread count")
{
    const auto d = testing::table3();
    const auto rho = RhoMatrix::uniform(d, 0.6);
    EvaluationOptions o;
    o.K = 200;
    o.seed = 4;
    const auto a = evaluate_under_shifts(stump(4), d, rho, o);
    o.threads = 3;
    const auto b = evaluate_under_shifts(stump(4), d, rho, o);
    CHECK(evaluation_json(a) == evaluation_json(b));
    CHECK(a.nominal_accuracy == 1.0);
    CHECK(a.worst_accuracy <= a.average_accuracy);
    CHECK(a.average_accuracy <= 1.0);
    CHECK(a.worst_accuracy < 1.0);
    CHECK(a.set_seeds.size() == 200);
    CHECK(a.set_seeds[0] == derive_seed(4, 1));
}

TEST_CASE("certain data leaves every perturbed set equal to the test set")
{
    const auto d = testing::table3();
    EvaluationOptions o;
    o.K = 20;
    const auto r = evaluate_under_shifts(stump(5), d, RhoMatrix::uniform(d, 1.0), o);
    CHECK(r.worst_accuracy == r.nominal_accuracy);
    CHECK(r.average_accuracy == doctest::Approx(r.nominal_accuracy));
}

TEST_CASE("baseline and exact adversarial accuracy")
{
    const auto d = testing::table3();
    EvaluationOptions o;
    o.K = 10;
    const auto m = UncertaintyModel::uniform(d, 1.0, 2.0);
    const auto r = evaluate_under_shifts(TreeEncoding::constant(1, 1), d, RhoMatrix::uniform(d, 0.7), o, stump(4), &m);
    REQUIRE(r.price_of_robustness);
    CHECK(*r.price_of_robustness == doctest::Approx(4.0 / 9.0));
    REQUIRE(r.adversarial_accuracy);
    CHECK(*r.adversarial_accuracy == doctest::Approx(5.0 / 9.0));
    o.K = 0;
    CHECK_THROWS_AS(evaluate_under_shifts(stump(4), d, RhoMatrix::uniform(d, 0.7), o), ValidationError);
}

TEST_CASE("unexpected shifts move rho before sampling")
{
    const auto d = testing::table3();
    EvaluationOptions o;
    o.K = 300;
    o.rho_offset = -0.3;
    const auto worse = evaluate_under_shifts(stump(4), d, RhoMatrix::uniform(d, 0.9), o);
    o.rho_offset = 0.0;
    const auto base = evaluate_under_shifts(stump(4), d, RhoMatrix::uniform(d, 0.9), o);
    CHECK(worse.average_accuracy < base.average_accuracy);
    o.rho_radius = 0.05;
    const auto jitter = evaluate_under_shifts(stump(4), d, RhoMatrix::uniform(d, 0.9), o);
    CHECK(jitter.rho_radius == 0.05);
}
