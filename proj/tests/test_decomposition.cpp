#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradreg/decomposition.hpp"
#include "gradreg/trainer.hpp"
#include "support.hpp"

using namespace gradreg;

TEST_CASE("direct solve on the identity displacement") {
    const auto inst = oracle::guarded_instance(30, 5, 2, 1, 0.0);
    const DecompositionBasis basis = DecompositionBasis::build(inst.ds);
    const DecompositionState st = solve_direct(inst.params, inst.params, basis, inst.ds);
    for (double g : st.gamma) CHECK(g == 0.0);
    for (double r : st.rho) CHECK(r == 0.0);
    CHECK(st.residual == 0.0);
    CHECK(st.residual_rel == 0.0);
}

TEST_CASE("direct solve recovers constructed coefficients") {
    const auto inst = oracle::guarded_instance(30, 5, 2, 2, 0.0);
    const DecompositionBasis basis = DecompositionBasis::build(inst.ds);
    ModelParams moved = inst.params;
    // w_{+1,1} += 2 j mu/|mu|^2 + 3 xi_1/|xi_1|^2  (j = +1)
    auto w = moved.w.filter(+1, 1);
    axpy(2.0 / inst.ds.spec.mu_norm_sq(), inst.ds.spec.mu, w);
    axpy(3.0 / inst.ds.xi_norm_sq(1), inst.ds.xi_row(1), w);
    const DecompositionState st = solve_direct(moved, inst.params, basis, inst.ds);
    const int f = moved.w.flat(+1, 1);
    for (int g = 0; g < 2 * st.m; ++g)
        CHECK(st.gamma[g] == doctest::Approx(g == f ? 2.0 : 0.0).epsilon(1e-10).scale(1.0));
    for (int g = 0; g < 2 * st.m; ++g)
        for (int i = 0; i < st.n; ++i)
            CHECK(st.rho_val(g, i) == doctest::Approx(g == f && i == 1 ? 3.0 : 0.0).epsilon(1e-10).scale(1.0));
    CHECK(st.residual_rel < 1e-12);
}

TEST_CASE("gradient-descent displacements stay in the span") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(60, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 8, 3);
    const ModelParams init = init_gaussian(4, 60, 0.05, 4);
    const DecompositionBasis basis = DecompositionBasis::build(ds);
    ModelParams params = init;
    for (int t = 0; t < 50; ++t) {
        params.w.add_scaled(-0.05, full_grad(params, ds));
    }
    const DecompositionState st = solve_direct(params, init, basis, ds);
    CHECK(st.residual_rel < 1e-8);
}

TEST_CASE("coefficients are independent of the basis ordering") {
    const auto inst = oracle::guarded_instance(25, 6, 2, 5, 0.0);
    ModelParams moved = inst.params;
    moved.w.add_scaled(-0.05, objective_grad(inst.params, inst.ds, RegMode::pegr(0.1)));

    const DecompositionBasis basis = DecompositionBasis::build(inst.ds);
    const DecompositionState st = solve_direct(moved, inst.params, basis, inst.ds);

    // permute the points (and their xi rows), solve, and un-permute
    std::vector<int> perm(static_cast<std::size_t>(inst.ds.n()));
    std::iota(perm.begin(), perm.end(), 0);
    std::rotate(perm.begin(), perm.begin() + 2, perm.end());
    std::vector<int> labels;
    std::vector<SignalSlot> slots;
    std::vector<double> rows;
    for (int i : perm) {
        labels.push_back(inst.ds.points[i].label);
        slots.push_back(inst.ds.points[i].signal_slot);
        rows.insert(rows.end(), inst.ds.xi_row(i).begin(), inst.ds.xi_row(i).end());
    }
    const Dataset permuted = Dataset::assemble(inst.ds.spec, labels, slots, std::move(rows), 0);
    const DecompositionBasis basis2 = DecompositionBasis::build(permuted);
    const DecompositionState st2 = solve_direct(moved, inst.params, basis2, permuted);
    for (int f = 0; f < 2 * st.m; ++f) {
        CHECK(st2.gamma[f] == doctest::Approx(st.gamma[f]).epsilon(1e-12));
        for (int k = 0; k < st.n; ++k)
            CHECK(st2.rho_val(f, k) == doctest::Approx(st.rho_val(f, perm[k])).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("recurrence from zero weights does not move") {
    const auto inst = oracle::guarded_instance(20, 4, 2, 6, 0.0);
    const ModelParams zero = ModelParams::zeros(2, 20);
    DecompositionState st(2, inst.ds.n());
    const PerExampleCache cache = build_cache(zero, inst.ds);
    step_recurrence(st, cache, inst.ds, 0.5, 0.1);
    for (double g : st.gamma) CHECK(g == 0.0);
    for (double r : st.rho) CHECK(r == 0.0);
}

TEST_CASE("one unregularized step has the forced sign structure") {
    const auto inst = oracle::guarded_instance(30, 6, 3, 7, 0.0);
    DecompositionState st(3, inst.ds.n());
    const DecompositionState before = st;
    const PerExampleCache cache = build_cache(inst.params, inst.ds);
    step_recurrence(st, cache, inst.ds, 0.0, 0.02);
    const MonotonicityReport rep = monotonicity_report(before, st, 0.0, inst.ds);
    CHECK(rep.asserted);
    CHECK(rep.violations() == 0);
    for (double g : st.gamma) CHECK(g >= 0.0);
    for (int f = 0; f < 2 * st.m; ++f)
        for (int i = 0; i < st.n; ++i) {
            const int y = inst.ds.points[i].label;
            CHECK(st.rho_bar(f, i, y) >= 0.0);
            CHECK(st.rho_under(f, i, y) <= 0.0);
        }
}

TEST_CASE("rho_bar and rho_under partition rho") {
    const auto inst = oracle::guarded_instance(20, 5, 2, 8, 0.0);
    DecompositionState st(2, inst.ds.n());
    const PerExampleCache cache = build_cache(inst.params, inst.ds);
    step_recurrence(st, cache, inst.ds, 0.3, 0.05);
    for (int f = 0; f < 2 * st.m; ++f)
        for (int i = 0; i < st.n; ++i) {
            const int y = inst.ds.points[i].label;
            CHECK(st.rho_bar(f, i, y) + st.rho_under(f, i, y) == st.rho_val(f, i));
            CHECK(st.rho_bar(f, i, y) * st.rho_under(f, i, y) == 0.0);
        }
}

TEST_CASE("tracked recurrence agrees with the direct solve over 100 steps") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(400, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 20, 9);
    const ModelParams init = init_gaussian(10, 400, 0.01, 10);
    const DecompositionBasis basis = DecompositionBasis::build(ds);
    for (double lambda : {0.0, 0.01}) {
        ModelParams params = init;
        DecompositionState tracked(10, ds.n());
        for (int t = 0; t < 100; ++t) {
            const PerExampleCache cache = build_cache(params, ds);
            step_recurrence(tracked, cache, ds, lambda, 0.02);
            params = pegr_step_closed_form(params, ds, cache, lambda, 0.02);
        }
        const DecompositionState direct = solve_direct(params, init, basis, ds);
        double worst = 0.0;
        for (std::size_t k = 0; k < tracked.gamma.size(); ++k)
            worst = std::max(worst, std::abs(tracked.gamma[k] - direct.gamma[k]));
        for (std::size_t k = 0; k < tracked.rho.size(); ++k)
            worst = std::max(worst, std::abs(tracked.rho[k] - direct.rho[k]));
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("FGR tracking through coefficient steps stays consistent") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(100, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 8, 11);
    const ModelParams init = init_gaussian(4, 100, 0.02, 12);
    const DecompositionBasis basis = DecompositionBasis::build(ds);
    const DatasetGeometry geo = DatasetGeometry::build(ds);
    ModelParams params = init;
    DecompositionState tracked(4, ds.n());
    const double eta = 0.02, lambda = 0.01;
    for (int t = 0; t < 60; ++t) {
        const PerExampleCache cache = build_cache(params, ds);
        const GradCoeffs coeffs = objective_grad_coeffs(params, ds, cache, RegMode::fgr(lambda), &geo);
        apply_coefficient_step(tracked, coeffs, ds, eta);
        params.w.add_scaled(-eta, objective_grad(params, ds, RegMode::fgr(lambda)));
    }
    const DecompositionState direct = solve_direct(params, init, basis, ds);
    double worst = 0.0;
    for (std::size_t k = 0; k < tracked.gamma.size(); ++k)
        worst = std::max(worst, std::abs(tracked.gamma[k] - direct.gamma[k]));
    for (std::size_t k = 0; k < tracked.rho.size(); ++k)
        worst = std::max(worst, std::abs(tracked.rho[k] - direct.rho[k]));
    CHECK(worst < 1e-6);
}

TEST_CASE("coefficient envelope report") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(10, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 3, 13);
    DecompositionState st(2, 3);
    const BoundReport clean = check_coefficient_bounds(st, ds, 1e7);
    CHECK(clean.envelope == doctest::Approx(4.0 * std::log(1e7)));
    CHECK(clean.total() == 0);
    st.gamma[0] = clean.envelope + 1.0;
    st.gamma[1] = -0.5;
    st.rho_ref(0, ds.points[0].label == 1 ? 0 : 0) = 0.0;  // untouched rho stays fine
    const BoundReport dirty = check_coefficient_bounds(st, ds, 1e7);
    CHECK(dirty.gamma_violations == 2);
}

TEST_CASE("monotonicity report on identical states is empty") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(10, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 4, 14);
    DecompositionState st(2, 4);
    st.gamma[1] = 0.25;
    const MonotonicityReport rep = monotonicity_report(st, st, 0.0, ds);
    CHECK(rep.violations() == 0);
    const MonotonicityReport moves = monotonicity_report(st, st, 0.1, ds);
    CHECK_FALSE(moves.asserted);
    CHECK(moves.rho_bar_up == 0);
    CHECK(moves.rho_bar_down == 0);
}

TEST_CASE("basis requires d > n") {
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(4, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 4, 15);
    CHECK_THROWS_AS(DecompositionBasis::build(ds), std::invalid_argument);
}
