#pragma once
// Self-check battery behind the `validate` CLI subcommand: finite-difference
// verification of every analytic gradient, closed-form vs HVP step
// equivalence, decomposition dual-path consistency, and the concentration
// suite. Each check reports the measured error against its tolerance.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/decomposition.hpp"
#include "gradreg/gradient.hpp"
#include "gradreg/metrics.hpp"
#include "gradreg/trainer.hpp"

namespace gradreg {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct ValidationOptions {
    double h = 1e-5;
    int fd_instances = 100;
    int concentration_trials = 500;
    std::uint64_t seed = 7;
    std::vector<std::string> only;           // empty = all checks
    bool inject_grad_perturbation = false;   // test hook: corrupt one component
};

namespace detail {

// Smallest |pre-activation| over all filters, examples and patches; the
// kink-avoidance guard for finite differencing.
inline double min_preactivation(const ModelParams& params, const Dataset& ds) {
    double v = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.n(); ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        for (int f = 0; f < params.w.num_filters(); ++f) {
            auto w = params.w.filter(f);
            v = std::min(v, std::abs(dot(w, p.patch1)));
            v = std::min(v, std::abs(dot(w, p.patch2)));
        }
    }
    return v;
}

struct Instance {
    Dataset ds;
    ModelParams params;
};

// Random model-generated instance whose pre-activations are bounded away
// from the activation kink.
inline Instance guarded_instance(int d, int n, int m, std::uint64_t seed, double guard = 1e-3) {
    for (std::uint64_t attempt = 0; attempt < 200; ++attempt) {
        const std::uint64_t s = substream(seed, 0x696e7374ULL, attempt);
        const double mu_norm = 0.7 + 0.6 * (static_cast<double>(mix64(s) >> 32) * 0x1.0p-32);
        SignalNoiseSpec spec = SignalNoiseSpec::axis(d, mu_norm, 1.0);
        Dataset ds = Dataset::generate(spec, n, s);
        ModelParams params = init_gaussian(m, d, 0.25, mix64(s));
        if (min_preactivation(params, ds) > guard) return {std::move(ds), std::move(params)};
    }
    throw std::runtime_error("guarded_instance: could not find a kink-free instance");
}

// Central finite difference of the regularized objective over every
// parameter coordinate.
inline GradientBundle fd_objective_grad(const ModelParams& params, const Dataset& ds, RegMode mode,
                                        double h) {
    GradientBundle g(params.m(), params.d());
    ModelParams probe = params;
    for (std::size_t k = 0; k < probe.w.v.size(); ++k) {
        const double saved = probe.w.v[k];
        probe.w.v[k] = saved + h;
        const double up = objective_value(probe, ds, mode).total();
        probe.w.v[k] = saved - h;
        const double dn = objective_value(probe, ds, mode).total();
        probe.w.v[k] = saved;
        g.v[k] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline double rel_diff(const GradientBundle& a, const GradientBundle& b) {
    double num = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) {
        const double d = a.v[k] - b.v[k];
        num += d * d;
    }
    const double den = std::max(b.frob_sq(), 1e-300);
    return std::sqrt(num / den);
}

}  // namespace detail

inline CheckResult check_grad_fd(const ValidationOptions& opts) {
    CheckResult res{"grad-fd", true, 0.0, 1e-4, ""};
    const int dims[] = {5, 50};
    const int ns[] = {1, 5};
    const int ms[] = {1, 4};
    const double lambdas[] = {0.01, 0.1, 1.0};
    int count = 0;
    for (int k = 0; k < opts.fd_instances; ++k) {
        const int d = dims[k % 2];
        const int n = ns[(k / 2) % 2];
        const int m = ms[(k / 4) % 2];
        const double lambda = lambdas[k % 3];
        detail::Instance inst = detail::guarded_instance(d, n, m, substream(opts.seed, 0x6664ULL, static_cast<std::uint64_t>(k)));
        const RegMode modes[] = {RegMode::standard(), RegMode::pegr(lambda), RegMode::fgr(lambda)};
        for (const RegMode& mode : modes) {
            GradientBundle analytic = objective_grad(inst.params, inst.ds, mode);
            if (opts.inject_grad_perturbation) analytic.v[0] += 1e-3;
            const GradientBundle fd = detail::fd_objective_grad(inst.params, inst.ds, mode, opts.h);
            const double err = detail::rel_diff(analytic, fd);
            if (err > res.measured) {
                res.measured = err;
                res.detail = std::string(mode_name(mode.kind)) + " instance " + std::to_string(k);
            }
            ++count;
        }
    }
    res.pass = res.measured < res.tolerance;
    res.detail += " (" + std::to_string(count) + " gradient checks)";
    return res;
}

inline CheckResult check_closed_form(const ValidationOptions& opts) {
    CheckResult res{"closed-form", true, 0.0, 1e-9, ""};
    const double lambdas[] = {0.0, 0.01, 1.0};
    for (int k = 0; k < 50; ++k) {
        detail::Instance inst =
            detail::guarded_instance(k % 2 ? 40 : 12, 4, 3, substream(opts.seed, 0x6366ULL, static_cast<std::uint64_t>(k)), 0.0);
        const double lambda = lambdas[k % 3];
        const double eta = 0.05;
        const ModelParams cf = pegr_step_closed_form(inst.params, inst.ds, lambda, eta);
        ModelParams hv = inst.params;
        const GradientBundle g = objective_grad(inst.params, inst.ds,
                                                lambda == 0.0 ? RegMode::standard() : RegMode::pegr(lambda));
        hv.w.add_scaled(-eta, g);
        double num = 0.0;
        for (std::size_t x = 0; x < cf.w.v.size(); ++x) {
            const double d = cf.w.v[x] - hv.w.v[x];
            num += d * d;
        }
        const double err = std::sqrt(num / std::max(hv.w.frob_sq(), 1e-300));
        if (err > res.measured) {
            res.measured = err;
            res.detail = "lambda=" + fmt_g17(lambda);
        }
    }
    res.pass = res.measured < res.tolerance;
    return res;
}

inline CheckResult check_decomposition(const ValidationOptions& opts) {
    CheckResult res{"decomposition", true, 0.0, 1e-6, ""};
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(400, 1.0, 1.0);
    const Dataset ds = Dataset::generate(spec, 20, substream(opts.seed, 0x64656355ULL));
    const ModelParams init = init_gaussian(10, 400, 0.01, substream(opts.seed, 0x64656349ULL));
    const DecompositionBasis basis = DecompositionBasis::build(ds);
    DecompositionState tracked(init.m(), ds.n());
    ModelParams params = init;
    const double eta = 0.02, lambda = 0.01;
    for (int t = 0; t < 100; ++t) {
        const PerExampleCache cache = build_cache(params, ds);
        step_recurrence(tracked, cache, ds, lambda, eta);
        params = pegr_step_closed_form(params, ds, cache, lambda, eta);
    }
    const DecompositionState direct = solve_direct(params, init, basis, ds);
    double max_diff = 0.0;
    for (std::size_t k = 0; k < tracked.gamma.size(); ++k)
        max_diff = std::max(max_diff, std::abs(tracked.gamma[k] - direct.gamma[k]));
    for (std::size_t k = 0; k < tracked.rho.size(); ++k)
        max_diff = std::max(max_diff, std::abs(tracked.rho[k] - direct.rho[k]));
    res.measured = max_diff;
    res.detail = "residual_rel=" + fmt_g17(direct.residual_rel);
    res.pass = max_diff < res.tolerance && direct.residual_rel < 1e-8;
    return res;
}

inline CheckResult check_concentration(const ValidationOptions& opts) {
    CheckResult res{"concentration", true, 0.0, 0.0, ""};
    const SignalNoiseSpec spec = SignalNoiseSpec::axis(400, 1.0, 1.0);
    const ConcentrationReport rep =
        concentration_suite(spec, 20, 10, 0.01, 0.05, opts.concentration_trials, substream(opts.seed, 0x636f6eULL));
    res.pass = rep.all_pass();
    for (const auto& row : rep.rows) {
        if (row.asserted) {
            res.measured = std::max(res.measured, row.rate);
            res.tolerance = row.budget;
        }
    }
    res.detail = "\n" + rep.table() + rep.machine_lines();
    return res;
}

inline std::vector<CheckResult> run_validation(const ValidationOptions& opts) {
    auto wanted = [&](const char* name) {
        if (opts.only.empty()) return true;
        return std::find(opts.only.begin(), opts.only.end(), name) != opts.only.end();
    };
    std::vector<CheckResult> out;
    if (wanted("grad-fd")) out.push_back(check_grad_fd(opts));
    if (wanted("closed-form")) out.push_back(check_closed_form(opts));
    if (wanted("decomposition")) out.push_back(check_decomposition(opts));
    if (wanted("concentration")) out.push_back(check_concentration(opts));
    return out;
}

}  // namespace gradreg
