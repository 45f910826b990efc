#pragma once
// Test-side oracles, kept independent of the library code paths they check:
// a from-the-definition network/loss re-implementation, finite-difference
// gradients built on it, the orthogonal-noise closed form for the FGR
// objective gradient, and constructed fixtures.

#include <cmath>
#include <random>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/gradient.hpp"
#include "gradreg/network.hpp"
#include "gradreg/rng.hpp"

namespace oracle {

using gradreg::Dataset;
using gradreg::DataPoint;
using gradreg::FilterBank;
using gradreg::GradientBundle;
using gradreg::ModelParams;
using gradreg::RegMode;
using gradreg::SignalNoiseSpec;
using gradreg::SignalSlot;

// Straightforward re-implementation of f(W, x) from its definition; no
// shared helpers with the library besides raw storage access.
inline double naive_forward(const ModelParams& params, const DataPoint& point) {
    const int m = params.m(), d = params.d();
    double f = 0.0;
    for (int jblock = 0; jblock < 2; ++jblock) {
        const double j = jblock == 0 ? 1.0 : -1.0;
        double side = 0.0;
        for (int r = 0; r < m; ++r) {
            const double* w = params.w.v.data() + (static_cast<std::size_t>(jblock) * m + r) * d;
            double p1 = 0.0, p2 = 0.0;
            for (int k = 0; k < d; ++k) {
                p1 += w[k] * point.patch1[static_cast<std::size_t>(k)];
                p2 += w[k] * point.patch2[static_cast<std::size_t>(k)];
            }
            if (p1 > 0.0) side += p1 * p1;
            if (p2 > 0.0) side += p2 * p2;
        }
        f += j * side / m;
    }
    return f;
}

inline double naive_loss(double z) { return (z > 0.0 ? 0.0 : -z) + std::log1p(std::exp(-std::abs(z))); }

inline double naive_lp(double z) { return -1.0 / (1.0 + std::exp(z)); }

// Per-example gradient assembled from the definition, coordinate by
// coordinate (no axpy helpers).
inline GradientBundle naive_per_example_grad(const ModelParams& params, const DataPoint& point) {
    const int m = params.m(), d = params.d();
    const double y = point.label;
    const double lp = naive_lp(y * naive_forward(params, point));
    GradientBundle g(m, d);
    for (int jblock = 0; jblock < 2; ++jblock) {
        const double j = jblock == 0 ? 1.0 : -1.0;
        for (int r = 0; r < m; ++r) {
            const std::size_t base = (static_cast<std::size_t>(jblock) * m + r) * d;
            double p1 = 0.0, p2 = 0.0;
            for (int k = 0; k < d; ++k) {
                p1 += params.w.v[base + k] * point.patch1[static_cast<std::size_t>(k)];
                p2 += params.w.v[base + k] * point.patch2[static_cast<std::size_t>(k)];
            }
            const double c1 = p1 > 0.0 ? 2.0 * p1 : 0.0;
            const double c2 = p2 > 0.0 ? 2.0 * p2 : 0.0;
            for (int k = 0; k < d; ++k)
                g.v[base + k] = (lp * j * y / m) *
                                (c1 * point.patch1[static_cast<std::size_t>(k)] + c2 * point.patch2[static_cast<std::size_t>(k)]);
        }
    }
    return g;
}

// Regularized objective value computed entirely from the naive pieces.
inline double naive_objective(const ModelParams& params, const Dataset& ds, RegMode mode) {
    const int n = ds.n();
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        loss += naive_loss(p.label * naive_forward(params, p));
    }
    loss /= n;
    const double lambda = mode.effective_lambda();
    if (lambda == 0.0) return loss;
    if (mode.kind == RegMode::Kind::Pegr) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const GradientBundle g = naive_per_example_grad(params, ds.points[static_cast<std::size_t>(i)]);
            for (double v : g.v) s += v * v;
        }
        return loss + lambda / (2.0 * n) * s;
    }
    GradientBundle mean(params.m(), params.d());
    for (int i = 0; i < n; ++i) {
        const GradientBundle g = naive_per_example_grad(params, ds.points[static_cast<std::size_t>(i)]);
        for (std::size_t k = 0; k < mean.v.size(); ++k) mean.v[k] += g.v[k] / n;
    }
    double s = 0.0;
    for (double v : mean.v) s += v * v;
    return loss + lambda / 2.0 * s;
}

// Central finite difference of the naive objective over every coordinate.
inline GradientBundle fd_objective_grad(const ModelParams& params, const Dataset& ds, RegMode mode,
                                        double h) {
    GradientBundle g(params.m(), params.d());
    ModelParams probe = params;
    for (std::size_t k = 0; k < probe.w.v.size(); ++k) {
        const double saved = probe.w.v[k];
        probe.w.v[k] = saved + h;
        const double up = naive_objective(probe, ds, mode);
        probe.w.v[k] = saved - h;
        const double dn = naive_objective(probe, ds, mode);
        probe.w.v[k] = saved;
        g.v[k] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline double rel_frob_diff(const GradientBundle& a, const GradientBundle& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) {
        const double d = a.v[k] - b.v[k];
        num += d * d;
        den += b.v[k] * b.v[k];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

inline double min_preactivation(const ModelParams& params, const Dataset& ds) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& p : ds.points)
        for (int f = 0; f < params.w.num_filters(); ++f) {
            auto w = params.w.filter(f);
            v = std::min(v, std::abs(gradreg::dot(w, p.patch1)));
            v = std::min(v, std::abs(gradreg::dot(w, p.patch2)));
        }
    return v;
}

struct Instance {
    Dataset ds;
    ModelParams params;
};

// Random sampled instance with all pre-activations bounded away from the
// activation kink (guard >> 10 h |perturbation| for h = 1e-5).
inline Instance guarded_instance(int d, int n, int m, std::uint64_t seed, double guard = 1e-3,
                                 double weight_scale = 0.25) {
    for (std::uint64_t attempt = 0; attempt < 500; ++attempt) {
        const std::uint64_t s = gradreg::substream(seed, 0x746573744f52ULL, attempt);
        const double mu_norm = 0.7 + 0.6 * (static_cast<double>(gradreg::mix64(s) >> 32) * 0x1.0p-32);
        Dataset ds = Dataset::generate(SignalNoiseSpec::axis(d, mu_norm, 1.0), n, s);
        ModelParams params = gradreg::init_gaussian(m, d, weight_scale, gradreg::mix64(s ^ 0xabcdULL));
        if (min_preactivation(params, ds) > guard) return {std::move(ds), std::move(params)};
    }
    throw std::runtime_error("guarded_instance: no kink-free instance found");
}

// Dataset whose noise rows are exactly mutually orthogonal (distinct
// coordinate axes) and exactly orthogonal to mu = |mu| e_0. Needs d >= n+1.
inline Dataset orthogonal_fixture(int d, int n, double mu_norm, std::uint64_t seed) {
    if (d < n + 1) throw std::invalid_argument("orthogonal_fixture: need d >= n+1");
    gradreg::SplitMix64 rng(seed);
    std::vector<int> labels;
    std::vector<SignalSlot> slots;
    std::vector<double> rows(static_cast<std::size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        labels.push_back((rng.next() & 1) ? 1 : -1);
        slots.push_back((rng.next() & 1) ? SignalSlot::First : SignalSlot::Second);
        rows[static_cast<std::size_t>(i) * d + (i + 1)] = 0.5 + 2.0 * rng.next_unit();
    }
    return Dataset::assemble(SignalNoiseSpec::axis(d, mu_norm, 1.0), labels, slots, std::move(rows), seed);
}

// Closed form of the FGR objective gradient valid when <mu, xi_i> = 0 and
// <xi_i, xi_k> = 0 for i != k. Derivation outline, with
// S_f = sum_i lp_i relu(<w_f, y_i mu>):
//
//   |grad L_S|_F^2 = (4/n^2 m^2) sum_f [ S_f^2 |mu|^2
//                                       + sum_i lp_i^2 relu^2(<w_f, xi_i>) |xi_i|^2 ]
//
// and differentiating (lambda/2)|grad L_S|^2 through both the explicit
// relu terms and the loss derivatives lp_i gives, per filter f = (j, r),
//
//   (2 lambda / n^2 m^2) { sum_i (2j/m) lpp_i (P_i + Q_i)
//                              [ relu(<w_f, y_i mu>) mu + y_i relu(<w_f, xi_i>) xi_i ]
//                        + 2 S_f |mu|^2 sum_i lp_i 1{<w_f, y_i mu> > 0} y_i mu
//                        + sum_i 2 lp_i^2 relu(<w_f, xi_i>) |xi_i|^2 xi_i }
//   with P_i = 2 |mu|^2 sum_f' S_f' relu(<w_f', y_i mu>)
//        Q_i = 2 lp_i sum_f' relu^2(<w_f', xi_i>) |xi_i|^2.
inline GradientBundle fgr_orthogonal_objective_grad(const ModelParams& params, const Dataset& ds,
                                                    double lambda) {
    const int n = ds.n(), m = params.m(), d = params.d();
    const int nf = 2 * m;
    const double mu2 = ds.spec.mu_norm_sq();

    std::vector<double> lp(static_cast<std::size_t>(n)), lpp(static_cast<std::size_t>(n));
    std::vector<double> rs(static_cast<std::size_t>(n) * nf), rn(static_cast<std::size_t>(n) * nf);
    for (int i = 0; i < n; ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        const double z = p.label * naive_forward(params, p);
        lp[static_cast<std::size_t>(i)] = naive_lp(z);
        lpp[static_cast<std::size_t>(i)] = std::exp(z) / ((1.0 + std::exp(z)) * (1.0 + std::exp(z)));
        for (int f = 0; f < nf; ++f) {
            auto w = params.w.filter(f);
            const double s = p.label * gradreg::dot(w, ds.spec.mu);
            const double x = gradreg::dot(w, ds.xi_row(i));
            rs[static_cast<std::size_t>(i) * nf + f] = s > 0.0 ? s : 0.0;
            rn[static_cast<std::size_t>(i) * nf + f] = x > 0.0 ? x : 0.0;
        }
    }
    std::vector<double> S(static_cast<std::size_t>(nf), 0.0);
    for (int f = 0; f < nf; ++f)
        for (int i = 0; i < n; ++i) S[static_cast<std::size_t>(f)] += lp[static_cast<std::size_t>(i)] * rs[static_cast<std::size_t>(i) * nf + f];

    std::vector<double> P(static_cast<std::size_t>(n), 0.0), Q(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const double xi2 = ds.xi_norm_sq(i);
        for (int f = 0; f < nf; ++f) {
            P[static_cast<std::size_t>(i)] += 2.0 * mu2 * S[static_cast<std::size_t>(f)] * rs[static_cast<std::size_t>(i) * nf + f];
            Q[static_cast<std::size_t>(i)] += 2.0 * lp[static_cast<std::size_t>(i)] * rn[static_cast<std::size_t>(i) * nf + f] *
                                              rn[static_cast<std::size_t>(i) * nf + f] * xi2;
        }
    }

    GradientBundle out(m, d);
    const double front = 2.0 * lambda / (static_cast<double>(n) * n * m * m);
    for (int f = 0; f < nf; ++f) {
        const double j = f < m ? 1.0 : -1.0;
        auto of = out.filter(f);
        for (int i = 0; i < n; ++i) {
            const double y = ds.points[static_cast<std::size_t>(i)].label;
            const double xi2 = ds.xi_norm_sq(i);
            const double a = rs[static_cast<std::size_t>(i) * nf + f];
            const double b = rn[static_cast<std::size_t>(i) * nf + f];
            const double common = front * (2.0 * j / m) * lpp[static_cast<std::size_t>(i)] *
                                  (P[static_cast<std::size_t>(i)] + Q[static_cast<std::size_t>(i)]);
            gradreg::axpy(common * a, ds.spec.mu, of);
            gradreg::axpy(common * y * b, ds.xi_row(i), of);
            if (a > 0.0)
                gradreg::axpy(front * 2.0 * S[static_cast<std::size_t>(f)] * mu2 * lp[static_cast<std::size_t>(i)] * y,
                              ds.spec.mu, of);
            gradreg::axpy(front * 2.0 * lp[static_cast<std::size_t>(i)] * lp[static_cast<std::size_t>(i)] * b * xi2,
                          ds.xi_row(i), of);
        }
    }
    // add grad L_S assembled naively
    for (int i = 0; i < n; ++i) {
        const GradientBundle g = naive_per_example_grad(params, ds.points[static_cast<std::size_t>(i)]);
        for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] += g.v[k] / n;
    }
    return out;
}

}  // namespace oracle
