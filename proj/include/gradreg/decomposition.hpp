#pragma once
// Signal-noise decomposition of the filter displacement. Every filter of a
// trained model can be written uniquely (for d > n, almost surely) as
//
//   w_{j,r}(t) = w_{j,r}(0) + j gamma_{j,r} mu / |mu|^2
//                          + sum_i rho_{j,r,i} xi_i / |xi_i|^2  + residual,
//
// where gamma measures signal learning and rho_{j,r,i} noise memorization.
// Two independent routes compute the coefficients:
//
//   solve_direct    - least-squares projection of w(t) - w(0) onto
//                     span{mu, xi_1..xi_n} through the basis Gram matrix;
//   step_recurrence - advances (gamma, rho) alongside the optimizer using
//                     the per-step cache, one increment per gradient step.
//
// The recurrence consumes the optimizer's own cache so the tracked
// coefficients correspond to the steps actually taken; the direct solve is
// the cross-check, and its residual flags any displacement component
// outside the span.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/gradient.hpp"
#include "gradreg/linalg.hpp"
#include "gradreg/network.hpp"

namespace gradreg {

struct DecompositionBasis {
    int n = 0;
    int d = 0;
    double mu_norm_sq = 0.0;
    std::vector<double> xi_norm_sq;  // n
    std::vector<double> gram;        // (n+1)^2 of the raw basis {mu, xi_1..xi_n}
    std::vector<double> chol;        // Cholesky factor of gram

    static DecompositionBasis build(const Dataset& ds) {
        DecompositionBasis b;
        b.n = ds.n();
        b.d = ds.d();
        if (b.d <= b.n)
            throw std::invalid_argument("DecompositionBasis: need d > n for a well-posed basis");
        b.mu_norm_sq = ds.spec.mu_norm_sq();
        b.xi_norm_sq.resize(static_cast<std::size_t>(b.n));
        for (int i = 0; i < b.n; ++i) b.xi_norm_sq[static_cast<std::size_t>(i)] = ds.xi_norm_sq(i);
        const std::size_t k = static_cast<std::size_t>(b.n) + 1;
        b.gram.assign(k * k, 0.0);
        b.gram[0] = b.mu_norm_sq;
        for (int i = 0; i < b.n; ++i) {
            const double v = dot(ds.spec.mu, ds.xi_row(i));
            b.gram[static_cast<std::size_t>(i + 1)] = v;
            b.gram[static_cast<std::size_t>(i + 1) * k] = v;
            for (int l = 0; l <= i; ++l) {
                const double g = dot(ds.xi_row(i), ds.xi_row(l));
                b.gram[static_cast<std::size_t>(i + 1) * k + static_cast<std::size_t>(l + 1)] = g;
                b.gram[static_cast<std::size_t>(l + 1) * k + static_cast<std::size_t>(i + 1)] = g;
            }
        }
        b.chol = b.gram;
        cholesky_factor(b.chol, k);  // throws on a singular (degenerate) basis
        return b;
    }
};

struct DecompositionState {
    int m = 0;
    int n = 0;
    std::vector<double> gamma;  // 2m, indexed by flat filter
    std::vector<double> rho;    // 2m x n
    double residual = 0.0;      // |W - W0 - projection|_F from the last direct solve
    double residual_rel = 0.0;  // residual / |W - W0|_F (0 when the displacement is 0)

    DecompositionState() = default;
    DecompositionState(int m_, int n_)
        : m(m_), n(n_), gamma(static_cast<std::size_t>(2) * m_, 0.0), rho(static_cast<std::size_t>(2) * m_ * n_, 0.0) {}

    double& rho_ref(int f, int i) { return rho[static_cast<std::size_t>(f) * n + i]; }
    double rho_val(int f, int i) const { return rho[static_cast<std::size_t>(f) * n + i]; }

    // rho restricted to matching (j = y_i) and mismatching (j != y_i) banks.
    double rho_bar(int f, int i, int label) const {
        return FilterBank::sign_of_flat(f, m) == label ? rho_val(f, i) : 0.0;
    }
    double rho_under(int f, int i, int label) const {
        return FilterBank::sign_of_flat(f, m) != label ? rho_val(f, i) : 0.0;
    }

    double gamma_max() const { return gamma.empty() ? 0.0 : *std::max_element(gamma.begin(), gamma.end()); }

    double rho_bar_max(const Dataset& ds) const {
        double v = 0.0;
        for (int f = 0; f < 2 * m; ++f)
            for (int i = 0; i < n; ++i)
                v = std::max(v, rho_bar(f, i, ds.points[static_cast<std::size_t>(i)].label));
        return v;
    }
    double rho_under_min(const Dataset& ds) const {
        double v = 0.0;
        for (int f = 0; f < 2 * m; ++f)
            for (int i = 0; i < n; ++i)
                v = std::min(v, rho_under(f, i, ds.points[static_cast<std::size_t>(i)].label));
        return v;
    }
};

// Projects every filter displacement onto span{mu, xi_1..xi_n} and maps the
// raw coefficients to Definition-style (gamma, rho): the mu coefficient c0
// gives gamma = j c0 |mu|^2, the xi_i coefficient c_i gives rho = c_i |xi_i|^2.
inline DecompositionState solve_direct(const ModelParams& params_t, const ModelParams& params_0,
                                       const DecompositionBasis& basis, const Dataset& ds) {
    if (!params_t.w.same_shape(params_0.w))
        throw std::invalid_argument("solve_direct: shape mismatch");
    if (params_t.d() != basis.d) throw std::invalid_argument("solve_direct: basis dimension mismatch");
    const int nf = params_t.w.num_filters();
    const std::size_t k = static_cast<std::size_t>(basis.n) + 1;
    DecompositionState st(params_t.m(), basis.n);
    std::vector<double> delta(static_cast<std::size_t>(basis.d));
    std::vector<double> rhs(k);
    double res_sq = 0.0, delta_sq = 0.0;
    for (int f = 0; f < nf; ++f) {
        const double j = FilterBank::sign_of_flat(f, params_t.m());
        auto wt = params_t.w.filter(f);
        auto w0 = params_0.w.filter(f);
        for (int x = 0; x < basis.d; ++x) delta[static_cast<std::size_t>(x)] = wt[static_cast<std::size_t>(x)] - w0[static_cast<std::size_t>(x)];
        delta_sq += norm_sq(delta);
        rhs[0] = dot(delta, ds.spec.mu);
        for (int i = 0; i < basis.n; ++i) rhs[static_cast<std::size_t>(i + 1)] = dot(delta, ds.xi_row(i));
        cholesky_solve(basis.chol, k, rhs);
        st.gamma[static_cast<std::size_t>(f)] = j * rhs[0] * basis.mu_norm_sq;
        for (int i = 0; i < basis.n; ++i)
            st.rho_ref(f, i) = rhs[static_cast<std::size_t>(i + 1)] * basis.xi_norm_sq[static_cast<std::size_t>(i)];
        // residual of this filter's projection
        axpy(-rhs[0], ds.spec.mu, delta);
        for (int i = 0; i < basis.n; ++i) axpy(-rhs[static_cast<std::size_t>(i + 1)], ds.xi_row(i), delta);
        res_sq += norm_sq(delta);
    }
    st.residual = std::sqrt(res_sq);
    st.residual_rel = delta_sq > 0.0 ? st.residual / std::sqrt(delta_sq) : 0.0;
    return st;
}

// Advances (gamma, rho) by one gradient step of the standard/PEGR update
// rule, using the cache computed at the iterate the optimizer stepped from:
//
//   gamma += -(2 eta / n m) sum_i [ lp_i (1 + 4 lambda zeta_i lpp_i / m^2)
//              relu(<w, y_i mu>) |mu|^2
//            + (2 lambda / m) lp_i^2 relu(<w, y_i mu>) |mu|^4 j y_i ]
//   rho_i += -(2 eta / n m) [ lp_i (1 + 4 lambda zeta_i lpp_i / m^2)
//              relu(<w, xi_i>) |xi_i|^2 j y_i
//            + (2 lambda / m) lp_i^2 relu(<w, xi_i>) |xi_i|^4 ]
//
// The 1/m^2 in the zeta cross term matches the exact objective gradient
// (see pegr_step_closed_form). With lambda = 0 the increments reduce to the
// three-recurrence form for (gamma, rho_bar, rho_under) whose signs are
// forced by lp < 0, relu >= 0.
inline void step_recurrence(DecompositionState& st, const PerExampleCache& cache, const Dataset& ds,
                            double lambda, double eta) {
    if (cache.n != ds.n() || st.n != ds.n() || cache.num_filters != 2 * st.m)
        throw std::invalid_argument("step_recurrence: shape mismatch");
    const double m = st.m;
    const double n = ds.n();
    const double mu2 = ds.spec.mu_norm_sq();
    for (int f = 0; f < 2 * st.m; ++f) {
        const double j = FilterBank::sign_of_flat(f, st.m);
        double dgamma = 0.0;
        for (int i = 0; i < ds.n(); ++i) {
            const LossStats& s = cache.stats[static_cast<std::size_t>(i)];
            const double y = ds.points[static_cast<std::size_t>(i)].label;
            const double xi2 = ds.xi_norm_sq(i);
            const double boost = 1.0 + 4.0 * lambda * cache.zeta[static_cast<std::size_t>(i)] * s.lpp / (m * m);
            const double rs = relu(cache.pre_sig(i, f));
            const double rn = relu(cache.pre_noi(i, f));
            dgamma += s.lp * boost * rs * mu2 + (2.0 * lambda / m) * s.lp * s.lp * rs * mu2 * mu2 * j * y;
            st.rho_ref(f, i) -= (2.0 * eta / (n * m)) *
                                (s.lp * boost * rn * xi2 * j * y + (2.0 * lambda / m) * s.lp * s.lp * rn * xi2 * xi2);
        }
        st.gamma[static_cast<std::size_t>(f)] -= (2.0 * eta / (n * m)) * dgamma;
    }
}

// Advances the tracker from an explicit basis-coefficient gradient (the FGR
// route): delta gamma = -eta j a |mu|^2, delta rho_i = -eta b_i |xi_i|^2.
inline void apply_coefficient_step(DecompositionState& st, const GradCoeffs& coeffs, const Dataset& ds,
                                   double eta) {
    if (coeffs.num_filters != 2 * st.m || coeffs.n != st.n)
        throw std::invalid_argument("apply_coefficient_step: shape mismatch");
    const double mu2 = ds.spec.mu_norm_sq();
    for (int f = 0; f < 2 * st.m; ++f) {
        const double j = FilterBank::sign_of_flat(f, st.m);
        st.gamma[static_cast<std::size_t>(f)] -= eta * j * coeffs.a[static_cast<std::size_t>(f)] * mu2;
        for (int i = 0; i < st.n; ++i)
            st.rho_ref(f, i) -= eta * coeffs.bval(f, i) * ds.xi_norm_sq(i);
    }
}

struct MonotonicityReport {
    // lambda = 0: sign violations of the three-recurrence structure.
    long gamma_decreases = 0;
    long rho_bar_decreases = 0;
    long rho_under_increases = 0;
    // lambda > 0: signed movement summary only (monotonicity not guaranteed).
    long rho_bar_up = 0;
    long rho_bar_down = 0;
    bool asserted = false;  // true when lambda = 0 and violations are meaningful

    long violations() const { return gamma_decreases + rho_bar_decreases + rho_under_increases; }
};

inline MonotonicityReport monotonicity_report(const DecompositionState& prev,
                                              const DecompositionState& next, double lambda,
                                              const Dataset& ds) {
    if (prev.m != next.m || prev.n != next.n)
        throw std::invalid_argument("monotonicity_report: shape mismatch");
    MonotonicityReport rep;
    rep.asserted = lambda == 0.0;
    for (int f = 0; f < 2 * prev.m; ++f) {
        if (rep.asserted && next.gamma[static_cast<std::size_t>(f)] < prev.gamma[static_cast<std::size_t>(f)]) ++rep.gamma_decreases;
        for (int i = 0; i < prev.n; ++i) {
            const int y = ds.points[static_cast<std::size_t>(i)].label;
            const double pb = prev.rho_bar(f, i, y), nb = next.rho_bar(f, i, y);
            const double pu = prev.rho_under(f, i, y), nu = next.rho_under(f, i, y);
            if (rep.asserted) {
                if (nb < pb) ++rep.rho_bar_decreases;
                if (nu > pu) ++rep.rho_under_increases;
            } else {
                if (nb > pb) ++rep.rho_bar_up;
                if (nb < pb) ++rep.rho_bar_down;
            }
        }
    }
    return rep;
}

// Envelope bounds on the tracked coefficients at horizon t_star:
// 0 <= gamma, rho_bar <= 4 log(t_star) and rho_under >= -4 log(t_star).
// Advisory: the bounds' preconditions need not hold at desk scale.
struct BoundReport {
    double envelope = 0.0;
    long gamma_violations = 0;
    long rho_bar_violations = 0;
    long rho_under_violations = 0;
    long total() const { return gamma_violations + rho_bar_violations + rho_under_violations; }
};

inline BoundReport check_coefficient_bounds(const DecompositionState& st, const Dataset& ds,
                                            double t_star) {
    BoundReport rep;
    rep.envelope = 4.0 * std::log(t_star);
    for (int f = 0; f < 2 * st.m; ++f) {
        const double g = st.gamma[static_cast<std::size_t>(f)];
        if (g < 0.0 || g > rep.envelope) ++rep.gamma_violations;
        for (int i = 0; i < st.n; ++i) {
            const int y = ds.points[static_cast<std::size_t>(i)].label;
            const double rb = st.rho_bar(f, i, y);
            const double ru = st.rho_under(f, i, y);
            if (rb < 0.0 || rb > rep.envelope) ++rep.rho_bar_violations;
            if (ru < -rep.envelope) ++rep.rho_under_violations;
        }
    }
    return rep;
}

}  // namespace gradreg
