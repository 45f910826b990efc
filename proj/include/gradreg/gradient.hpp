#pragma once
// Exact analytic losses, gradients, and Hessian-vector products for the
// logistic loss on the two-layer squared-ReLU CNN, plus the regularized
// objectives:
//
//   standard   L_S(W)            = (1/n) sum_i loss(y_i f(W, x_i))
//   per-example (PEGR) objective = L_S + (lambda/2n) sum_i |grad loss_i|_F^2
//   full-gradient (FGR) objective= L_S + (lambda/2)  |grad L_S|_F^2
//
// Penalty gradients are computed through analytic per-example Hessian-vector
// products, which are exact for arbitrary inputs (no orthogonality
// assumption):
//
//   grad PEGR penalty = (lambda/n) sum_i H_i g_i,    g_i = grad loss_i
//   grad FGR penalty  = (lambda/n) sum_i H_i G,      G   = grad L_S
//
// For data from the signal-noise generator there is also a closed-form PEGR
// step (pegr_step_closed_form) that exploits <mu, xi_i> = 0; it is the fast
// path in the trainer and must agree with the HVP route to roundoff.
//
// objective_grad_coeffs expresses the same gradients as coefficients over
// the basis {mu, xi_1..xi_n}; the decomposition tracker consumes these, and
// for the FGR mode they carry the full <xi_i, xi_i'> cross terms.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/network.hpp"

namespace gradreg {

struct LossStats {
    double margin = 0.0;  // z = y * f(W, x)
    double loss = 0.0;    // log(1 + exp(-z))
    double lp = 0.0;      // loss'(z)  in (-1, 0)
    double lpp = 0.0;     // loss''(z) in (0, 1/4]
};

// Numerically stable logistic loss and its first two derivatives.
// loss = max(-z, 0) + log1p(exp(-|z|)); lp via the stable sigmoid;
// lpp = -lp (1 + lp) > 0 exactly by the identity.
inline LossStats logistic(double z) {
    LossStats s;
    s.margin = z;
    const double t = std::exp(-std::abs(z));
    s.loss = (z > 0.0 ? 0.0 : -z) + std::log1p(t);
    s.lp = z >= 0.0 ? -t / (1.0 + t) : -1.0 / (1.0 + t);
    s.lpp = -s.lp * (1.0 + s.lp);
    return s;
}

struct RegMode {
    enum class Kind { Standard, Pegr, Fgr };
    Kind kind = Kind::Standard;
    double lambda = 0.0;

    static RegMode standard() { return {Kind::Standard, 0.0}; }
    static RegMode pegr(double lambda) { return checked(Kind::Pegr, lambda); }
    static RegMode fgr(double lambda) { return checked(Kind::Fgr, lambda); }

    double effective_lambda() const { return kind == Kind::Standard ? 0.0 : lambda; }
    RegMode with_lambda(double l) const { return checked(kind, kind == Kind::Standard ? 0.0 : l); }

  private:
    static RegMode checked(Kind k, double lambda) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("RegMode: lambda must be >= 0");
        return {k, lambda};
    }
};

inline const char* mode_name(RegMode::Kind k) {
    switch (k) {
        case RegMode::Kind::Standard: return "standard";
        case RegMode::Kind::Pegr: return "pegr";
        case RegMode::Kind::Fgr: return "fgr";
    }
    return "?";
}

// Per-step quantities at one iterate, shared by the optimizer, the
// closed-form step, and the decomposition recurrence. sig_pre and noi_pre
// hold <w_f, y_i mu> and <w_f, xi_i> for every filter f and example i.
struct PerExampleCache {
    int n = 0;
    int num_filters = 0;
    std::vector<LossStats> stats;   // n
    std::vector<double> zeta;       // n
    std::vector<double> sig_pre;    // n * num_filters
    std::vector<double> noi_pre;    // n * num_filters

    double pre_sig(int i, int f) const { return sig_pre[static_cast<std::size_t>(i) * num_filters + f]; }
    double pre_noi(int i, int f) const { return noi_pre[static_cast<std::size_t>(i) * num_filters + f]; }

    double mean_loss() const {
        double s = 0.0;
        for (const auto& st : stats) s += st.loss;
        return s / static_cast<double>(n);
    }
};

inline PerExampleCache build_cache(const ModelParams& params, const Dataset& ds) {
    if (params.d() != ds.d()) throw std::invalid_argument("build_cache: dimension mismatch");
    const int n = ds.n();
    const int nf = params.w.num_filters();
    const int m = params.m();
    PerExampleCache c;
    c.n = n;
    c.num_filters = nf;
    c.stats.resize(static_cast<std::size_t>(n));
    c.zeta.resize(static_cast<std::size_t>(n));
    c.sig_pre.resize(static_cast<std::size_t>(n) * nf);
    c.noi_pre.resize(static_cast<std::size_t>(n) * nf);
    const double mu2 = ds.spec.mu_norm_sq();
    for (int i = 0; i < n; ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        const double y = p.label;
        const auto xi = ds.xi_row(i);
        const double xi2 = ds.xi_norm_sq(i);
        double f_plus = 0.0, f_minus = 0.0, zeta_i = 0.0;
        for (int f = 0; f < nf; ++f) {
            auto w = params.w.filter(f);
            const double ps = y * dot(w, ds.spec.mu);  // <w, y_i mu>, exact since y = +-1
            const double pn = dot(w, xi);
            c.sig_pre[static_cast<std::size_t>(i) * nf + f] = ps;
            c.noi_pre[static_cast<std::size_t>(i) * nf + f] = pn;
            const double af = act(ps) + act(pn);
            if (f < m)
                f_plus += af;
            else
                f_minus += af;
            const double rs = relu(ps), rn = relu(pn);
            zeta_i += rs * rs * mu2 + rn * rn * xi2;
        }
        const double margin = y * (f_plus - f_minus) / static_cast<double>(m);
        c.stats[static_cast<std::size_t>(i)] = logistic(margin);
        c.zeta[static_cast<std::size_t>(i)] = zeta_i;
    }
    return c;
}

// zeta_i = sum_f [ relu^2(<w_f, y_i mu>) |mu|^2 + relu^2(<w_f, xi_i>) |xi_i|^2 ].
// Proportional to the squared per-example gradient norm:
// |g_i|_F^2 = (4 lp_i^2 / m^2) zeta_i on generated (orthogonal) data.
inline double zeta(const ModelParams& params, const Dataset& ds, int i) {
    if (i < 0 || i >= ds.n()) throw std::invalid_argument("zeta: point index out of range");
    const double y = ds.points[static_cast<std::size_t>(i)].label;
    const auto xi = ds.xi_row(i);
    const double mu2 = ds.spec.mu_norm_sq();
    const double xi2 = ds.xi_norm_sq(i);
    double s = 0.0;
    for (int f = 0; f < params.w.num_filters(); ++f) {
        auto w = params.w.filter(f);
        const double rs = relu(y * dot(w, ds.spec.mu));
        const double rn = relu(dot(w, xi));
        s += rs * rs * mu2 + rn * rn * xi2;
    }
    return s;
}

// grad_{w_{j,r}} loss(y f(W, x)) =
//   (lp / m) j y [ act'(<w,x1>) x1 + act'(<w,x2>) x2 ].
inline GradientBundle per_example_grad(const ModelParams& params, const DataPoint& point) {
    if (static_cast<int>(point.patch1.size()) != params.d())
        throw std::invalid_argument("per_example_grad: dimension mismatch");
    const double y = point.label;
    const LossStats st = logistic(y * forward(params, point));
    GradientBundle g(params.m(), params.d());
    const double m = params.m();
    for (int f = 0; f < g.num_filters(); ++f) {
        const double j = FilterBank::sign_of_flat(f, g.m);
        auto w = params.w.filter(f);
        auto out = g.filter(f);
        const double c = st.lp * j * y / m;
        axpy(c * act_d(dot(w, point.patch1)), point.patch1, out);
        axpy(c * act_d(dot(w, point.patch2)), point.patch2, out);
    }
    return g;
}

// (1/n) sum_i per_example_grad; accumulated in point-index order so the
// result is deterministic.
inline GradientBundle full_grad(const ModelParams& params, const Dataset& ds) {
    if (ds.n() < 1) throw std::invalid_argument("full_grad: empty dataset");
    GradientBundle g(params.m(), params.d());
    const double m = params.m();
    const double inv_n = 1.0 / static_cast<double>(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        const double y = p.label;
        const LossStats st = logistic(y * forward(params, p));
        for (int f = 0; f < g.num_filters(); ++f) {
            const double j = FilterBank::sign_of_flat(f, g.m);
            auto w = params.w.filter(f);
            auto out = g.filter(f);
            const double c = inv_n * st.lp * j * y / m;
            axpy(c * act_d(dot(w, p.patch1)), p.patch1, out);
            axpy(c * act_d(dot(w, p.patch2)), p.patch2, out);
        }
    }
    return g;
}

// Hessian-vector product of the per-example loss:
//   H_i v = lpp <grad f, v> grad f + lp y (hess f) v,
// where per filter (hess f . v)_f =
//   (2 j / m) [ 1{<w,x1>>0} <x1, v_f> x1 + 1{<w,x2>>0} <x2, v_f> x2 ].
// O(m d) time; kink convention act''(0) = 0.
inline GradientBundle hvp(const ModelParams& params, const DataPoint& point, const GradientBundle& v) {
    if (!params.w.same_shape(v)) throw std::invalid_argument("hvp: shape mismatch");
    const double y = point.label;
    const LossStats st = logistic(y * forward(params, point));
    const double m = params.m();
    const int nf = params.w.num_filters();

    // grad f per filter: (j/m)(act'(p1) x1 + act'(p2) x2)
    std::vector<double> gf1(static_cast<std::size_t>(nf)), gf2(static_cast<std::size_t>(nf));
    std::vector<double> ind1(static_cast<std::size_t>(nf)), ind2(static_cast<std::size_t>(nf));
    double gf_dot_v = 0.0;
    for (int f = 0; f < nf; ++f) {
        const double j = FilterBank::sign_of_flat(f, params.m());
        auto w = params.w.filter(f);
        auto vf = v.filter(f);
        const double p1 = dot(w, point.patch1);
        const double p2 = dot(w, point.patch2);
        ind1[static_cast<std::size_t>(f)] = act_dd(p1) / 2.0;  // 1{p1 > 0}
        ind2[static_cast<std::size_t>(f)] = act_dd(p2) / 2.0;
        gf1[static_cast<std::size_t>(f)] = (j / m) * act_d(p1);
        gf2[static_cast<std::size_t>(f)] = (j / m) * act_d(p2);
        gf_dot_v += gf1[static_cast<std::size_t>(f)] * dot(point.patch1, vf) +
                    gf2[static_cast<std::size_t>(f)] * dot(point.patch2, vf);
    }
    GradientBundle out(params.m(), params.d());
    for (int f = 0; f < nf; ++f) {
        const double j = FilterBank::sign_of_flat(f, params.m());
        auto vf = v.filter(f);
        auto of = out.filter(f);
        // Gauss-Newton part: lpp <grad f, v> grad f
        axpy(st.lpp * gf_dot_v * gf1[static_cast<std::size_t>(f)], point.patch1, of);
        axpy(st.lpp * gf_dot_v * gf2[static_cast<std::size_t>(f)], point.patch2, of);
        // curvature part: lp y (hess f) v
        const double c = st.lp * y * 2.0 * j / m;
        axpy(c * ind1[static_cast<std::size_t>(f)] * dot(point.patch1, vf), point.patch1, of);
        axpy(c * ind2[static_cast<std::size_t>(f)] * dot(point.patch2, vf), point.patch2, of);
    }
    return out;
}

inline GradientBundle objective_grad(const ModelParams& params, const Dataset& ds, RegMode mode) {
    GradientBundle g = full_grad(params, ds);
    const double lambda = mode.effective_lambda();
    if (lambda == 0.0) return g;
    const double scale = lambda / static_cast<double>(ds.n());
    if (mode.kind == RegMode::Kind::Pegr) {
        for (int i = 0; i < ds.n(); ++i) {
            const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
            const GradientBundle gi = per_example_grad(params, p);
            g.add_scaled(scale, hvp(params, p, gi));
        }
    } else {
        const GradientBundle base = g;
        for (int i = 0; i < ds.n(); ++i)
            g.add_scaled(scale, hvp(params, ds.points[static_cast<std::size_t>(i)], base));
    }
    return g;
}

struct ObjectiveValue {
    double train_loss = 0.0;
    double penalty = 0.0;
    double total() const { return train_loss + penalty; }
};

inline ObjectiveValue objective_value(const ModelParams& params, const Dataset& ds, RegMode mode) {
    if (ds.n() < 1) throw std::invalid_argument("objective_value: empty dataset");
    ObjectiveValue out;
    double loss = 0.0;
    for (int i = 0; i < ds.n(); ++i) {
        const DataPoint& p = ds.points[static_cast<std::size_t>(i)];
        loss += logistic(p.label * forward(params, p)).loss;
    }
    out.train_loss = loss / static_cast<double>(ds.n());
    const double lambda = mode.effective_lambda();
    if (lambda == 0.0) return out;
    if (mode.kind == RegMode::Kind::Pegr) {
        double s = 0.0;
        for (int i = 0; i < ds.n(); ++i)
            s += per_example_grad(params, ds.points[static_cast<std::size_t>(i)]).frob_sq();
        out.penalty = lambda / (2.0 * ds.n()) * s;
    } else {
        out.penalty = lambda / 2.0 * full_grad(params, ds).frob_sq();
    }
    return out;
}

// One gradient-descent step on the PEGR objective in closed form, valid for
// generated data (uses <mu, xi_i> = 0). Per filter the step subtracts
//   (2 eta / n m) sum_i lp_i (1 + 4 lambda zeta_i lpp_i / m^2) j y_i
//                   [ relu(<w, y_i mu>) y_i mu + relu(<w, xi_i>) xi_i ]
// + (4 lambda eta / n m^2) sum_i lp_i^2
//                   [ relu(<w, y_i mu>) |mu|^2 y_i mu + relu(<w, xi_i>) |xi_i|^2 xi_i ].
// The zeta cross term carries 1/m^2: differentiating lp_i^2 pulls in the
// 1/m from grad f, and finite differences of the objective pin the
// constant. With lambda = 0 this is exactly the unregularized step.
inline ModelParams pegr_step_closed_form(const ModelParams& params, const Dataset& ds,
                                         const PerExampleCache& cache, double lambda, double eta) {
    if (cache.n != ds.n() || cache.num_filters != params.w.num_filters())
        throw std::invalid_argument("pegr_step_closed_form: cache does not match");
    ModelParams next = params;
    const double m = params.m();
    const double n = ds.n();
    const double mu2 = ds.spec.mu_norm_sq();
    const int nf = params.w.num_filters();
    for (int f = 0; f < nf; ++f) {
        const double j = FilterBank::sign_of_flat(f, params.m());
        auto out = next.w.filter(f);
        for (int i = 0; i < ds.n(); ++i) {
            const LossStats& st = cache.stats[static_cast<std::size_t>(i)];
            const double y = ds.points[static_cast<std::size_t>(i)].label;
            const auto xi = ds.xi_row(i);
            const double xi2 = ds.xi_norm_sq(i);
            const double rs = relu(cache.pre_sig(i, f));
            const double rn = relu(cache.pre_noi(i, f));
            const double loss_coef =
                (2.0 * eta / (n * m)) * st.lp *
                (1.0 + 4.0 * lambda * cache.zeta[static_cast<std::size_t>(i)] * st.lpp / (m * m)) * j * y;
            const double pen_coef = (4.0 * lambda * eta / (n * m * m)) * st.lp * st.lp;
            // mu direction: loss term carries y_i mu, penalty term |mu|^2 y_i mu.
            axpy(-(loss_coef * rs * y + pen_coef * rs * mu2 * y), ds.spec.mu, out);
            axpy(-(loss_coef * rn + pen_coef * rn * xi2), xi, out);
        }
    }
    return next;
}

inline ModelParams pegr_step_closed_form(const ModelParams& params, const Dataset& ds, double lambda,
                                         double eta) {
    return pegr_step_closed_form(params, ds, build_cache(params, ds), lambda, eta);
}

// Pairwise noise inner products, needed by the FGR coefficient route.
struct DatasetGeometry {
    int n = 0;
    double mu_norm_sq = 0.0;
    std::vector<double> xi_gram;  // n x n, includes the diagonal |xi_i|^2

    static DatasetGeometry build(const Dataset& ds) {
        DatasetGeometry g;
        g.n = ds.n();
        g.mu_norm_sq = ds.spec.mu_norm_sq();
        g.xi_gram.resize(static_cast<std::size_t>(g.n) * g.n);
        for (int i = 0; i < g.n; ++i)
            for (int k = 0; k <= i; ++k) {
                const double v = dot(ds.xi_row(i), ds.xi_row(k));
                g.xi_gram[static_cast<std::size_t>(i) * g.n + k] = v;
                g.xi_gram[static_cast<std::size_t>(k) * g.n + i] = v;
            }
        return g;
    }
    double gram(int i, int k) const { return xi_gram[static_cast<std::size_t>(i) * n + k]; }
};

// A parameter-shaped vector expressed over the basis {mu, xi_1..xi_n}:
// block f of the vector equals a[f] mu + sum_i b[f][i] xi_i.
struct GradCoeffs {
    int num_filters = 0;
    int n = 0;
    std::vector<double> a;  // num_filters
    std::vector<double> b;  // num_filters x n

    GradCoeffs(int nf, int n_) : num_filters(nf), n(n_), a(static_cast<std::size_t>(nf), 0.0), b(static_cast<std::size_t>(nf) * n_, 0.0) {}
    double& bref(int f, int i) { return b[static_cast<std::size_t>(f) * n + i]; }
    double bval(int f, int i) const { return b[static_cast<std::size_t>(f) * n + i]; }

    GradientBundle assemble(const Dataset& ds, int m) const {
        GradientBundle g(m, ds.d());
        for (int f = 0; f < num_filters; ++f) {
            auto out = g.filter(f);
            axpy(a[static_cast<std::size_t>(f)], ds.spec.mu, out);
            for (int i = 0; i < n; ++i) axpy(bval(f, i), ds.xi_row(i), out);
        }
        return g;
    }
};

// Basis-coefficient form of the objective gradient at the cached iterate.
// Standard and PEGR follow the closed-form update rule; FGR applies the
// per-example Hessians to the full gradient in coefficient space, keeping
// every <xi_i, xi_k> cross term. `geometry` is required for FGR.
inline GradCoeffs objective_grad_coeffs(const ModelParams& params, const Dataset& ds,
                                        const PerExampleCache& cache, RegMode mode,
                                        const DatasetGeometry* geometry = nullptr) {
    const int nf = params.w.num_filters();
    const int n = ds.n();
    const double m = params.m();
    const double mu2 = ds.spec.mu_norm_sq();
    const double lambda = mode.effective_lambda();
    GradCoeffs g(nf, n);

    // grad L_S coefficients.
    for (int f = 0; f < nf; ++f) {
        const double j = FilterBank::sign_of_flat(f, params.m());
        double a = 0.0;
        for (int i = 0; i < n; ++i) {
            const LossStats& st = cache.stats[static_cast<std::size_t>(i)];
            const double y = ds.points[static_cast<std::size_t>(i)].label;
            a += st.lp * relu(cache.pre_sig(i, f));
            g.bref(f, i) = (2.0 / (n * m)) * st.lp * j * y * relu(cache.pre_noi(i, f));
        }
        g.a[static_cast<std::size_t>(f)] = (2.0 / (n * m)) * j * a;
    }
    if (lambda == 0.0) return g;

    if (mode.kind == RegMode::Kind::Pegr) {
        for (int f = 0; f < nf; ++f) {
            const double j = FilterBank::sign_of_flat(f, params.m());
            for (int i = 0; i < n; ++i) {
                const LossStats& st = cache.stats[static_cast<std::size_t>(i)];
                const double y = ds.points[static_cast<std::size_t>(i)].label;
                const double xi2 = ds.xi_norm_sq(i);
                const double rs = relu(cache.pre_sig(i, f));
                const double rn = relu(cache.pre_noi(i, f));
                const double cross =
                    (2.0 / (n * m)) * st.lp * (4.0 * lambda * cache.zeta[static_cast<std::size_t>(i)] * st.lpp / (m * m));
                const double pen = (4.0 * lambda / (n * m * m)) * st.lp * st.lp;
                g.a[static_cast<std::size_t>(f)] += cross * j * rs + pen * rs * mu2 * y;
                g.bref(f, i) += cross * j * y * rn + pen * rn * xi2;
            }
        }
        return g;
    }

    // FGR: penalty grad = (lambda/n) sum_i H_i G with G = grad L_S.
    if (geometry == nullptr) throw std::invalid_argument("objective_grad_coeffs: FGR needs geometry");
    const GradCoeffs base = g;
    for (int i = 0; i < n; ++i) {
        const LossStats& st = cache.stats[static_cast<std::size_t>(i)];
        const double y = ds.points[static_cast<std::size_t>(i)].label;
        // <grad f_i, G> plus per-filter projections of G onto mu and xi_i.
        double gf_dot = 0.0;
        std::vector<double> g_mu(static_cast<std::size_t>(nf)), g_xi(static_cast<std::size_t>(nf));
        for (int f = 0; f < nf; ++f) {
            const double j = FilterBank::sign_of_flat(f, params.m());
            double xi_proj = 0.0;
            for (int k = 0; k < n; ++k) xi_proj += base.bval(f, k) * geometry->gram(i, k);
            g_mu[static_cast<std::size_t>(f)] = base.a[static_cast<std::size_t>(f)] * mu2;
            g_xi[static_cast<std::size_t>(f)] = xi_proj;
            gf_dot += (2.0 * j / m) * (relu(cache.pre_sig(i, f)) * y * g_mu[static_cast<std::size_t>(f)] +
                                       relu(cache.pre_noi(i, f)) * xi_proj);
        }
        const double w = lambda / static_cast<double>(n);
        for (int f = 0; f < nf; ++f) {
            const double j = FilterBank::sign_of_flat(f, params.m());
            const double rs = relu(cache.pre_sig(i, f));
            const double rn = relu(cache.pre_noi(i, f));
            const double ind_s = rs > 0.0 ? 1.0 : 0.0;
            const double ind_n = rn > 0.0 ? 1.0 : 0.0;
            // Gauss-Newton part along grad f_i.
            g.a[static_cast<std::size_t>(f)] += w * st.lpp * gf_dot * (2.0 * j / m) * rs * y;
            g.bref(f, i) += w * st.lpp * gf_dot * (2.0 * j / m) * rn;
            // curvature part lp y (hess f_i) G; the two y factors on the mu
            // leg (from <y mu, G_f> and the y mu direction) cancel.
            g.a[static_cast<std::size_t>(f)] += w * st.lp * y * (2.0 * j / m) * ind_s * g_mu[static_cast<std::size_t>(f)];
            g.bref(f, i) += w * st.lp * y * (2.0 * j / m) * ind_n * g_xi[static_cast<std::size_t>(f)];
        }
    }
    return g;
}

}  // namespace gradreg
