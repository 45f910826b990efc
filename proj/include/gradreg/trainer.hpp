#pragma once
// Full-batch gradient descent with a regularize-then-cut-off lambda
// schedule. One "epoch" is one full-batch step W(t+1) = W(t) - eta grad.
// The loop wires together the gradient engine, the decomposition tracker,
// the evaluation metrics and the advisory diagnostics into a per-epoch
// trace that is bit-reproducible from (params_0, dataset, config).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/decomposition.hpp"
#include "gradreg/gradient.hpp"
#include "gradreg/metrics.hpp"
#include "gradreg/network.hpp"

namespace gradreg {

struct RegimeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainAbortError : std::runtime_error {
    long epoch;
    TrainAbortError(long epoch_, const std::string& what)
        : std::runtime_error(what + " at epoch " + std::to_string(epoch_)), epoch(epoch_) {}
};

// Phase-1 horizon: ceil( (m / (eta |mu|^2)) log( 4 / (sqrt(2 log(8m/delta))
// sigma_0 |mu| log n) ) ). Signals a regime violation when the log argument
// is not > 1 (the small-initialization assumption fails).
inline long theory_t1(int m, double eta, double mu_norm, double sigma_0, int n, double delta) {
    if (m < 1 || n < 2) throw RegimeViolation("theory_t1: need m >= 1 and n >= 2");
    if (!(eta > 0.0) || !(mu_norm > 0.0) || !(sigma_0 > 0.0))
        throw std::invalid_argument("theory_t1: eta, |mu|, sigma_0 must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("theory_t1: delta must be in (0, 1)");
    const double arg = 4.0 / (std::sqrt(2.0 * std::log(8.0 * m / delta)) * sigma_0 * mu_norm *
                              std::log(static_cast<double>(n)));
    if (!(arg > 1.0))
        throw RegimeViolation("theory_t1: log argument <= 1, outside the small-init regime");
    return static_cast<long>(std::ceil(m / (eta * mu_norm * mu_norm) * std::log(arg)));
}

struct LambdaSchedule {
    enum class Cutoff { FixedEpoch, TheoryT1, Never };

    RegMode mode = RegMode::standard();
    Cutoff cutoff = Cutoff::Never;
    long fixed_epoch = 0;   // for FixedEpoch
    double delta = 0.05;    // for TheoryT1

    static LambdaSchedule standard() { return {}; }
    static LambdaSchedule with_cutoff(RegMode mode, long epoch) {
        return {mode, Cutoff::FixedEpoch, epoch, 0.05};
    }
    static LambdaSchedule never_cut(RegMode mode) { return {mode, Cutoff::Never, 0, 0.05}; }
    static LambdaSchedule theory_cut(RegMode mode, double delta) {
        return {mode, Cutoff::TheoryT1, 0, delta};
    }

    // lambda in effect for step `epoch` (1-based); positive through the
    // cutoff epoch inclusive, exactly zero afterwards.
    double lambda_at(long epoch, long resolved_cutoff) const {
        if (mode.kind == RegMode::Kind::Standard) return 0.0;
        if (cutoff == Cutoff::Never) return mode.lambda;
        return epoch <= resolved_cutoff ? mode.lambda : 0.0;
    }
};

struct TrainConfig {
    double eta = 0.02;
    long epochs = 1;
    LambdaSchedule schedule;
    bool use_closed_form_pegr = true;  // closed-form fast path for standard/PEGR steps
    long log_every = 10;
    bool track_decomposition = true;
    bool keep_coefficients = false;    // snapshot full (gamma, rho) at logged epochs
    long test_samples = 0;             // 0 disables test-error evaluation
    std::uint64_t test_seed = 3;
    double t_star = 1e7;               // horizon for the coefficient envelope diagnostic
    std::string abort_dump_path;       // checkpoint dumped here on non-finite abort

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (!(eta >= 0.0)) throw std::invalid_argument("TrainConfig: eta must be >= 0");
        if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
        if (test_samples < 0) throw std::invalid_argument("TrainConfig: test_samples must be >= 0");
        if (!(t_star > 1.0)) throw std::invalid_argument("TrainConfig: t_star must be > 1");
    }
};

struct EpochRecord {
    long epoch = 0;
    double lambda = 0.0;
    double train_loss = 0.0;
    double penalty = 0.0;
    double grad_norm_sq = 0.0;  // |grad L_S|_F^2, unregularized
    double signal = 0.0;
    double noise_max = 0.0;
    double gamma_max = 0.0;
    double rho_bar_max = 0.0;
    double rho_under_min = 0.0;
    double test_error = 0.0;
    double tie_rate = 0.0;
    double decomp_residual = 0.0;  // relative span residual from the direct solve
    long bound_violations = 0;     // coefficient envelope violations at this epoch
    bool grad_bound_violated = false;  // |grad L_S|^2 > 72 sigma_p^2 d L_S
};

// |grad L_S|_F^2 <= 72 sigma_p^2 d L_S, checked non-strictly (equality is
// not a violation). Informational: its preconditions are asymptotic.
inline bool gradient_norm_diagnostic(double grad_norm_sq, double train_loss, double sigma_p, int d) {
    return grad_norm_sq > 72.0 * sigma_p * sigma_p * static_cast<double>(d) * train_loss;
}
inline bool gradient_norm_diagnostic(const EpochRecord& rec, double sigma_p, int d) {
    return gradient_norm_diagnostic(rec.grad_norm_sq, rec.train_loss, sigma_p, d);
}

struct TrainTrace {
    std::vector<EpochRecord> records;
    ModelParams final_params;
    long resolved_cutoff = 0;       // cutoff epoch actually applied (0 = never)
    double beta = 0.0;              // 2 max init inner product, for the sharper rho bound
    long bound_violation_total = 0;
    long grad_bound_violation_total = 0;
    long monotonicity_violation_total = 0;  // lambda = 0 steps only
    long loss_increase_steps = 0;           // standard-mode L_S increases
    long rho_bar_up_steps = 0;              // lambda > 0 signed movement summary
    long rho_bar_down_steps = 0;
    std::vector<DecompositionState> coefficient_snapshots;  // parallel to records when kept
};

// Coefficient dump: one row per (epoch, j, r) with gamma, plus the n per-i
// rho columns when requested.
inline void write_coefficients_csv(const TrainTrace& trace, std::ostream& out, bool include_rho) {
    out << "epoch,j,r,gamma";
    if (include_rho && !trace.coefficient_snapshots.empty())
        for (int i = 0; i < trace.coefficient_snapshots.front().n; ++i) out << ",rho_" << i;
    out << '\n';
    for (std::size_t k = 0; k < trace.coefficient_snapshots.size(); ++k) {
        const DecompositionState& st = trace.coefficient_snapshots[k];
        const long epoch = trace.records[k].epoch;
        for (int f = 0; f < 2 * st.m; ++f) {
            const int j = FilterBank::sign_of_flat(f, st.m);
            out << epoch << ',' << j << ',' << (f % st.m) << ',' << fmt_g17(st.gamma[static_cast<std::size_t>(f)]);
            if (include_rho)
                for (int i = 0; i < st.n; ++i) out << ',' << fmt_g17(st.rho_val(f, i));
            out << '\n';
        }
    }
}

inline const std::string kTraceHeader =
    "epoch,lambda,train_loss,penalty,grad_norm_sq,signal,noise_max,gamma_max,rho_bar_max,"
    "rho_under_min,test_error,decomp_residual";

inline void write_trace_csv(const TrainTrace& trace, std::ostream& out) {
    out << kTraceHeader << '\n';
    for (const auto& r : trace.records) {
        out << r.epoch << ',' << fmt_g17(r.lambda) << ',' << fmt_g17(r.train_loss) << ','
            << fmt_g17(r.penalty) << ',' << fmt_g17(r.grad_norm_sq) << ',' << fmt_g17(r.signal) << ','
            << fmt_g17(r.noise_max) << ',' << fmt_g17(r.gamma_max) << ',' << fmt_g17(r.rho_bar_max)
            << ',' << fmt_g17(r.rho_under_min) << ',' << fmt_g17(r.test_error) << ','
            << fmt_g17(r.decomp_residual) << '\n';
    }
}

// Reads back the 12 published columns; header must match exactly.
inline std::vector<EpochRecord> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("trace: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw std::runtime_error("trace: unexpected header '" + line + "'");
    std::vector<EpochRecord> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (std::size_t p = 0; p <= line.size(); ++p)
            if (p == line.size() || line[p] == ',') {
                cols.push_back(line.substr(start, p - start));
                start = p + 1;
            }
        if (cols.size() != 12) throw std::runtime_error("trace: row with wrong column count");
        EpochRecord r;
        r.epoch = parse_int(cols[0]);
        r.lambda = parse_double(cols[1]);
        r.train_loss = parse_double(cols[2]);
        r.penalty = parse_double(cols[3]);
        r.grad_norm_sq = parse_double(cols[4]);
        r.signal = parse_double(cols[5]);
        r.noise_max = parse_double(cols[6]);
        r.gamma_max = parse_double(cols[7]);
        r.rho_bar_max = parse_double(cols[8]);
        r.rho_under_min = parse_double(cols[9]);
        r.test_error = parse_double(cols[10]);
        r.decomp_residual = parse_double(cols[11]);
        out.push_back(r);
    }
    return out;
}

inline double penalty_value(const ModelParams& params, const Dataset& ds, RegMode::Kind kind,
                            double lambda, const GradientBundle& grad_ls) {
    if (lambda == 0.0) return 0.0;
    if (kind == RegMode::Kind::Pegr) {
        double s = 0.0;
        for (int i = 0; i < ds.n(); ++i)
            s += per_example_grad(params, ds.points[static_cast<std::size_t>(i)]).frob_sq();
        return lambda / (2.0 * ds.n()) * s;
    }
    return lambda / 2.0 * grad_ls.frob_sq();
}

inline TrainTrace train(const ModelParams& params_0, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (params_0.d() != ds.d()) throw std::invalid_argument("train: dimension mismatch");
    const RegMode::Kind kind = cfg.schedule.mode.kind;

    long cutoff = 0;
    if (kind != RegMode::Kind::Standard) {
        switch (cfg.schedule.cutoff) {
            case LambdaSchedule::Cutoff::FixedEpoch: cutoff = cfg.schedule.fixed_epoch; break;
            case LambdaSchedule::Cutoff::TheoryT1:
                cutoff = theory_t1(params_0.m(), cfg.eta, std::sqrt(ds.spec.mu_norm_sq()),
                                   params_0.sigma_0, ds.n(), cfg.schedule.delta);
                break;
            case LambdaSchedule::Cutoff::Never: cutoff = 0; break;
        }
    }

    std::optional<DecompositionBasis> basis;
    std::optional<DatasetGeometry> geometry;
    DecompositionState state;
    if (cfg.track_decomposition) {
        basis = DecompositionBasis::build(ds);
        geometry = DatasetGeometry::build(ds);
        state = DecompositionState(params_0.m(), ds.n());
    }
    std::optional<Dataset> stream;
    if (cfg.test_samples > 0)
        stream = Dataset::test_stream(ds.spec, static_cast<int>(cfg.test_samples), cfg.test_seed);

    // Epochs at which a record is emitted: 0, multiples of log_every, the
    // lambda switch (cutoff and cutoff + 1) and the final epoch.
    std::set<long> log_epochs{0, cfg.epochs};
    for (long e = cfg.log_every; e <= cfg.epochs; e += cfg.log_every) log_epochs.insert(e);
    if (kind != RegMode::Kind::Standard && cfg.schedule.cutoff != LambdaSchedule::Cutoff::Never &&
        cutoff >= 1 && cutoff < cfg.epochs) {
        log_epochs.insert(cutoff);
        log_epochs.insert(cutoff + 1);
    }

    TrainTrace trace;
    trace.resolved_cutoff = cutoff;
    trace.beta = beta_from_init(params_0, ds);
    ModelParams params = params_0;
    PerExampleCache cache = build_cache(params, ds);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto emit = [&](long epoch, double lambda) {
        EpochRecord r;
        r.epoch = epoch;
        r.lambda = lambda;
        r.train_loss = cache.mean_loss();
        const GradientBundle grad_ls = full_grad(params, ds);
        r.grad_norm_sq = grad_ls.frob_sq();
        r.penalty = penalty_value(params, ds, kind, lambda, grad_ls);
        r.signal = signal_metric(params, ds.spec.mu);
        r.noise_max = noise_metric(params, ds);
        if (cfg.track_decomposition) {
            const DecompositionState direct = solve_direct(params, params_0, *basis, ds);
            r.gamma_max = state.gamma_max();
            r.rho_bar_max = state.rho_bar_max(ds);
            r.rho_under_min = state.rho_under_min(ds);
            r.decomp_residual = direct.residual_rel;
            const BoundReport bounds = check_coefficient_bounds(state, ds, cfg.t_star);
            r.bound_violations = bounds.total();
            trace.bound_violation_total += bounds.total();
        } else {
            r.gamma_max = r.rho_bar_max = r.rho_under_min = r.decomp_residual = nan;
        }
        if (stream) {
            const TestErrorResult te = test_error(params, *stream);
            r.test_error = te.error;
            r.tie_rate = te.tie_rate;
        } else {
            r.test_error = nan;
            r.tie_rate = nan;
        }
        r.grad_bound_violated = gradient_norm_diagnostic(r, ds.spec.sigma_p, ds.d());
        trace.grad_bound_violation_total += r.grad_bound_violated ? 1 : 0;
        if (!std::isfinite(r.train_loss) || !std::isfinite(r.grad_norm_sq))
            throw TrainAbortError(epoch, "non-finite loss or gradient");
        trace.records.push_back(r);
        if (cfg.track_decomposition && cfg.keep_coefficients)
            trace.coefficient_snapshots.push_back(state);
    };

    emit(0, cfg.schedule.lambda_at(1, cutoff));

    double prev_loss = cache.mean_loss();
    for (long t = 1; t <= cfg.epochs; ++t) {
        const double lambda = cfg.schedule.lambda_at(t, cutoff);

        if (cfg.track_decomposition) {
            const DecompositionState before = state;
            if (kind == RegMode::Kind::Fgr && lambda > 0.0) {
                const GradCoeffs coeffs =
                    objective_grad_coeffs(params, ds, cache, RegMode::fgr(lambda), &*geometry);
                apply_coefficient_step(state, coeffs, ds, cfg.eta);
            } else {
                step_recurrence(state, cache, ds, lambda, cfg.eta);
            }
            const MonotonicityReport mono = monotonicity_report(before, state, lambda, ds);
            if (mono.asserted)
                trace.monotonicity_violation_total += mono.violations();
            else {
                trace.rho_bar_up_steps += mono.rho_bar_up > 0 ? 1 : 0;
                trace.rho_bar_down_steps += mono.rho_bar_down > 0 ? 1 : 0;
            }
        }

        if (cfg.use_closed_form_pegr && kind != RegMode::Kind::Fgr) {
            params = pegr_step_closed_form(params, ds, cache, lambda, cfg.eta);
        } else {
            RegMode step_mode = kind == RegMode::Kind::Standard || lambda == 0.0
                                    ? RegMode::standard()
                                    : cfg.schedule.mode.with_lambda(lambda);
            const GradientBundle g = objective_grad(params, ds, step_mode);
            params.w.add_scaled(-cfg.eta, g);
        }

        for (double x : params.w.v)
            if (!std::isfinite(x)) {
                if (!cfg.abort_dump_path.empty()) {
                    std::ofstream dump(cfg.abort_dump_path);
                    save_checkpoint(params_0, dump);
                }
                throw TrainAbortError(t, "non-finite parameter after step");
            }

        cache = build_cache(params, ds);
        const double loss_now = cache.mean_loss();
        if (kind == RegMode::Kind::Standard && loss_now > prev_loss) ++trace.loss_increase_steps;
        prev_loss = loss_now;

        if (log_epochs.count(t)) emit(t, lambda);
    }

    trace.final_params = params;
    return trace;
}

}  // namespace gradreg
