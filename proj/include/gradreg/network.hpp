#pragma once
// Two-layer CNN with squared-ReLU activation and frozen +-1/m second layer:
//
//   F_j(W_j, x) = (1/m) sum_r [ act(<w_{j,r}, x1>) + act(<w_{j,r}, x2>) ]
//   f(W, x)     = F_{+1} - F_{-1},   act(z) = max(0, z)^2.
//
// The two patches enter symmetrically, so f is invariant under swapping
// them. Derivatives at z = 0 use the one-sided convention act'(0) = 0,
// act''(0) = 0 (the kink is a measure-zero event for the data model).

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "gradreg/data.hpp"
#include "gradreg/io.hpp"
#include "gradreg/linalg.hpp"
#include "gradreg/rng.hpp"

namespace gradreg {

inline double act(double z) { return z > 0.0 ? z * z : 0.0; }
inline double act_d(double z) { return z > 0.0 ? 2.0 * z : 0.0; }
inline double act_dd(double z) { return z > 0.0 ? 2.0 : 0.0; }
inline double relu(double z) { return z > 0.0 ? z : 0.0; }

// 2m filters of length d stored flat: the j=+1 block then the j=-1 block.
// Shared by model weights and every parameter-shaped gradient.
struct FilterBank {
    int m = 0;
    int d = 0;
    std::vector<double> v;  // size 2*m*d

    FilterBank() = default;
    FilterBank(int m_, int d_) : m(m_), d(d_), v(static_cast<std::size_t>(2) * m_ * d_, 0.0) {
        if (m_ < 1 || d_ < 1) throw std::invalid_argument("FilterBank: m and d must be >= 1");
    }

    int num_filters() const { return 2 * m; }

    // Flat filter index for (j, r); j = +1 maps to [0, m), j = -1 to [m, 2m).
    int flat(int j, int r) const { return (j > 0 ? 0 : m) + r; }
    static int sign_of_flat(int f, int m) { return f < m ? 1 : -1; }

    std::span<double> filter(int f) {
        return std::span<double>(v).subspan(static_cast<std::size_t>(f) * static_cast<std::size_t>(d),
                                            static_cast<std::size_t>(d));
    }
    std::span<const double> filter(int f) const {
        return std::span<const double>(v).subspan(static_cast<std::size_t>(f) * static_cast<std::size_t>(d),
                                                  static_cast<std::size_t>(d));
    }
    std::span<double> filter(int j, int r) { return filter(flat(j, r)); }
    std::span<const double> filter(int j, int r) const { return filter(flat(j, r)); }

    void set_zero() { std::fill(v.begin(), v.end(), 0.0); }
    double frob_sq() const { return norm_sq(v); }
    double dot_with(const FilterBank& o) const { return dot(v, o.v); }
    void add_scaled(double alpha, const FilterBank& o) { axpy(alpha, o.v, v); }
    void scale_by(double alpha) { scale(alpha, v); }

    bool same_shape(const FilterBank& o) const { return m == o.m && d == o.d; }
};

using GradientBundle = FilterBank;

struct ModelParams {
    FilterBank w;
    double sigma_0 = 0.0;
    std::uint64_t seed = 0;
    static constexpr int q = 2;  // activation exponent, fixed

    int m() const { return w.m; }
    int d() const { return w.d; }

    static ModelParams zeros(int m, int d) {
        ModelParams p;
        p.w = FilterBank(m, d);
        return p;
    }
};

inline ModelParams init_gaussian(int m, int d, double sigma_0, std::uint64_t seed) {
    if (m < 1 || d < 1) throw std::invalid_argument("init_gaussian: m and d must be >= 1");
    if (!(sigma_0 > 0.0)) throw std::invalid_argument("init_gaussian: sigma_0 must be > 0");
    ModelParams p;
    p.w = FilterBank(m, d);
    p.sigma_0 = sigma_0;
    p.seed = seed;
    GaussianStream rng(substream(seed, stream_tag::init));
    for (double& x : p.w.v) x = sigma_0 * rng.next();
    return p;
}

inline double forward_side(const ModelParams& params, const DataPoint& point, int j) {
    if (static_cast<int>(point.patch1.size()) != params.d())
        throw std::invalid_argument("forward_side: dimension mismatch");
    double s = 0.0;
    for (int r = 0; r < params.m(); ++r) {
        auto w = params.w.filter(j, r);
        s += act(dot(w, point.patch1)) + act(dot(w, point.patch2));
    }
    return s / static_cast<double>(params.m());
}

inline double forward(const ModelParams& params, const DataPoint& point) {
    return forward_side(params, point, +1) - forward_side(params, point, -1);
}

// Checkpoint format: header "m d sigma_0 seed q", then 2m rows of d
// 17-significant-digit decimals; round-trips bit-exactly.
inline void save_checkpoint(const ModelParams& params, std::ostream& out) {
    out << params.m() << ' ' << params.d() << ' ' << fmt_g17(params.sigma_0) << ' ' << params.seed
        << ' ' << ModelParams::q << '\n';
    for (int f = 0; f < params.w.num_filters(); ++f) {
        auto w = params.w.filter(f);
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (k) out << ' ';
            out << fmt_g17(w[k]);
        }
        out << '\n';
    }
}

inline ModelParams load_checkpoint(std::istream& in) {
    const auto header = split_ws(read_line(in, "checkpoint header"));
    if (header.size() != 5) throw std::runtime_error("checkpoint header must be 'm d sigma_0 seed q'");
    const int m = static_cast<int>(parse_int(header[0]));
    const int d = static_cast<int>(parse_int(header[1]));
    ModelParams p;
    p.w = FilterBank(m, d);
    p.sigma_0 = parse_double(header[2]);
    p.seed = parse_u64(header[3]);
    if (parse_int(header[4]) != ModelParams::q)
        throw std::runtime_error("checkpoint: unsupported activation exponent");
    for (int f = 0; f < p.w.num_filters(); ++f) {
        const auto toks = split_ws(read_line(in, "checkpoint row"));
        if (static_cast<int>(toks.size()) != d) throw std::runtime_error("checkpoint row has wrong length");
        auto w = p.w.filter(f);
        for (int k = 0; k < d; ++k) w[static_cast<std::size_t>(k)] = parse_double(toks[static_cast<std::size_t>(k)]);
    }
    return p;
}

}  // namespace gradreg
