#pragma once
// Synthetic two-patch signal-noise data.
//
// Each data point is a pair of d-dimensional patches with a +/-1 label: one
// patch carries the label-aligned signal y*mu, the other carries a Gaussian
// noise vector drawn from N(0, sigma_p^2 (I - mu mu^T / |mu|^2)). The noise
// covariance is realized by explicit projection, so <xi, mu> is zero up to
// floating-point roundoff for every draw. Noise vectors are stored once in
// the dataset's xi matrix and referenced by index; downstream analysis
// (coefficient decomposition, memorization metrics) needs the exact xi rows.
//
// Generation is reproducible independent of order: point i draws from the
// stream substream(seed, tag, i), so the same (spec, n, seed) always yields
// bit-identical datasets.

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gradreg/io.hpp"
#include "gradreg/linalg.hpp"
#include "gradreg/rng.hpp"

namespace gradreg {

struct SignalNoiseSpec {
    int d = 0;
    std::vector<double> mu;
    double sigma_p = 0.0;

    SignalNoiseSpec(int d_, std::vector<double> mu_, double sigma_p_)
        : d(d_), mu(std::move(mu_)), sigma_p(sigma_p_) {
        if (d < 2) throw std::invalid_argument("SignalNoiseSpec: d must be >= 2");
        if (static_cast<int>(mu.size()) != d)
            throw std::invalid_argument("SignalNoiseSpec: mu length must equal d");
        if (!(sigma_p > 0.0)) throw std::invalid_argument("SignalNoiseSpec: sigma_p must be > 0");
        mu_norm_sq_ = norm_sq(mu);
        if (!(mu_norm_sq_ > 0.0)) throw std::invalid_argument("SignalNoiseSpec: mu must be nonzero");
    }

    // mu = mu_norm * e_0; the default signal direction used by the CLI.
    static SignalNoiseSpec axis(int d, double mu_norm, double sigma_p) {
        std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
        if (d > 0) mu[0] = mu_norm;
        return SignalNoiseSpec(d, std::move(mu), sigma_p);
    }

    double mu_norm_sq() const { return mu_norm_sq_; }

  private:
    double mu_norm_sq_ = 0.0;
};

enum class SignalSlot { First, Second };

struct DataPoint {
    std::vector<double> patch1;
    std::vector<double> patch2;
    int label = 1;  // in {+1, -1}
    SignalSlot signal_slot = SignalSlot::First;
    int noise_index = 0;

    std::span<const double> patch(int k) const {
        return k == 1 ? std::span<const double>(patch1) : std::span<const double>(patch2);
    }
};

// xi = sigma_p * (z - <z,mu>/|mu|^2 * mu) with z ~ N(0, I); exactly the
// projected covariance, orthogonal to mu by construction.
inline std::vector<double> sample_noise(const SignalNoiseSpec& spec, GaussianStream& rng) {
    std::vector<double> z(static_cast<std::size_t>(spec.d));
    for (double& v : z) v = rng.next();
    const double c = dot(z, spec.mu) / spec.mu_norm_sq();
    for (int k = 0; k < spec.d; ++k) z[static_cast<std::size_t>(k)] = spec.sigma_p * (z[static_cast<std::size_t>(k)] - c * spec.mu[static_cast<std::size_t>(k)]);
    return z;
}

class Dataset {
  public:
    SignalNoiseSpec spec;
    std::vector<DataPoint> points;
    std::vector<double> xi;  // n x d row-major
    std::uint64_t seed = 0;

    int n() const { return static_cast<int>(points.size()); }
    int d() const { return spec.d; }

    std::span<const double> xi_row(int i) const {
        return std::span<const double>(xi).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(spec.d),
                                                   static_cast<std::size_t>(spec.d));
    }
    double xi_norm_sq(int i) const { return xi_norm_sq_[static_cast<std::size_t>(i)]; }

    static Dataset generate(const SignalNoiseSpec& spec, int n, std::uint64_t seed) {
        return sample(spec, n, seed, stream_tag::point);
    }

    // Fresh i.i.d. data from the same law, on a stream namespace disjoint
    // from training data so equal seeds cannot alias.
    static Dataset test_stream(const SignalNoiseSpec& spec, int count, std::uint64_t seed) {
        return sample(spec, count, seed, stream_tag::test_point);
    }

    // Builds a dataset from explicit parts (import path and constructed test
    // fixtures). Enforces the orthogonality invariant on every xi row.
    static Dataset assemble(SignalNoiseSpec spec, const std::vector<int>& labels,
                            const std::vector<SignalSlot>& slots, std::vector<double> xi_rows,
                            std::uint64_t seed) {
        const int n = static_cast<int>(labels.size());
        if (n < 1) throw std::invalid_argument("Dataset: need at least one point");
        if (slots.size() != labels.size() || xi_rows.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.d))
            throw std::invalid_argument("Dataset: inconsistent part sizes");
        Dataset ds(std::move(spec));
        ds.seed = seed;
        ds.xi = std::move(xi_rows);
        ds.points.reserve(static_cast<std::size_t>(n));
        const double mu_norm = std::sqrt(ds.spec.mu_norm_sq());
        for (int i = 0; i < n; ++i) {
            if (labels[static_cast<std::size_t>(i)] != 1 && labels[static_cast<std::size_t>(i)] != -1)
                throw std::invalid_argument("Dataset: labels must be +1 or -1");
            auto row = std::span<const double>(ds.xi).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(ds.spec.d),
                                                              static_cast<std::size_t>(ds.spec.d));
            const double xn = std::sqrt(norm_sq(row));
            if (std::abs(dot(row, ds.spec.mu)) > 1e-10 * xn * mu_norm)
                throw std::invalid_argument("Dataset: xi row " + std::to_string(i) + " is not orthogonal to mu");
            ds.points.push_back(make_point(ds.spec, labels[static_cast<std::size_t>(i)], slots[static_cast<std::size_t>(i)], row, i));
        }
        ds.finalize();
        return ds;
    }

    // Text format: header "d n sigma_p seed", the mu row, then per point a
    // "label slot" line followed by its xi row. 17-significant-digit
    // decimals; reload reproduces the dataset bit-exactly.
    void save(std::ostream& out) const {
        out << spec.d << ' ' << n() << ' ' << fmt_g17(spec.sigma_p) << ' ' << seed << '\n';
        write_row(out, spec.mu);
        for (int i = 0; i < n(); ++i) {
            const DataPoint& p = points[static_cast<std::size_t>(i)];
            out << p.label << ' ' << (p.signal_slot == SignalSlot::First ? 1 : 2) << '\n';
            write_row(out, xi_row(i));
        }
    }

    static Dataset load(std::istream& in) {
        const auto header = split_ws(read_line(in, "dataset header"));
        if (header.size() != 4) throw std::runtime_error("dataset header must be 'd n sigma_p seed'");
        const int d = static_cast<int>(parse_int(header[0]));
        const int n = static_cast<int>(parse_int(header[1]));
        const double sigma_p = parse_double(header[2]);
        const std::uint64_t seed = parse_u64(header[3]);
        SignalNoiseSpec spec(d, parse_row(read_line(in, "mu row"), d), sigma_p);
        std::vector<int> labels;
        std::vector<SignalSlot> slots;
        std::vector<double> rows;
        rows.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
        for (int i = 0; i < n; ++i) {
            const auto meta = split_ws(read_line(in, "point header"));
            if (meta.size() != 2) throw std::runtime_error("point header must be 'label slot'");
            labels.push_back(static_cast<int>(parse_int(meta[0])));
            const long long slot = parse_int(meta[1]);
            if (slot != 1 && slot != 2) throw std::runtime_error("slot must be 1 or 2");
            slots.push_back(slot == 1 ? SignalSlot::First : SignalSlot::Second);
            const auto row = parse_row(read_line(in, "xi row"), d);
            rows.insert(rows.end(), row.begin(), row.end());
        }
        return assemble(std::move(spec), labels, slots, std::move(rows), seed);
    }

  private:
    explicit Dataset(SignalNoiseSpec s) : spec(std::move(s)) {}

    std::vector<double> xi_norm_sq_;

    static Dataset sample(const SignalNoiseSpec& spec, int n, std::uint64_t seed, std::uint64_t tag) {
        if (n < 1) throw std::invalid_argument("Dataset: need at least one point");
        Dataset ds(spec);
        ds.seed = seed;
        ds.xi.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.d));
        ds.points.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            GaussianStream rng(substream(seed, tag, static_cast<std::uint64_t>(i)));
            const int label = (rng.gen.next() & 1) ? 1 : -1;
            const SignalSlot slot = (rng.gen.next() & 1) ? SignalSlot::First : SignalSlot::Second;
            const std::vector<double> noise = sample_noise(spec, rng);
            std::copy(noise.begin(), noise.end(), ds.xi.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * static_cast<std::size_t>(spec.d)));
            ds.points.push_back(make_point(ds.spec, label, slot, noise, i));
        }
        ds.finalize();
        return ds;
    }

    static DataPoint make_point(const SignalNoiseSpec& spec, int label, SignalSlot slot,
                                std::span<const double> noise, int noise_index) {
        DataPoint p;
        p.label = label;
        p.signal_slot = slot;
        p.noise_index = noise_index;
        std::vector<double> signal(spec.mu);
        if (label < 0)
            for (double& v : signal) v = -v;
        if (slot == SignalSlot::First) {
            p.patch1 = std::move(signal);
            p.patch2.assign(noise.begin(), noise.end());
        } else {
            p.patch1.assign(noise.begin(), noise.end());
            p.patch2 = std::move(signal);
        }
        return p;
    }

    void finalize() {
        xi_norm_sq_.resize(static_cast<std::size_t>(n()));
        for (int i = 0; i < n(); ++i) xi_norm_sq_[static_cast<std::size_t>(i)] = norm_sq(xi_row(i));
    }

    static void write_row(std::ostream& out, std::span<const double> row) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out << ' ';
            out << fmt_g17(row[k]);
        }
        out << '\n';
    }

    static std::vector<double> parse_row(const std::string& line, int d) {
        const auto toks = split_ws(line);
        if (static_cast<int>(toks.size()) != d) throw std::runtime_error("row has wrong length");
        std::vector<double> row;
        row.reserve(toks.size());
        for (const auto& t : toks) row.push_back(parse_double(t));
        return row;
    }
};

}  // namespace gradreg
