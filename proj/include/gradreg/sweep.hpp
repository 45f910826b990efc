#pragma once
// Sweep execution over (sigma_p, mode, replicate) cells. Cells are fully
// independent (derived seeds, own output files) and may run on several
// worker threads; outputs are written in sorted order after a barrier so
// results are byte-identical for any worker count. Modes at the same
// (sigma_p, replicate) coordinate share data, init and test stream.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gradreg/config.hpp"
#include "gradreg/svg.hpp"
#include "gradreg/trainer.hpp"

namespace gradreg {

struct SweepRow {
    double sigma_p = 0.0;
    std::string mode;
    int replicate = 0;
    bool failed = false;
    std::string failure;
    double final_train_loss = 0.0;
    double final_test_error = 0.0;
    double final_signal = 0.0;
    double final_noise = 0.0;
    double gamma_max = 0.0;
    double rho_bar_max = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by (sigma_p, mode, replicate)
    long failures = 0;
};

inline std::string compact_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

inline std::string trace_file_name(double sigma_p, const std::string& mode, int replicate) {
    return "trace_sp" + compact_num(sigma_p) + "_" + mode + "_r" + std::to_string(replicate) + ".csv";
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// Charts are produced from the written CSV rows, never from internal state,
// so regenerating from the file yields identical SVG text.
inline void write_trace_plots(const std::vector<EpochRecord>& records,
                              const std::filesystem::path& dir, const std::string& stem) {
    std::vector<double> epochs, loss, signal, noise, acc;
    for (const auto& r : records) {
        epochs.push_back(static_cast<double>(r.epoch));
        loss.push_back(r.train_loss);
        signal.push_back(r.signal);
        noise.push_back(r.noise_max);
        acc.push_back(1.0 - r.test_error);
    }
    const struct {
        const char* file;
        const char* title;
        const char* label;
        const std::vector<double>* y;
    } charts[] = {
        {"loss", "Training loss", "loss", &loss},
        {"signal", "Signal learning", "max |<w, mu>|", &signal},
        {"noise", "Noise memorization", "max <w, xi>", &noise},
        {"test_accuracy", "Test accuracy", "accuracy", &acc},
    };
    for (const auto& c : charts) {
        std::ofstream out(dir / (stem + "_" + c.file + ".svg"));
        write_svg_chart(out, c.title, c.label, {{c.label, "#1f77b4", epochs, *c.y}});
    }
}

// Runs one resolved cell config end to end; returns the trace.
inline TrainTrace run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset ds = Dataset::generate(cfg.data_spec(), cfg.n, cfg.data_seed);
    const ModelParams init = init_gaussian(cfg.m, cfg.d, cfg.sigma_0, cfg.init_seed);
    return train(init, ds, cfg.train_config());
}

inline SweepResult run_sweep(const SweepSpec& spec, bool preset_61, const std::filesystem::path& out_dir,
                             int workers, bool plot) {
    std::filesystem::create_directories(out_dir);
    const auto cells = spec.cells(preset_61);
    std::vector<SweepRow> rows(cells.size());
    std::atomic<std::size_t> next{0};

    auto work = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) return;
            const auto& cell = cells[idx];
            SweepRow row;
            row.sigma_p = cell.sigma_p;
            row.mode = cell.mode;
            row.replicate = cell.replicate;
            try {
                const TrainTrace trace = run_experiment(cell.config);
                const EpochRecord& last = trace.records.back();
                row.final_train_loss = last.train_loss;
                row.final_test_error = last.test_error;
                row.final_signal = last.signal;
                row.final_noise = last.noise_max;
                row.gamma_max = last.gamma_max;
                row.rho_bar_max = last.rho_bar_max;
                const std::string name = trace_file_name(cell.sigma_p, cell.mode, cell.replicate);
                {
                    std::ofstream out(out_dir / name);
                    write_trace_csv(trace, out);
                }
                if (plot) {
                    std::ifstream back(out_dir / name);
                    write_trace_plots(read_trace_csv(back), out_dir, name.substr(0, name.size() - 4));
                }
            } catch (const std::exception& e) {
                row.failed = true;
                row.failure = e.what();
            }
            rows[idx] = std::move(row);
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.sigma_p != b.sigma_p) return a.sigma_p < b.sigma_p;
        if (a.mode != b.mode) return a.mode < b.mode;
        return a.replicate < b.replicate;
    });

    SweepResult res;
    res.rows = std::move(rows);
    for (const auto& r : res.rows) res.failures += r.failed ? 1 : 0;

    {
        std::ofstream out(out_dir / "summary.csv");
        out << "sigma_p,mode,seed,final_train_loss,final_test_error,final_signal,final_noise,"
               "gamma_max,rho_bar_max\n";
        for (const auto& r : res.rows) {
            if (r.failed) {
                out << fmt_g17(r.sigma_p) << ',' << r.mode << ',' << r.replicate << ",failed:" << '"'
                    << r.failure << '"' << ",,,,,\n";
                continue;
            }
            out << fmt_g17(r.sigma_p) << ',' << r.mode << ',' << r.replicate << ','
                << fmt_g17(r.final_train_loss) << ',' << fmt_g17(r.final_test_error) << ','
                << fmt_g17(r.final_signal) << ',' << fmt_g17(r.final_noise) << ','
                << fmt_g17(r.gamma_max) << ',' << fmt_g17(r.rho_bar_max) << '\n';
        }
    }
    {
        std::ofstream out(out_dir / "medians.csv");
        out << "sigma_p,mode,median_train_loss,median_test_error,median_signal,median_noise,"
               "median_gamma_max,median_rho_bar_max\n";
        std::vector<std::pair<double, std::string>> keys;
        for (const auto& r : res.rows)
            if (!r.failed && (keys.empty() || keys.back() != std::make_pair(r.sigma_p, r.mode)))
                keys.emplace_back(r.sigma_p, r.mode);
        for (const auto& key : keys) {
            std::vector<double> tl, te, sg, nz, gm, rb;
            for (const auto& r : res.rows)
                if (!r.failed && r.sigma_p == key.first && r.mode == key.second) {
                    tl.push_back(r.final_train_loss);
                    te.push_back(r.final_test_error);
                    sg.push_back(r.final_signal);
                    nz.push_back(r.final_noise);
                    gm.push_back(r.gamma_max);
                    rb.push_back(r.rho_bar_max);
                }
            out << fmt_g17(key.first) << ',' << key.second << ',' << fmt_g17(median(tl)) << ','
                << fmt_g17(median(te)) << ',' << fmt_g17(median(sg)) << ',' << fmt_g17(median(nz))
                << ',' << fmt_g17(median(gm)) << ',' << fmt_g17(median(rb)) << '\n';
        }
    }
    return res;
}

// Median summary access for in-process checks.
inline std::optional<SweepRow> median_row(const SweepResult& res, double sigma_p, const std::string& mode) {
    std::vector<double> tl, te, sg, nz;
    for (const auto& r : res.rows)
        if (!r.failed && r.sigma_p == sigma_p && r.mode == mode) {
            tl.push_back(r.final_train_loss);
            te.push_back(r.final_test_error);
            sg.push_back(r.final_signal);
            nz.push_back(r.final_noise);
        }
    if (tl.empty()) return std::nullopt;
    SweepRow row;
    row.sigma_p = sigma_p;
    row.mode = mode;
    row.final_train_loss = median(tl);
    row.final_test_error = median(te);
    row.final_signal = median(sg);
    row.final_noise = median(nz);
    return row;
}

}  // namespace gradreg
