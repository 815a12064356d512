#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mcad/detect.hpp"
#include "mcad/geometry.hpp"
#include "mcad/priors.hpp"
#include "mcad/signal.hpp"

namespace mcad {

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

enum class PriorKind { Iid, Pairs, Groups };
enum class SweepVar { Theta, L, M, Lambda, Eta, GroupSize };

inline const char* to_string(PriorKind k) {
    switch (k) {
        case PriorKind::Iid: return "iid";
        case PriorKind::Pairs: return "pairs";
        default: return "groups";
    }
}

inline const char* to_string(SweepVar v) {
    switch (v) {
        case SweepVar::Theta: return "theta";
        case SweepVar::L: return "L";
        case SweepVar::M: return "M";
        case SweepVar::Lambda: return "lambda";
        case SweepVar::Eta: return "eta";
        default: return "group_size";
    }
}

struct PriorSpec {
    PriorKind kind = PriorKind::Iid;
    double p_a = 0.05;
    double eta = 0.0;       // pairs
    int group_size = 2;     // groups
    double p_k = 0.05;      // groups
    double eps = 1e-6;      // groups
};

enum class DetectorName { MlNoncoop, MapNoncoop, MlCoop, MapCoop };

inline const char* to_string(DetectorName d) {
    switch (d) {
        case DetectorName::MlNoncoop: return "ml_noncoop";
        case DetectorName::MapNoncoop: return "map_noncoop";
        case DetectorName::MlCoop: return "ml_coop";
        default: return "map_coop";
    }
}

inline std::optional<DetectorName> detector_from_string(const std::string& s) {
    if (s == "ml_noncoop") return DetectorName::MlNoncoop;
    if (s == "map_noncoop") return DetectorName::MapNoncoop;
    if (s == "ml_coop") return DetectorName::MlCoop;
    if (s == "map_coop") return DetectorName::MapCoop;
    return std::nullopt;
}

inline bool is_coop(DetectorName d) {
    return d == DetectorName::MlCoop || d == DetectorName::MapCoop;
}
inline bool is_map(DetectorName d) {
    return d == DetectorName::MapNoncoop || d == DetectorName::MapCoop;
}

/// All parameters of one Monte Carlo experiment. Defaults are the paper-scale
/// base regime; the desk profile shrinks it for CI-speed runs.
struct ExperimentSpec {
    double R = 200.0;
    double lambda = 0.00025;
    double alpha = 3.0;
    long n0 = 500;
    long n_ring = -1;        // devices per neighbor cell; -1 means n0
    long L = 40;
    long M = 60;
    double delta2 = -1.0;    // -1 means the R^(-alpha)/10 rule
    double rmax_factor = 10.0;
    PriorSpec prior;
    std::vector<DetectorName> detectors{DetectorName::MlNoncoop, DetectorName::MapNoncoop,
                                        DetectorName::MlCoop, DetectorName::MapCoop};
    DetectorConfig det_cfg;
    SweepVar sweep_var = SweepVar::Theta;
    std::vector<double> grid;  // empty means the default theta grid for theta sweeps
    long realizations = 2000;
    std::uint64_t seed = 1;
    int workers = 0;           // 0 = hardware concurrency
    double quad_tol = 1e-8;

    long ring_count() const { return n_ring < 0 ? n0 : n_ring; }
    double noise_var() const { return delta2 > 0.0 ? delta2 : std::pow(R, -alpha) / 10.0; }
};

/// The default threshold grid {0.01, 0.02, ..., 1.00}.
inline std::vector<double> default_theta_grid() {
    std::vector<double> g(100);
    for (int k = 1; k <= 100; ++k) g[static_cast<std::size_t>(k - 1)] = k / 100.0;
    return g;
}

/// Spec with the sweep variable overridden to one grid value.
inline ExperimentSpec apply_sweep_value(const ExperimentSpec& base, double value) {
    ExperimentSpec s = base;
    switch (base.sweep_var) {
        case SweepVar::Theta: break;  // threshold is applied after detection
        case SweepVar::L: s.L = static_cast<long>(std::lround(value)); break;
        case SweepVar::M: s.M = static_cast<long>(std::lround(value)); break;
        case SweepVar::Lambda: s.lambda = value; break;
        case SweepVar::Eta: s.prior.eta = value; break;
        case SweepVar::GroupSize: s.prior.group_size = static_cast<int>(std::lround(value)); break;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Single-realization pipeline
// ---------------------------------------------------------------------------

inline MvbPrior make_cell_prior(const PriorSpec& ps, long n_cell) {
    const int n = static_cast<int>(n_cell);
    switch (ps.kind) {
        case PriorKind::Iid: return mvb_iid(n, ps.p_a);
        case PriorKind::Pairs: return mvb_pairs(n, ps.p_a, ps.eta);
        case PriorKind::Groups: return mvb_groups(n, ps.group_size, ps.p_k, ps.eps);
    }
    throw std::logic_error("make_cell_prior: unreachable");
}

struct RealizationOutput {
    std::vector<std::uint8_t> truth;       // activities of cell-0 devices
    std::vector<VectorXd> soft;            // per selected detector, over cell 0
    std::vector<DetectionResult> results;  // full detector outputs (same order)
};

/// Draws one world (7 modeled cells plus PPP interferers outside the
/// cluster), synthesizes the observations, and runs every selected detector
/// on that same draw. Detectors are scored on cell 0 only.
inline RealizationOutput run_realization(const ExperimentSpec& spec, std::uint64_t realization_seed) {
    const bool any_coop = std::any_of(spec.detectors.begin(), spec.detectors.end(), is_coop);
    Rng root(realization_seed);
    Rng rng_pos = root.child(1);
    Rng rng_act = root.child(2);
    Rng rng_ppp = root.child(3);
    Rng rng_pilot = root.child(4);
    Rng rng_chan = root.child(5);

    const HexLayout layout = build_hex_layout(spec.R);
    NetworkRealization net;
    net.layout = layout;
    net.alpha = spec.alpha;

    std::array<MvbPrior, 7> priors;
    for (int j = 0; j < 7; ++j) {
        const long n_j = j == 0 ? spec.n0 : spec.ring_count();
        net.devices[static_cast<std::size_t>(j)] = sample_cell_devices(rng_pos, n_j, j, layout);
        priors[static_cast<std::size_t>(j)] = make_cell_prior(spec.prior, n_j);
        net.active[static_cast<std::size_t>(j)] =
            sample_activities(priors[static_cast<std::size_t>(j)], rng_act);
    }
    net.interferers = sample_interferers(rng_ppp, spec.lambda, layout, {0, 1, 2, 3, 4, 5, 6},
                                         spec.rmax_factor * spec.R);

    const long n_bar = net.total_devices();
    const long n_all = n_bar + static_cast<long>(net.interferers.size());
    const PilotSet pilots = gen_pilots(rng_pilot, spec.L, n_all);

    std::vector<int> aps;
    for (int j = 0; j < (any_coop ? 7 : 1); ++j) aps.push_back(j);
    const double delta2 = spec.noise_var();
    const std::vector<Observation> obs =
        synthesize_rx(net, pilots, spec.M, delta2, rng_chan, aps);

    // Path-loss tables for the modeled devices.
    const int n_aps = static_cast<int>(aps.size());
    MatrixXd gamma_all(n_bar, n_aps);
    {
        long row = 0;
        for (int cell = 0; cell < 7; ++cell)
            for (const Vec2& p : net.devices[static_cast<std::size_t>(cell)]) {
                for (int j = 0; j < n_aps; ++j)
                    gamma_all(row, j) =
                        path_loss(dist(p, layout.centers[static_cast<std::size_t>(j)]), spec.alpha);
                ++row;
            }
    }

    RealizationOutput out;
    out.truth = net.active[0];

    for (const DetectorName det : spec.detectors) {
        DetectionProblem pb;
        pb.mode = is_coop(det) ? Mode::Coop : Mode::Noncoop;
        pb.estimator = is_map(det) ? Estimator::MAP : Estimator::ML;
        pb.M = spec.M;
        pb.delta2 = delta2;
        if (is_coop(det)) {
            pb.pilots = pilots.p.leftCols(n_bar);
            pb.gamma = gamma_all;
            for (int j = 0; j < 7; ++j) pb.sigma_hat.push_back(obs[static_cast<std::size_t>(j)].sigma_hat);
            if (is_map(det)) {
                const auto mom = interference_moments_coop_cached(spec.lambda, spec.R, spec.alpha,
                                                                  spec.quad_tol);
                pb.moments.assign(mom.begin(), mom.end());
                if (spec.lambda == 0.0)
                    for (auto& m : pb.moments) m.sigma2 = 0.0;  // pins x at 0
                int offset = 0;
                for (int j = 0; j < 7; ++j) {
                    pb.priors.push_back({priors[static_cast<std::size_t>(j)], offset});
                    offset += priors[static_cast<std::size_t>(j)].size();
                }
            }
        } else {
            pb.pilots = pilots.p.leftCols(spec.n0);
            pb.gamma = gamma_all.topLeftCorner(spec.n0, 1);
            pb.sigma_hat.push_back(obs[0].sigma_hat);
            if (is_map(det)) {
                pb.moments.push_back(interference_moments_noncoop_cached(spec.lambda, spec.R,
                                                                         spec.alpha, spec.quad_tol));
                if (spec.lambda == 0.0) pb.moments[0].sigma2 = 0.0;
                pb.priors.push_back({priors[0], 0});
            }
        }
        DetectionResult res = run_detector(pb, spec.det_cfg);
        out.soft.push_back(res.a.head(spec.n0));
        out.results.push_back(std::move(res));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Error statistics
// ---------------------------------------------------------------------------

struct ErrorDecomposition {
    double p_miss = 0.0;
    double p_fa = 0.0;
    double p_err = 0.0;
};

inline ErrorDecomposition error_decompose(const std::vector<std::uint8_t>& decisions,
                                          const std::vector<std::uint8_t>& truth) {
    if (decisions.size() != truth.size())
        throw std::invalid_argument("error_decompose: length mismatch");
    long fn = 0, fp = 0, pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            ++pos;
            if (!decisions[i]) ++fn;
        } else if (decisions[i]) {
            ++fp;
        }
    }
    const long neg = static_cast<long>(truth.size()) - pos;
    ErrorDecomposition e;
    e.p_miss = pos > 0 ? double(fn) / double(pos) : 0.0;
    e.p_fa = neg > 0 ? double(fp) / double(neg) : 0.0;
    e.p_err = truth.empty() ? 0.0 : double(fn + fp) / double(truth.size());
    return e;
}

/// Pooled soft scores/truths for one detector at one grid point.
struct PooledScores {
    std::vector<double> soft;
    std::vector<std::uint8_t> truth;

    long errors_at(double theta) const {
        long e = 0;
        for (std::size_t i = 0; i < soft.size(); ++i)
            e += (soft[i] >= theta ? 1 : 0) != truth[i];
        return e;
    }
};

struct ThresholdChoice {
    double theta_star = 0.0;
    double error = 0.0;
};

/// Error at every grid threshold; returns the minimizing theta (smallest on
/// exact ties) and its error.
inline ThresholdChoice sweep_threshold(const PooledScores& pooled, const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("sweep_threshold: empty grid");
    ThresholdChoice best;
    long best_err = -1;
    for (double theta : grid) {
        const long e = pooled.errors_at(theta);
        if (best_err < 0 || e < best_err) {
            best_err = e;
            best.theta_star = theta;
        }
    }
    best.error = pooled.soft.empty() ? 0.0 : double(best_err) / double(pooled.soft.size());
    return best;
}

struct PointResult {
    double sweep_value = 0.0;
    long realizations = 0;
    long aborted = 0;
    std::vector<std::string> abort_messages;
    // per detector (spec order):
    std::vector<PooledScores> pooled;
    // per detector, per realization soft/truth kept for paired tests
    std::vector<std::vector<VectorXd>> soft;
    std::vector<std::vector<std::uint8_t>> truths;  // per realization, cell-0 truth
};

/// Runs `spec.realizations` paired draws at one grid point. Realization k
/// uses the documented child seed of (spec.seed, k), so every detector and
/// every grid point sees the same worlds.
inline PointResult run_point(const ExperimentSpec& spec, double sweep_value) {
    const ExperimentSpec pt = apply_sweep_value(spec, sweep_value);
    const long n_real = pt.realizations;
    const std::size_t n_det = pt.detectors.size();

    std::vector<RealizationOutput> outs(static_cast<std::size_t>(n_real));
    std::vector<std::string> errors(static_cast<std::size_t>(n_real));
    std::atomic<long> next{0};
    long n_workers = pt.workers > 0 ? pt.workers
                                    : static_cast<long>(std::thread::hardware_concurrency());
    n_workers = std::max<long>(1, std::min<long>(n_workers, n_real));

    // Warm the moment cache outside the workers.
    for (const DetectorName det : pt.detectors) {
        if (!is_map(det) || pt.lambda == 0.0) continue;
        if (is_coop(det))
            interference_moments_coop_cached(pt.lambda, pt.R, pt.alpha, pt.quad_tol);
        else
            interference_moments_noncoop_cached(pt.lambda, pt.R, pt.alpha, pt.quad_tol);
    }

    auto worker = [&]() {
        for (;;) {
            const long k = next.fetch_add(1);
            if (k >= n_real) return;
            try {
                outs[static_cast<std::size_t>(k)] =
                    run_realization(pt, child_seed(pt.seed, static_cast<std::uint64_t>(k)));
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(k)] =
                    "realization " + std::to_string(k) + ": " + e.what();
            }
        }
    };
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    PointResult pr;
    pr.sweep_value = sweep_value;
    pr.realizations = n_real;
    pr.pooled.resize(n_det);
    pr.soft.resize(n_det);
    for (long k = 0; k < n_real; ++k) {
        if (!errors[static_cast<std::size_t>(k)].empty()) {
            ++pr.aborted;
            pr.abort_messages.push_back(errors[static_cast<std::size_t>(k)]);
            continue;
        }
        const RealizationOutput& ro = outs[static_cast<std::size_t>(k)];
        pr.truths.push_back(ro.truth);
        for (std::size_t d = 0; d < n_det; ++d) {
            pr.soft[d].push_back(ro.soft[d]);
            for (Eigen::Index i = 0; i < ro.soft[d].size(); ++i) {
                pr.pooled[d].soft.push_back(ro.soft[d](i));
                pr.pooled[d].truth.push_back(ro.truth[static_cast<std::size_t>(i)]);
            }
        }
    }
    return pr;
}

struct ErrorRow {
    std::string detector;
    std::string sweep_var;
    double sweep_value = 0.0;
    double theta_star = 0.0;
    double p_err = 0.0;
    double p_miss = 0.0;
    double p_fa = 0.0;
    double ci95 = 0.0;
    long realizations = 0;
    std::uint64_t seed = 0;
};

inline ErrorRow make_row(const ExperimentSpec& spec, const PointResult& pr, std::size_t det,
                         double sweep_value, double theta) {
    const PooledScores& pooled = pr.pooled[det];
    std::vector<std::uint8_t> dec(pooled.soft.size());
    for (std::size_t i = 0; i < pooled.soft.size(); ++i) dec[i] = pooled.soft[i] >= theta ? 1 : 0;
    const ErrorDecomposition e = error_decompose(dec, pooled.truth);
    ErrorRow row;
    row.detector = to_string(spec.detectors[det]);
    row.sweep_var = to_string(spec.sweep_var);
    row.sweep_value = sweep_value;
    row.theta_star = theta;
    row.p_err = e.p_err;
    row.p_miss = e.p_miss;
    row.p_fa = e.p_fa;
    const double n = static_cast<double>(pooled.soft.size());
    row.ci95 = n > 0 ? 1.96 * std::sqrt(std::max(e.p_err * (1.0 - e.p_err), 0.0) / n) : 0.0;
    row.realizations = pr.realizations - pr.aborted;
    row.seed = spec.seed;
    return row;
}

/// Full experiment: one row per (detector, grid point). Theta sweeps reuse a
/// single detection pass; other sweeps pick the pooled optimal threshold per
/// detector and grid point. Throws if more than 1% of realizations abort.
inline std::vector<ErrorRow> run_experiment(const ExperimentSpec& spec_in) {
    ExperimentSpec spec = spec_in;
    if (spec.grid.empty()) {
        if (spec.sweep_var != SweepVar::Theta)
            throw std::invalid_argument("run_experiment: sweep grid must not be empty");
        spec.grid = default_theta_grid();
    }
    std::vector<ErrorRow> rows;
    const std::vector<double> theta_grid = default_theta_grid();

    if (spec.sweep_var == SweepVar::Theta) {
        const PointResult pr = run_point(spec, 0.0);
        if (pr.aborted * 100 > pr.realizations)
            throw numerical_error("run_experiment: abort rate above 1%: " +
                                  (pr.abort_messages.empty() ? std::string("?") : pr.abort_messages[0]));
        for (double theta : spec.grid)
            for (std::size_t d = 0; d < spec.detectors.size(); ++d)
                rows.push_back(make_row(spec, pr, d, theta, theta));
    } else {
        for (double v : spec.grid) {
            const PointResult pr = run_point(spec, v);
            if (pr.aborted * 100 > pr.realizations)
                throw numerical_error("run_experiment: abort rate above 1%: " +
                                      (pr.abort_messages.empty() ? std::string("?") : pr.abort_messages[0]));
            for (std::size_t d = 0; d < spec.detectors.size(); ++d) {
                const ThresholdChoice tc = sweep_threshold(pr.pooled[d], theta_grid);
                rows.push_back(make_row(spec, pr, d, v, tc.theta_star));
            }
        }
    }
    return rows;
}

inline std::string format_csv(const std::vector<ErrorRow>& rows) {
    std::string out = "detector,sweep_var,sweep_value,theta_star,p_err,p_miss,p_fa,ci95,realizations,seed\n";
    char buf[256];
    for (const ErrorRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%ld,%llu\n",
                      r.detector.c_str(), r.sweep_var.c_str(), r.sweep_value, r.theta_star, r.p_err,
                      r.p_miss, r.p_fa, r.ci95, r.realizations,
                      static_cast<unsigned long long>(r.seed));
        out += buf;
    }
    return out;
}

inline void write_csv(const std::vector<ErrorRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    os << format_csv(rows);
}

}  // namespace mcad
