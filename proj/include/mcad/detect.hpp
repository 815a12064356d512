#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcad/priors.hpp"
#include "mcad/rootfind.hpp"
#include "mcad/types.hpp"

namespace mcad {

enum class Estimator { ML, MAP };
enum class Mode { Noncoop, Coop };

inline const char* to_string(Estimator e) { return e == Estimator::ML ? "ml" : "map"; }
inline const char* to_string(Mode m) { return m == Mode::Noncoop ? "noncoop" : "coop"; }

/// Prior attached to a contiguous block of device indices (one cell).
struct CellPrior {
    MvbPrior prior;
    int offset = 0;  // global index of the cell's first device
};

/// One estimation problem: pilots and path losses for the in-scope devices,
/// sample covariances of the in-scope APs, and (for MAP) the activity and
/// interference priors. Non-cooperative problems have exactly one AP.
struct DetectionProblem {
    Mode mode = Mode::Noncoop;
    Estimator estimator = Estimator::ML;
    MatrixXcd pilots;                    // L x N
    MatrixXd gamma;                      // N x u, gamma(i,j) > 0
    std::vector<MatrixXcd> sigma_hat;    // u Hermitian PSD matrices, L x L
    long M = 1;                          // antennas behind each sample covariance
    double delta2 = 0.0;
    std::vector<CellPrior> priors;               // MAP: activity prior per cell
    std::vector<InterferenceMoments> moments;    // MAP: one per AP
    // sigma2 = +inf is the infinite-variance sentinel (prior term vanishes;
    // the x-update degenerates to ML exactly). sigma2 = 0 pins x at mu.

    int aps() const { return static_cast<int>(sigma_hat.size()); }
    Eigen::Index L() const { return pilots.rows(); }
    Eigen::Index N() const { return pilots.cols(); }

    void validate() const {
        const int u = aps();
        if (u < 1) throw std::invalid_argument("DetectionProblem: need at least one AP");
        if (mode == Mode::Noncoop && u != 1)
            throw std::invalid_argument("DetectionProblem: non-cooperative mode uses one AP");
        if (gamma.rows() != N() || gamma.cols() != u)
            throw std::invalid_argument("DetectionProblem: gamma must be N x u");
        for (const auto& s : sigma_hat)
            if (s.rows() != L() || s.cols() != L())
                throw std::invalid_argument("DetectionProblem: covariance dimension mismatch");
        if (M < 1) throw std::invalid_argument("DetectionProblem: M must be >= 1");
        if (!(delta2 > 0.0)) throw std::invalid_argument("DetectionProblem: delta2 must be > 0");
        if (estimator == Estimator::MAP) {
            if (moments.size() != static_cast<std::size_t>(u))
                throw std::invalid_argument("DetectionProblem: MAP needs moments per AP");
        }
    }
};

struct DetectorConfig {
    long max_iters = 50;
    double tol = 1e-6;
    long refresh_every = 10;
    bool freeze_x = false;   // reproduces the single-cell baseline (x pinned at 0)
    double init_a = 0.0;
    double init_x = 0.0;
};

struct DetectorState {
    VectorXd a;                        // in [0,1]^N
    MatrixXd x;                        // L x u, >= 0
    std::vector<MatrixXcd> sigma;      // maintained by rank-1 additions
    std::vector<MatrixXcd> sigma_inv;  // rank-1 updates + per-sweep Newton polish
    double objective = 0.0;
    long iterations = 0;
};

struct DetectionResult {
    VectorXd a;
    MatrixXd x;
    std::vector<double> objective_trajectory;  // value after each full sweep
    double objective = 0.0;
    long iterations = 0;
    bool converged = false;
    double wall_seconds = 0.0;
    double max_ascent = 0.0;   // largest relative per-step objective increase
    double final_drift = 0.0;  // ||Sigma_inv * Sigma - I||_F / sqrt(L)
    long pinned_devices = 0;   // gamma == 0 coordinates, skipped and held at 0
};

/// Rank-1 inverse maintenance: inv(S + d*scale*v v^H) from inv(S).
/// Throws when the update would lose positive definiteness.
inline void rank1_update_inverse(MatrixXcd& sigma_inv, const VectorXcd& v, double scale, double d) {
    if (d == 0.0) return;
    const VectorXcd u = sigma_inv * v;
    const double den = 1.0 + d * scale * (v.dot(u)).real();
    if (!(den > 0.0)) throw numerical_error("rank1_update_inverse: positive definiteness violated");
    sigma_inv.noalias() -= (d * scale / den) * (u * u.adjoint());
}

/// Thresholded hard decisions: a_i >= theta.
inline std::vector<std::uint8_t> threshold(const VectorXd& a_soft, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("threshold: theta must be in [0,1]");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(a_soft.size()));
    for (Eigen::Index i = 0; i < a_soft.size(); ++i) out[static_cast<std::size_t>(i)] = a_soft(i) >= theta ? 1 : 0;
    return out;
}

namespace detail {

/// Neumaier compensated add: s += inc with the rounding error banked in c.
inline void comp_add(double& s, double& c, double inc) {
    const double t = s + inc;
    if (std::fabs(s) >= std::fabs(inc))
        c += (s - t) + inc;
    else
        c += (inc - t) + s;
    s = t;
}

inline MatrixXcd assemble_sigma(const DetectionProblem& pb, const VectorXd& a, const MatrixXd& x,
                                int j) {
    const Eigen::Index L = pb.L();
    VectorXd w = a.array() * pb.gamma.col(j).array();
    MatrixXcd s = pb.pilots * w.asDiagonal() * pb.pilots.adjoint();
    s += x.col(j).cast<cplx>().asDiagonal();
    s += MatrixXcd::Identity(L, L) * pb.delta2;
    return ((s + s.adjoint()) * 0.5).eval();
}

}  // namespace detail

/// Objective by direct factorization (verification path, not the cached
/// inverses): sum_j [logdet Sigma_j + tr(Sigma_j^-1 SigmaHat_j)] plus the
/// MAP penalty terms when present.
inline double objective(const DetectionProblem& pb, const VectorXd& a, const MatrixXd& x) {
    double f = 0.0;
    for (int j = 0; j < pb.aps(); ++j) {
        const MatrixXcd s = detail::assemble_sigma(pb, a, x, j);
        Eigen::LLT<MatrixXcd> llt(s);
        if (llt.info() != Eigen::Success)
            throw numerical_error("objective: covariance not positive definite");
        double logdet = 0.0;
        for (Eigen::Index k = 0; k < s.rows(); ++k)
            logdet += 2.0 * std::log(llt.matrixLLT()(k, k).real());
        f += logdet + llt.solve(pb.sigma_hat[static_cast<std::size_t>(j)]).trace().real();
    }
    if (pb.estimator == Estimator::MAP) {
        const double invM = 1.0 / static_cast<double>(pb.M);
        for (int j = 0; j < pb.aps(); ++j) {
            const auto& mom = pb.moments[static_cast<std::size_t>(j)];
            if (std::isinf(mom.sigma2) || mom.sigma2 == 0.0) continue;
            const double k = invM / (2.0 * mom.sigma2);
            f += k * (x.col(j).array() - mom.mu).square().sum();
        }
        for (const CellPrior& cp : pb.priors) {
            const VectorXd a_cell = a.segment(cp.offset, cp.prior.size());
            f -= invM * cp.prior.log_score(a_cell);
        }
    }
    return f;
}

/// Coordinate descent for Problems 1-4. Sweeps all a coordinates in
/// ascending device order, then all x coordinates (AP-major), maintaining
/// the per-AP inverse covariances by rank-1 updates. Each 1-D subproblem
/// is solved exactly (closed form, cubic, or polynomial root set).
class CoordinateDescentDetector {
  public:
    CoordinateDescentDetector(const DetectionProblem& pb, DetectorConfig cfg = {})
        : pb_(pb), cfg_(cfg) {
        pb.validate();
        const Eigen::Index L = pb.L();
        const int u = pb.aps();
        st_.a = VectorXd::Constant(pb.N(), std::clamp(cfg_.init_a, 0.0, 1.0));
        st_.x = MatrixXd::Constant(L, u, std::max(cfg_.init_x, 0.0));
        st_.sigma_inv.resize(static_cast<std::size_t>(u));
        st_.sigma.resize(static_cast<std::size_t>(u));
        sigma_comp_.assign(static_cast<std::size_t>(u), MatrixXcd::Zero(L, L));
        if (cfg_.init_a == 0.0 && cfg_.init_x == 0.0) {
            for (auto& m : st_.sigma_inv) m = MatrixXcd::Identity(L, L) / pb.delta2;
            for (auto& m : st_.sigma) m = MatrixXcd::Identity(L, L) * pb.delta2;
            st_.objective = initial_objective_();
        } else {
            refresh_inverses_();
            st_.objective = objective(pb_, st_.a, st_.x);
        }
        build_prior_index_();
        v_.resize(L);
        w_.resize(L);
    }

    const DetectorState& state() const { return st_; }
    DetectorState& state() { return st_; }

    /// Warm start / test hook: adopts (a, x), rebuilds the inverses by
    /// direct factorization, and recomputes the objective.
    void set_state(const VectorXd& a, const MatrixXd& x) {
        if (a.size() != pb_.N() || x.rows() != pb_.L() || x.cols() != pb_.aps())
            throw std::invalid_argument("set_state: dimension mismatch");
        if (a.minCoeff() < 0.0 || a.maxCoeff() > 1.0 || x.minCoeff() < 0.0)
            throw std::invalid_argument("set_state: infeasible state");
        st_.a = a;
        st_.x = x;
        refresh_inverses_();
        st_.objective = objective(pb_, a, x);
    }

    /// One exact coordinate step in a_i; returns the applied increment.
    double update_a(int i) {
        const int u = pb_.aps();
        const double ai = st_.a(i);
        const double lo = -ai, hi = 1.0 - ai;
        bool all_zero_gamma = true;
        for (int j = 0; j < u; ++j) all_zero_gamma = all_zero_gamma && pb_.gamma(i, j) == 0.0;
        if (all_zero_gamma) {
            if (ai != 0.0) st_.a(i) = 0.0;
            ++pinned_;
            return 0.0;
        }

        const double ci = (pb_.estimator == Estimator::MAP) ? linear_coeff_(i) : 0.0;

        bg_.resize(static_cast<std::size_t>(u));
        for (int j = 0; j < u; ++j) {
            const double g = pb_.gamma(i, j);
            v_.noalias() = st_.sigma_inv[static_cast<std::size_t>(j)] * pb_.pilots.col(i);
            const double pi = pb_.pilots.col(i).dot(v_).real();
            w_.noalias() = pb_.sigma_hat[static_cast<std::size_t>(j)] * v_;
            const double beta = v_.dot(w_).real();
            bg_[static_cast<std::size_t>(j)] = {g * pi, g * beta, pi};
            if (u > 1) vcache_[static_cast<std::size_t>(j)] = v_;
        }

        double d = 0.0;
        if (pb_.mode == Mode::Noncoop) {
            d = noncoop_a_increment_(bg_[0], pb_.gamma(i, 0), ci, lo, hi);
        } else {
            d = coop_a_increment_(ci, lo, hi);
        }

        if (d != 0.0) {
            double delta = -ci * d;
            for (int j = 0; j < u; ++j) {
                const auto& t = bg_[static_cast<std::size_t>(j)];
                const double den = 1.0 + d * t.B;
                if (!(den > 0.0))
                    throw numerical_error("update_a: positive definiteness violated");
                delta += std::log1p(d * t.B) - d * t.G / den;
                const VectorXcd& vj = (u > 1) ? vcache_[static_cast<std::size_t>(j)] : v_;
                st_.sigma_inv[static_cast<std::size_t>(j)].noalias() -=
                    (d * pb_.gamma(i, j) / den) * (vj * vj.adjoint());
                add_rank1_to_sigma_(j, d * pb_.gamma(i, j), pb_.pilots.col(i));
            }
            record_step_(delta);
            st_.a(i) = std::clamp(ai + d, 0.0, 1.0);
        }
        return d;
    }

    /// One exact coordinate step in x_{j,l}; returns the applied increment.
    double update_x(int j, int l) {
        MatrixXcd& inv = st_.sigma_inv[static_cast<std::size_t>(j)];
        const double s = inv(l, l).real();
        w_.noalias() = pb_.sigma_hat[static_cast<std::size_t>(j)] * inv.col(l);
        const double q = inv.col(l).dot(w_).real();
        const double xl = st_.x(l, j);

        double d;
        double prior_delta = 0.0;
        const bool map_x = pb_.estimator == Estimator::MAP &&
                           !std::isinf(pb_.moments[static_cast<std::size_t>(j)].sigma2);
        if (!map_x) {
            d = std::max((q - s) / (s * s), -xl);
        } else {
            const auto& mom = pb_.moments[static_cast<std::size_t>(j)];
            if (mom.sigma2 == 0.0) {
                d = mom.mu - xl;  // degenerate prior: x pinned at its mean
            } else {
                const double k = 1.0 / (static_cast<double>(pb_.M) * mom.sigma2);
                const double c = xl - mom.mu;
                const std::vector<double> roots = cubic_real_roots(
                    s - q + k * c, s * s + k * (1.0 + 2.0 * c * s), k * (2.0 * s + c * s * s),
                    k * s * s);
                double best_d = -xl;
                double best_f = x_curve_(best_d, s, q, k, c);
                for (double r : roots) {
                    if (r < -xl) continue;
                    const double f = x_curve_(r, s, q, k, c);
                    if (f < best_f) {
                        best_f = f;
                        best_d = r;
                    }
                }
                d = best_d;
                prior_delta = 0.5 * k * ((c + d) * (c + d) - c * c);
            }
        }

        if (d != 0.0) {
            const double den = 1.0 + d * s;
            if (!(den > 0.0)) throw numerical_error("update_x: positive definiteness violated");
            const double delta = std::log1p(d * s) - d * q / den + prior_delta;
            v_ = inv.col(l);
            inv.noalias() -= (d / den) * (v_ * v_.adjoint());
            {
                cplx& sd = st_.sigma[static_cast<std::size_t>(j)](l, l);
                cplx& cd = sigma_comp_[static_cast<std::size_t>(j)](l, l);
                double re = sd.real(), rec = cd.real();
                detail::comp_add(re, rec, d);
                sd = cplx(re, sd.imag());
                cd = cplx(rec, cd.imag());
            }
            record_step_(delta);
            st_.x(l, j) = std::max(xl + d, 0.0);
        }
        return d;
    }

    /// Rebuilds the cached inverses from scratch and returns the largest
    /// drift ||Sigma_inv * Sigma - I||_F / sqrt(L) found before refreshing.
    /// Also reports (via floor_out) the residual of the freshly factorized
    /// inverse itself: a 1-meter device next to an AP makes cond(Sigma)
    /// large enough that eps * cond is the best any double-precision
    /// inverse can do, and drift below that floor is meaningless.
    double refresh_inverses_and_measure_drift(double* floor_out = nullptr) {
        const Eigen::Index L = pb_.L();
        double worst = 0.0, worst_floor = 0.0;
        for (int j = 0; j < pb_.aps(); ++j) {
            const MatrixXcd sigma = detail::assemble_sigma(pb_, st_.a, st_.x, j);
            const double drift =
                (st_.sigma_inv[static_cast<std::size_t>(j)] * sigma - MatrixXcd::Identity(L, L))
                    .norm() /
                std::sqrt(static_cast<double>(L));
            worst = std::max(worst, drift);
            Eigen::LLT<MatrixXcd> llt(sigma);
            if (llt.info() != Eigen::Success)
                throw numerical_error("refresh: covariance not positive definite");
            st_.sigma_inv[static_cast<std::size_t>(j)] = llt.solve(MatrixXcd::Identity(L, L));
            st_.sigma[static_cast<std::size_t>(j)] = sigma;
            sigma_comp_[static_cast<std::size_t>(j)].setZero();
            const double fresh =
                (st_.sigma_inv[static_cast<std::size_t>(j)] * sigma - MatrixXcd::Identity(L, L))
                    .norm() /
                std::sqrt(static_cast<double>(L));
            // cross-rounding attainability: two roundings of Sigma differ by
            // ~eps*||Sigma||, which the inverse amplifies by ||Sigma^-1||
            const double cross = 2.3e-16 * sigma.norm() *
                                 st_.sigma_inv[static_cast<std::size_t>(j)].norm() /
                                 std::sqrt(static_cast<double>(L));
            worst_floor = std::max({worst_floor, fresh, cross});
        }
        if (floor_out) *floor_out = worst_floor;
        return worst;
    }

    /// Newton refinement of the cached inverses against the rank-1
    /// maintained covariances: X <- X(2I - Sigma X). Each step squares the
    /// residual; iterating keeps the drift between periodic refreshes far
    /// below the 1e-6 budget even in the ill-conditioned low-noise regime,
    /// where removing a dominant rank-1 component amplifies roundoff.
    void polish_inverses_() {
        const Eigen::Index L = pb_.L();
        const MatrixXcd eye = MatrixXcd::Identity(L, L);
        for (int j = 0; j < pb_.aps(); ++j) {
            MatrixXcd& x = st_.sigma_inv[static_cast<std::size_t>(j)];
            work3_ = st_.sigma[static_cast<std::size_t>(j)] + sigma_comp_[static_cast<std::size_t>(j)];
            for (int it = 0; it < 3; ++it) {
                work_.noalias() = work3_ * x;
                const double resid = (work_ - eye).norm() / std::sqrt(double(L));
                if (resid < 1e-10) break;
                work_ = eye * 2.0 - work_;
                work2_.noalias() = x * work_;
                x = (work2_ + work2_.adjoint()) * 0.5;
            }
        }
    }

    DetectionResult run() {
        const auto t0 = std::chrono::steady_clock::now();
        DetectionResult res;
        bool converged = false;
        long iter = 0;
        double drift = 0.0;
        while (iter < cfg_.max_iters) {
            ++iter;
            double max_change = 0.0;
            for (Eigen::Index i = 0; i < pb_.N(); ++i)
                max_change = std::max(max_change, std::fabs(update_a(static_cast<int>(i))));
            if (!cfg_.freeze_x) {
                for (int j = 0; j < pb_.aps(); ++j)
                    for (Eigen::Index l = 0; l < pb_.L(); ++l)
                        max_change = std::max(max_change, std::fabs(update_x(j, static_cast<int>(l))));
            }
            res.objective_trajectory.push_back(st_.objective);
            polish_inverses_();
            if (cfg_.refresh_every > 0 && iter % cfg_.refresh_every == 0) {
                double floor = 0.0;
                drift = refresh_inverses_and_measure_drift(&floor);
                // genuine maintenance divergence, not the conditioning floor
                if (drift > 1e-6 && drift > 30.0 * floor)
                    throw numerical_error("run_detector: inverse drift " + std::to_string(drift) + " floor " + std::to_string(floor) + " iter " + std::to_string(iter));
            }
            if (max_change < cfg_.tol) {
                converged = true;
                break;
            }
        }
        res.final_drift = refresh_inverses_and_measure_drift();
        st_.iterations = iter;
        res.a = st_.a;
        res.x = st_.x;
        res.objective = st_.objective;
        res.iterations = iter;
        res.converged = converged;
        res.max_ascent = max_ascent_;
        res.pinned_devices = pinned_;
        res.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

  private:
    struct BG {
        double B = 0.0;   // gamma * p^H Sigma^-1 p
        double G = 0.0;   // gamma * p^H Sigma^-1 SigmaHat Sigma^-1 p
        double pi = 0.0;  // p^H Sigma^-1 p
    };

    double initial_objective_() const {
        double f = static_cast<double>(pb_.aps() * pb_.L()) * std::log(pb_.delta2);
        for (const auto& s : pb_.sigma_hat) f += s.trace().real() / pb_.delta2;
        if (pb_.estimator == Estimator::MAP) {
            const double invM = 1.0 / static_cast<double>(pb_.M);
            for (const auto& mom : pb_.moments) {
                if (std::isinf(mom.sigma2) || mom.sigma2 == 0.0) continue;
                f += invM / (2.0 * mom.sigma2) * mom.mu * mom.mu * static_cast<double>(pb_.L());
            }
            // log_score(0) = 0: the activity prior contributes nothing at a = 0.
        }
        return f;
    }

    void refresh_inverses_() {
        const Eigen::Index L = pb_.L();
        st_.sigma.resize(static_cast<std::size_t>(pb_.aps()));
        st_.sigma_inv.resize(static_cast<std::size_t>(pb_.aps()));
        for (int j = 0; j < pb_.aps(); ++j) {
            const MatrixXcd sigma = detail::assemble_sigma(pb_, st_.a, st_.x, j);
            Eigen::LLT<MatrixXcd> llt(sigma);
            if (llt.info() != Eigen::Success)
                throw numerical_error("init: covariance not positive definite");
            st_.sigma_inv[static_cast<std::size_t>(j)] = llt.solve(MatrixXcd::Identity(L, L));
            st_.sigma[static_cast<std::size_t>(j)] = sigma;
        }
        sigma_comp_.assign(static_cast<std::size_t>(pb_.aps()),
                           MatrixXcd::Zero(L, L));
    }

    /// Compensated rank-1 accumulation sigma += w * v v^H, entrywise.
    void add_rank1_to_sigma_(int j, double w, const Eigen::Ref<const VectorXcd>& v) {
        MatrixXcd& s = st_.sigma[static_cast<std::size_t>(j)];
        MatrixXcd& c = sigma_comp_[static_cast<std::size_t>(j)];
        const Eigen::Index L = pb_.L();
        for (Eigen::Index col = 0; col < L; ++col) {
            const cplx vc = std::conj(v(col)) * w;
            for (Eigen::Index row = 0; row < L; ++row) {
                const cplx inc = v(row) * vc;
                double re = s(row, col).real(), im = s(row, col).imag();
                double cre = c(row, col).real(), cim = c(row, col).imag();
                detail::comp_add(re, cre, inc.real());
                detail::comp_add(im, cim, inc.imag());
                s(row, col) = cplx(re, im);
                c(row, col) = cplx(cre, cim);
            }
        }
    }

    void build_prior_index_() {
        vcache_.assign(static_cast<std::size_t>(pb_.aps()), VectorXcd(pb_.L()));
        if (pb_.estimator != Estimator::MAP) return;
        dev_terms_.assign(static_cast<std::size_t>(pb_.N()), {});
        for (const CellPrior& cp : pb_.priors) {
            for (const auto& t : cp.prior.terms()) {
                FlatTerm ft;
                ft.c = t.c;
                for (int idx : t.indices) ft.members.push_back(cp.offset + idx);
                flat_terms_.push_back(std::move(ft));
            }
        }
        for (std::size_t t = 0; t < flat_terms_.size(); ++t)
            for (int i : flat_terms_[t].members)
                dev_terms_[static_cast<std::size_t>(i)].push_back(static_cast<int>(t));
    }

    double linear_coeff_(int i) const {
        double s = 0.0;
        for (int ti : dev_terms_[static_cast<std::size_t>(i)]) {
            const FlatTerm& t = flat_terms_[static_cast<std::size_t>(ti)];
            double prod = t.c;
            for (int m : t.members)
                if (m != i) prod *= st_.a(m);
            s += prod;
        }
        return s / static_cast<double>(pb_.M);
    }

    /// Theorem-style closed forms for the single-AP a step. ci == 0 takes
    /// the ML expression (also the exact analytic limit of the MAP rule).
    double noncoop_a_increment_(const BG& t, double g, double ci, double lo, double hi) const {
        const double pi = t.pi;
        const double beta = t.G / g;
        if (ci == 0.0) return std::clamp((beta - pi) / (g * pi * pi), lo, hi);
        const double denom = g * pi * pi;
        const double disc = 1.0 - 4.0 * ci * beta / denom;
        // stable root: (1 - sqrt(disc)) / (2 ci) without cancellation
        const double s_i = 2.0 * beta / (denom * (1.0 + std::sqrt(std::max(disc, 0.0)))) - 1.0 / (g * pi);
        if (ci < 0.0) return std::clamp(s_i, lo, hi);
        const double peak = denom / (4.0 * beta);
        if (ci >= peak) return hi;
        if (disc < 0.0) throw numerical_error("update_a: branch misclassification");
        // local minimum (clipped), then either box edge can win
        double best_d = std::clamp(s_i, lo, hi);
        double best_f = a_curve_1ap_(best_d, t, ci);
        for (double cand : {lo, hi}) {
            const double f = a_curve_1ap_(cand, t, ci);
            if (f < best_f || (f == best_f && cand < best_d)) {
                best_f = f;
                best_d = cand;
            }
        }
        return best_d;
    }

    double a_curve_1ap_(double d, const BG& t, double ci) const {
        return std::log1p(d * t.B) - d * t.G / (1.0 + d * t.B) - ci * d;
    }

    double coop_curve_(double d, double ci) const {
        double f = -ci * d;
        for (const BG& t : bg_) f += std::log1p(d * t.B) - d * t.G / (1.0 + d * t.B);
        return f;
    }

    /// Root-based a step for u cooperating APs: derivative cleared to a
    /// degree 2u-1 (ML) or 2u (MAP) polynomial via prefix/suffix products
    /// of the (1 + d B_j)^2 factors.
    double coop_a_increment_(double ci, double lo, double hi) {
        // Cheap screen: from a_i = 0, h(d) >= sum B/(1+B) - sum G - ci on
        // [0,1]; a positive bound means f is increasing and d* = 0.
        if (lo == 0.0) {
            double bound = -ci;
            for (const BG& t : bg_) bound += t.B / (1.0 + t.B) - t.G;
            if (bound > 0.0) return 0.0;
        }

        const int u = static_cast<int>(bg_.size());
        // prefix[j] = prod_{k<j} (1+dB_k)^2, suffix[j] = prod_{k>=j} ...
        static thread_local std::vector<std::vector<double>> pre, suf;
        pre.assign(static_cast<std::size_t>(u) + 1, {});
        suf.assign(static_cast<std::size_t>(u) + 1, {});
        pre[0] = {1.0};
        for (int j = 0; j < u; ++j)
            pre[static_cast<std::size_t>(j) + 1] =
                polymul_(pre[static_cast<std::size_t>(j)], quad_(bg_[static_cast<std::size_t>(j)].B));
        suf[static_cast<std::size_t>(u)] = {1.0};
        for (int j = u - 1; j >= 0; --j)
            suf[static_cast<std::size_t>(j)] =
                polymul_(suf[static_cast<std::size_t>(j) + 1], quad_(bg_[static_cast<std::size_t>(j)].B));

        RealPolynomial poly;
        poly.c.assign(static_cast<std::size_t>(2 * u + 1), 0.0);
        for (int j = 0; j < u; ++j) {
            const BG& t = bg_[static_cast<std::size_t>(j)];
            const std::vector<double> rest =
                polymul_(pre[static_cast<std::size_t>(j)], suf[static_cast<std::size_t>(j) + 1]);
            // (B_j - G_j) + B_j^2 d, times prod_{k != j}(1+dB_k)^2
            for (std::size_t k = 0; k < rest.size(); ++k) {
                poly.c[k] += (t.B - t.G) * rest[k];
                poly.c[k + 1] += t.B * t.B * rest[k];
            }
        }
        if (ci != 0.0) {
            const std::vector<double>& full = pre[static_cast<std::size_t>(u)];
            for (std::size_t k = 0; k < full.size(); ++k) poly.c[k] -= ci * full[k];
        }
        poly.trim();

        std::vector<double> cands = poly_real_roots(poly, lo, hi);
        cands.push_back(lo);
        cands.push_back(hi);
        std::sort(cands.begin(), cands.end());
        double best_d = cands.front();
        double best_f = std::numeric_limits<double>::infinity();
        for (double cand : cands) {
            // Two Newton polish steps on the rational derivative itself;
            // the cleared polynomial can be poorly scaled.
            if (cand > lo && cand < hi) cand = polish_on_h_(cand, ci, lo, hi);
            const double f = coop_curve_(cand, ci);
            if (f < best_f) {
                best_f = f;
                best_d = cand;
            }
        }
        return best_d;
    }

    double h_value_(double d, double ci) const {
        double h = -ci;
        for (const BG& t : bg_) {
            const double den = 1.0 + d * t.B;
            h += t.B / den - t.G / (den * den);
        }
        return h;
    }

    double h_deriv_(double d) const {
        double h = 0.0;
        for (const BG& t : bg_) {
            const double den = 1.0 + d * t.B;
            h += -t.B * t.B / (den * den) + 2.0 * t.B * t.G / (den * den * den);
        }
        return h;
    }

    double polish_on_h_(double d, double ci, double lo, double hi) const {
        for (int it = 0; it < 2; ++it) {
            const double hp = h_deriv_(d);
            if (hp == 0.0) break;
            const double nd = d - h_value_(d, ci) / hp;
            if (!std::isfinite(nd) || nd < lo || nd > hi) break;
            d = nd;
        }
        return d;
    }

    static std::vector<double> quad_(double b) { return {1.0, 2.0 * b, b * b}; }

    static std::vector<double> polymul_(const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(a.size() + b.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
        return out;
    }

    static double x_curve_(double d, double s, double q, double k, double c) {
        return std::log1p(d * s) - d * q / (1.0 + d * s) + 0.5 * k * (c + d) * (c + d);
    }

    void record_step_(double delta) {
        const double scale = std::max(1.0, std::fabs(st_.objective));
        max_ascent_ = std::max(max_ascent_, delta / scale);
        st_.objective += delta;
    }

    struct FlatTerm {
        double c = 0.0;
        std::vector<int> members;
    };

    const DetectionProblem& pb_;
    DetectorConfig cfg_;
    DetectorState st_;
    std::vector<BG> bg_;
    std::vector<VectorXcd> vcache_;
    VectorXcd v_, w_;
    std::vector<FlatTerm> flat_terms_;
    std::vector<std::vector<int>> dev_terms_;
    MatrixXcd work_, work2_, work3_;
    std::vector<MatrixXcd> sigma_comp_;
    double max_ascent_ = 0.0;
    long pinned_ = 0;
};

/// Convenience wrapper matching the spec's run signature.
inline DetectionResult run_detector(const DetectionProblem& pb, DetectorConfig cfg = {}) {
    CoordinateDescentDetector det(pb, cfg);
    return det.run();
}

}  // namespace mcad
