#pragma once

#include <Eigen/Dense>
#include <complex>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcad/geometry.hpp"
#include "mcad/rng.hpp"
#include "mcad/types.hpp"

namespace mcad {

/// L x N pilot matrix, one CN(0, I_L) column per device.
struct PilotSet {
    MatrixXcd p;  // L rows (signal dimensions) x N columns (devices)

    Eigen::Index L() const { return p.rows(); }
    Eigen::Index N() const { return p.cols(); }
};

inline PilotSet gen_pilots(Rng& rng, Eigen::Index L, Eigen::Index N) {
    if (L < 1 || N < 1) throw std::invalid_argument("gen_pilots: need L >= 1 and N >= 1");
    PilotSet ps;
    ps.p.resize(L, N);
    for (Eigen::Index c = 0; c < N; ++c)
        for (Eigen::Index r = 0; r < L; ++r) ps.p(r, c) = rng.cgaussian();
    return ps;
}

/// Per-AP observation. The sample covariance is the sufficient statistic;
/// the raw L x M signal is kept only when requested for debugging.
struct Observation {
    MatrixXcd sigma_hat;  // L x L Hermitian PSD
    long M = 0;
    double delta2 = 0.0;
    MatrixXcd y;  // empty unless keep_raw was set
};

/// Y*Y^H / M with exact Hermitian symmetry enforced.
inline MatrixXcd sample_covariance(const MatrixXcd& y, long M) {
    if (M <= 0) throw std::invalid_argument("sample_covariance: M must be >= 1");
    MatrixXcd s = (y * y.adjoint()) / static_cast<double>(M);
    s = ((s + s.adjoint()) * 0.5).eval();
    return s;
}

namespace detail {

inline void add_device_rx(MatrixXcd& y, const VectorXcd& pilot, double gain, long M, Rng& rng) {
    VectorXcd h(M);
    for (long m = 0; m < M; ++m) h(m) = rng.cgaussian();
    y.noalias() += (std::sqrt(gain) * pilot) * h.transpose();
}

}  // namespace detail

/// Synthesizes Y_j = sum_i a_i gamma_{i,j}^{1/2} p_i h_{i,j}^T + Z_j for the
/// requested APs under block Rayleigh fading and AWGN, and returns the
/// per-AP sample covariances. Pilot columns are [cell-0 devices, cells 1..6
/// devices, interferers] in realization order; interferers are always active.
inline std::vector<Observation> synthesize_rx(const NetworkRealization& net,
                                              const PilotSet& pilots, long M,
                                              double delta2, Rng& rng,
                                              const std::vector<int>& aps,
                                              bool keep_raw = false) {
    if (M < 1) throw std::invalid_argument("synthesize_rx: M must be >= 1");
    if (!(delta2 > 0.0)) throw std::invalid_argument("synthesize_rx: delta2 must be > 0");
    const Eigen::Index L = pilots.L();
    const long n_dev = net.total_devices();
    const long n_all = n_dev + static_cast<long>(net.interferers.size());
    if (pilots.N() != n_all) {
        throw std::invalid_argument("synthesize_rx: pilot columns must cover all devices and interferers");
    }

    std::vector<Observation> out;
    out.reserve(aps.size());
    for (int j : aps) {
        if (j < 0 || j >= 7) throw std::invalid_argument("synthesize_rx: AP index out of range");
        const Vec2 ap = net.layout.centers[static_cast<std::size_t>(j)];
        MatrixXcd y = MatrixXcd::Zero(L, M);
        long col = 0;
        for (int cell = 0; cell < 7; ++cell) {
            const auto& pos = net.devices[static_cast<std::size_t>(cell)];
            const auto& act = net.active[static_cast<std::size_t>(cell)];
            for (std::size_t i = 0; i < pos.size(); ++i, ++col) {
                if (!act[i]) continue;
                const double g = path_loss(dist(pos[i], ap), net.alpha);
                detail::add_device_rx(y, pilots.p.col(col), g, M, rng);
            }
        }
        for (const Vec2& p : net.interferers) {
            const double g = path_loss(dist(p, ap), net.alpha);
            detail::add_device_rx(y, pilots.p.col(col), g, M, rng);
            ++col;
        }
        const double noise_sd = std::sqrt(delta2 * 0.5);
        for (long m = 0; m < M; ++m)
            for (Eigen::Index r = 0; r < L; ++r)
                y(r, m) += cplx(noise_sd * rng.gaussian(), noise_sd * rng.gaussian());

        Observation obs;
        obs.sigma_hat = sample_covariance(y, M);
        obs.M = M;
        obs.delta2 = delta2;
        if (keep_raw) obs.y = std::move(y);
        out.push_back(std::move(obs));
    }
    return out;
}

/// Diagonal of the exact interference covariance
/// X~ = sum_{i not in exclusion, a_i=1} gamma_{i,j} p_i p_i^H at AP
/// `target_ap`, plus the mean |off-diagonal| / mean diagonal ratio
/// (the diagonal-dominance diagnostic). `exclude_cells` lists the cells
/// whose devices do NOT count as interference.
struct InterferenceDiag {
    VectorXd diag;
    double offdiag_ratio = 0.0;
};

inline InterferenceDiag true_interference_diag(const NetworkRealization& net,
                                               const PilotSet& pilots, int target_ap,
                                               const std::vector<int>& exclude_cells) {
    const Eigen::Index L = pilots.L();
    const Vec2 ap = net.layout.centers[static_cast<std::size_t>(target_ap)];
    std::array<bool, 7> excluded{};
    for (int c : exclude_cells) excluded[static_cast<std::size_t>(c)] = true;

    MatrixXcd x = MatrixXcd::Zero(L, L);
    long col = 0;
    for (int cell = 0; cell < 7; ++cell) {
        const auto& pos = net.devices[static_cast<std::size_t>(cell)];
        const auto& act = net.active[static_cast<std::size_t>(cell)];
        for (std::size_t i = 0; i < pos.size(); ++i, ++col) {
            if (excluded[static_cast<std::size_t>(cell)] || !act[i]) continue;
            const double g = path_loss(dist(pos[i], ap), net.alpha);
            x.noalias() += g * pilots.p.col(col) * pilots.p.col(col).adjoint();
        }
    }
    for (const Vec2& p : net.interferers) {
        const double g = path_loss(dist(p, ap), net.alpha);
        x.noalias() += g * pilots.p.col(col) * pilots.p.col(col).adjoint();
        ++col;
    }

    InterferenceDiag out;
    out.diag = x.diagonal().real();
    double off_sum = 0.0;
    long off_n = 0;
    for (Eigen::Index r = 0; r < L; ++r)
        for (Eigen::Index c = 0; c < L; ++c)
            if (r != c) {
                off_sum += std::abs(x(r, c));
                ++off_n;
            }
    const double diag_mean = out.diag.size() > 0 ? out.diag.mean() : 0.0;
    out.offdiag_ratio = (diag_mean > 0.0 && off_n > 0) ? (off_sum / off_n) / diag_mean : 0.0;
    return out;
}

/// Raw dump of a complex matrix: row-major, little-endian float64,
/// interleaved re/im. Exactly rows*cols*2 doubles, no header.
inline void dump_covariance(const MatrixXcd& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dump_covariance: cannot open " + path);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double re = m(r, c).real();
            const double im = m(r, c).imag();
            os.write(reinterpret_cast<const char*>(&re), sizeof(double));
            os.write(reinterpret_cast<const char*>(&im), sizeof(double));
        }
}

inline MatrixXcd load_covariance(const std::string& path, Eigen::Index rows, Eigen::Index cols) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_covariance: cannot open " + path);
    MatrixXcd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double re = 0.0, im = 0.0;
            is.read(reinterpret_cast<char*>(&re), sizeof(double));
            is.read(reinterpret_cast<char*>(&im), sizeof(double));
            m(r, c) = cplx(re, im);
        }
    if (!is) throw std::runtime_error("dump file truncated: " + path);
    return m;
}

}  // namespace mcad
