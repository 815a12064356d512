#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcad/rng.hpp"

namespace mcad {

inline constexpr double kSqrt3 = 1.7320508075688772935274463415059;
inline constexpr double kPi = 3.1415926535897932384626433832795;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Seven-AP hexagonal cluster: AP 0 at the origin, neighbors 1..6 across
/// the six edges at distance sqrt(3)*R. Hexagons are flat-side-facing
/// along the x axis, so the apothem (sqrt(3)/2)R points along +x; this is
/// the orientation the interference-moment integrals assume.
struct HexLayout {
    double R = 0.0;
    std::array<Vec2, 7> centers{};
};

inline HexLayout build_hex_layout(double R) {
    if (!(R > 0.0)) throw std::invalid_argument("build_hex_layout: R must be > 0");
    HexLayout lay;
    lay.R = R;
    lay.centers[0] = {0.0, 0.0};
    const double d = kSqrt3 * R;
    for (int k = 0; k < 6; ++k) {
        const double ang = k * (kPi / 3.0);
        lay.centers[k + 1] = {d * std::cos(ang), d * std::sin(ang)};
    }
    return lay;
}

/// Closed flat-top hexagon test: |proj of p-center on the three apothem
/// axes (0, 60, 120 degrees)| <= (sqrt(3)/2)R.
inline bool in_hexagon(const Vec2& p, const Vec2& center, double R) {
    const double a = 0.5 * kSqrt3 * R;
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    if (std::fabs(dx) > a) return false;
    if (std::fabs(0.5 * dx + 0.5 * kSqrt3 * dy) > a) return false;
    if (std::fabs(-0.5 * dx + 0.5 * kSqrt3 * dy) > a) return false;
    return true;
}

/// d^(-alpha) power-law gain. The model keeps devices at least 1 m from
/// any AP, so d=0 is a caller error, not a sampling outcome.
inline double path_loss(double d, double alpha) {
    if (!(d > 0.0)) throw std::domain_error("path_loss: singular distance d <= 0");
    if (!(alpha >= 2.0)) throw std::invalid_argument("path_loss: alpha must be >= 2");
    return std::pow(d, -alpha);
}

/// Devices must not sit on top of an AP; d^(-alpha) would blow up.
inline constexpr double kMinDeviceApDistance = 1.0;

/// N i.i.d. uniform points in hexagon `cell` of `layout`, by rejection from
/// the bounding rectangle. Points closer than 1 m to any AP are rejected.
inline std::vector<Vec2> sample_cell_devices(Rng& rng, long n, int cell, const HexLayout& layout) {
    if (n < 0) throw std::invalid_argument("sample_cell_devices: n must be >= 0");
    if (cell < 0 || cell >= 7) throw std::invalid_argument("sample_cell_devices: cell index out of range");
    const Vec2 c = layout.centers[static_cast<std::size_t>(cell)];
    const double R = layout.R;
    const double hx = 0.5 * kSqrt3 * R;
    std::vector<Vec2> out;
    out.reserve(static_cast<std::size_t>(n));
    while (static_cast<long>(out.size()) < n) {
        Vec2 p{c.x + rng.uniform(-hx, hx), c.y + rng.uniform(-R, R)};
        if (!in_hexagon(p, c, R)) continue;
        bool near_ap = false;
        for (const Vec2& ap : layout.centers) {
            if (dist(p, ap) < kMinDeviceApDistance) {
                near_ap = true;
                break;
            }
        }
        if (near_ap) continue;
        out.push_back(p);
    }
    return out;
}

/// PPP(lambda) on the disk of radius r_max about the origin, thinned by the
/// exclusion hexagons (centers from `layout`, indices in `exclusion`).
/// These model the always-active out-of-region interferers.
inline std::vector<Vec2> sample_interferers(Rng& rng, double lambda,
                                            const HexLayout& layout,
                                            const std::vector<int>& exclusion,
                                            double r_max) {
    if (lambda < 0.0) throw std::invalid_argument("sample_interferers: lambda must be >= 0");
    double extent = 0.0;
    for (int j : exclusion) {
        if (j < 0 || j >= 7) throw std::invalid_argument("sample_interferers: exclusion index out of range");
        const Vec2 c = layout.centers[static_cast<std::size_t>(j)];
        extent = std::max(extent, std::hypot(c.x, c.y) + layout.R);
    }
    if (!(r_max > extent)) {
        throw std::invalid_argument("sample_interferers: r_max does not cover the exclusion region");
    }
    const long n = rng.poisson(lambda * kPi * r_max * r_max);
    std::vector<Vec2> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
        const double r = r_max * std::sqrt(rng.uniform());
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        Vec2 p{r * std::cos(phi), r * std::sin(phi)};
        bool excluded = false;
        for (int j : exclusion) {
            if (in_hexagon(p, layout.centers[static_cast<std::size_t>(j)], layout.R)) {
                excluded = true;
                break;
            }
        }
        if (!excluded) out.push_back(p);
    }
    return out;
}

/// One Monte Carlo draw of the network: per-cell device positions and
/// binary activities plus the out-of-region interferers (always active).
struct NetworkRealization {
    HexLayout layout;
    double alpha = 3.0;
    std::array<std::vector<Vec2>, 7> devices;
    std::array<std::vector<std::uint8_t>, 7> active;
    std::vector<Vec2> interferers;

    long total_devices() const {
        long n = 0;
        for (const auto& v : devices) n += static_cast<long>(v.size());
        return n;
    }
};

/// Debug dump: one row per device/interferer as "x,y,cell,active"
/// (interferers get cell=-1, active=1).
inline void write_positions_csv(const NetworkRealization& net, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_positions_csv: cannot open " + path);
    os << "x,y,cell,active\n";
    for (int j = 0; j < 7; ++j) {
        const auto& pos = net.devices[static_cast<std::size_t>(j)];
        const auto& act = net.active[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < pos.size(); ++i) {
            os << pos[i].x << ',' << pos[i].y << ',' << j << ',' << int(act[i]) << '\n';
        }
    }
    for (const Vec2& p : net.interferers) {
        os << p.x << ',' << p.y << ',' << -1 << ',' << 1 << '\n';
    }
}

}  // namespace mcad
