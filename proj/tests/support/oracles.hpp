#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "mikani/core.hpp"

namespace mikani::testing {

inline double brute_iou(const std::vector<HardSpan>& a, const std::vector<HardSpan>& b) {
    std::set<std::size_t> sa, sb, both, any;
    for (const auto& s : a)
        for (auto i = s.start; i < s.end; ++i) sa.insert(i);
    for (const auto& s : b)
        for (auto i = s.start; i < s.end; ++i) sb.insert(i);
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(both, both.begin()));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(any, any.begin()));
    if (any.empty()) return 1.0;
    return static_cast<double>(both.size()) / static_cast<double>(any.size());
}

/// rank_i = 1 + #{j: x_j < x_i} + (#{j: x_j == x_i} - 1) / 2, by counting.
inline std::vector<double> counting_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double v : x) {
            if (v < x[i]) ++less;
            if (v == x[i]) ++equal;
        }
        r[i] = 1.0 + less + (equal - 1.0) / 2.0;
    }
    return r;
}

/// Pearson correlation of counting ranks; the degenerate mapping mirrors the
/// documented convention (both constant 1, one constant 0).
inline double rank_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = counting_ranks(a);
    const auto rb = counting_ranks(b);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    const double ma = mean(ra), mb = mean(rb);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0 && sbb == 0) return 1.0;
    if (saa == 0 || sbb == 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Minimises 1/2 b'Qb + p'b over 0 <= b <= u, y'b = 0 with FISTA; the
/// projection bisects on the multiplier of the equality constraint.
struct QpOracle {
    std::vector<std::vector<double>> Q;
    std::vector<double> p, u, y;

    double objective(const std::vector<double>& b) const {
        double f = 0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            double qi = 0;
            for (std::size_t j = 0; j < b.size(); ++j) qi += Q[i][j] * b[j];
            f += 0.5 * b[i] * qi + p[i] * b[i];
        }
        return f;
    }

    std::vector<double> project(const std::vector<double>& v) const {
        auto at = [&](double mu) {
            std::vector<double> b(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) b[i] = std::clamp(v[i] - mu * y[i], 0.0, u[i]);
            return b;
        };
        auto g = [&](double mu) {
            const auto b = at(mu);
            double s = 0;
            for (std::size_t i = 0; i < b.size(); ++i) s += y[i] * b[i];
            return s;
        };
        double bound = 1.0;
        for (std::size_t i = 0; i < v.size(); ++i) bound = std::max(bound, std::abs(v[i]) + u[i] + 1.0);
        double lo = -bound, hi = bound;  // g(lo) >= 0 >= g(hi)
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0 ? lo : hi) = mid;
        }
        return at(0.5 * (lo + hi));
    }

    std::vector<double> solve(int iterations = 50000) const {
        const std::size_t n = p.size();
        double L = 0;
        for (const auto& row : Q) {
            double s = 0;
            for (double v : row) s += std::abs(v);
            L = std::max(L, s);
        }
        L = std::max(L, 1e-12);
        std::vector<double> x(n, 0.0), z = x, prev = x;
        double t = 1.0;
        for (int k = 0; k < iterations; ++k) {
            std::vector<double> step(n);
            for (std::size_t i = 0; i < n; ++i) {
                double grad = p[i];
                for (std::size_t j = 0; j < n; ++j) grad += Q[i][j] * z[j];
                step[i] = z[i] - grad / L;
            }
            prev = x;
            x = project(step);
            const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
            for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + ((t - 1.0) / t_next) * (x[i] - prev[i]);
            t = t_next;
            if (objective(x) > objective(prev)) {  // adaptive restart
                z = x;
                t = 1.0;
            }
        }
        return x;
    }
};

}  // namespace mikani::testing
