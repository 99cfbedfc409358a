#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbm/assignment.hpp"
#include "mbm/errors.hpp"
#include "mbm/gaussian.hpp"

namespace mbm {

struct GospaParams {
    double c = 10.0;
    double p = 2.0;
    /// State components compared by the base distance; empty means the full vector.
    std::vector<int> position_indices = {0, 2};

    void validate() const {
        if (!(c > 0.0) || !std::isfinite(c)) throw InputError("gospa: c must be positive and finite");
        if (!(p >= 1.0) || !std::isfinite(p)) throw InputError("gospa: p must lie in [1, inf)");
        for (int i : position_indices)
            if (i < 0) throw InputError("gospa: negative position index");
    }
};

struct GospaResult {
    double total = 0.0;
    double localisation_p = 0.0;
    double missed_p = 0.0;
    double false_p = 0.0;
    int n_missed = 0;
    int n_false = 0;
    /// Matched (truth index, estimate index) pairs.
    std::vector<std::pair<int, int>> matching;
};

namespace detail {

inline Vector project(const Vector& x, const std::vector<int>& indices) {
    if (indices.empty()) return x;
    Vector out(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x.size()) throw InputError("gospa: position index out of range");
        out[static_cast<Eigen::Index>(i)] = x[indices[i]];
    }
    return out;
}

}  // namespace detail

inline GospaResult gospa(std::span<const Vector> truth, std::span<const Vector> estimate,
                         const GospaParams& params = {}) {
    params.validate();
    std::vector<Vector> x, y;
    for (const auto& v : truth) x.push_back(detail::project(v, params.position_indices));
    for (const auto& v : estimate) y.push_back(detail::project(v, params.position_indices));
    for (const auto& v : x)
        if (v.size() != x.front().size()) throw InputError("gospa: truth vectors differ in dimension");
    for (const auto& v : y)
        if (v.size() != (x.empty() ? y.front().size() : x.front().size()))
            throw InputError("gospa: estimate dimension does not match truth");

    const double cp = std::pow(params.c, params.p);
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto m = static_cast<Eigen::Index>(y.size());
    Matrix dp(n, m);
    CostMatrix costs(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            dp(i, j) = std::pow((x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]).norm(), params.p);
            costs.entries(i, j) = dp(i, j) < cp ? dp(i, j) - cp : kForbidden;
        }
    const Assignment best = solve_optimal(costs);

    GospaResult r;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int j = best.row_to_col[static_cast<std::size_t>(i)];
        if (j == kUnassigned) continue;
        r.localisation_p += dp(i, j);
        r.matching.emplace_back(static_cast<int>(i), j);
    }
    const int matched = static_cast<int>(r.matching.size());
    r.n_missed = static_cast<int>(n) - matched;
    r.n_false = static_cast<int>(m) - matched;
    r.missed_p = 0.5 * cp * r.n_missed;
    r.false_p = 0.5 * cp * r.n_false;
    r.total = std::pow(r.localisation_p + r.missed_p + r.false_p, 1.0 / params.p);
    return r;
}

/// Root mean square of per-step totals.
inline double rms_gospa(std::span<const GospaResult> steps) {
    if (steps.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : steps) sum += s.total * s.total;
    return std::sqrt(sum / static_cast<double>(steps.size()));
}

}  // namespace mbm
