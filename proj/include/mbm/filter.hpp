#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mbm/assignment.hpp"
#include "mbm/errors.hpp"
#include "mbm/gaussian.hpp"

namespace mbm {

/// Unique label of a Bernoulli component: the step it was born and its index
/// within that step's birth density.
struct Label {
    int birth_time = -1;
    int birth_index = -1;

    friend auto operator<=>(const Label&, const Label&) = default;
};

/// Bookkeeping attached to each single-target hypothesis. Never read by the
/// recursion itself.
struct HypothesisMeta {
    Label label;
    /// Per update since birth: 0 = misdetection, j = j-th measurement (1-based).
    std::vector<int> association_history;
};

struct SingleTargetHypothesis {
    double log_weight = 0.0;
    double existence = 0.0;
    GaussianDensity density;
    HypothesisMeta meta;
};

struct BernoulliComponent {
    std::vector<SingleTargetHypothesis> hypotheses;
};

struct GlobalHypothesis {
    /// Normalized so that the weights of all global hypotheses sum to one.
    double log_weight = 0.0;
    /// One single-target hypothesis index per Bernoulli component.
    std::vector<int> assignment;
};

/// Multi-Bernoulli mixture filtering density.
struct MbmState {
    std::vector<BernoulliComponent> components;
    std::vector<GlobalHypothesis> globals;
    int time = 0;
};

struct BirthComponent {
    double existence = 0.0;
    GaussianDensity density;
};

/// Multi-Bernoulli birth density, added at every prediction.
struct BirthModel {
    std::vector<BirthComponent> components;
};

struct FilterParams {
    std::size_t max_globals = 200;                    // N_h
    double gate_threshold = 20.0;                     // Gamma_g on the squared Mahalanobis distance
    double prune_global_weight = 1e-5;                // on normalized global weights
    double prune_existence = 1e-3;                    // Gamma_b
    double estimate_existence = 0.4;                  // strict: r > threshold
    bool track_labels = true;
    std::size_t history_limit = 0;                    // 0 = unbounded
};

struct Estimate {
    Vector state;
    Label label;
};

// ---------------------------------------------------------------------------
// log-domain helpers

inline double log_sum_exp(std::span<const double> values) {
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : values) peak = std::max(peak, v);
    if (!std::isfinite(peak)) return peak;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - peak);
    return peak + std::log(sum);
}

inline double log_add(double a, double b) {
    const double values[] = {a, b};
    return log_sum_exp(values);
}

inline void normalize_globals(std::vector<GlobalHypothesis>& globals) {
    std::vector<double> lw;
    lw.reserve(globals.size());
    for (const auto& g : globals) lw.push_back(g.log_weight);
    const double total = log_sum_exp(lw);
    for (auto& g : globals) g.log_weight -= total;
}

/// Empty prior: no Bernoulli components and a single global hypothesis.
inline MbmState init_empty() {
    MbmState s;
    s.globals.push_back(GlobalHypothesis{0.0, {}});
    return s;
}

inline void check_invariants(const MbmState& state, double tol = 1e-9) {
    if (state.globals.empty()) throw NumericalError("state has no global hypotheses");
    std::vector<double> lw;
    for (const auto& g : state.globals) {
        if (g.assignment.size() != state.components.size())
            throw NumericalError("global hypothesis length differs from component count");
        for (std::size_t i = 0; i < g.assignment.size(); ++i)
            if (g.assignment[i] < 0 ||
                static_cast<std::size_t>(g.assignment[i]) >= state.components[i].hypotheses.size())
                throw NumericalError("global hypothesis index out of range");
        lw.push_back(g.log_weight);
    }
    if (std::abs(log_sum_exp(lw)) > tol) throw NumericalError("global weights are not normalized");
    for (const auto& c : state.components)
        for (const auto& h : c.hypotheses)
            if (!(h.existence >= 0.0 && h.existence <= 1.0)) throw NumericalError("existence outside [0,1]");
}

// ---------------------------------------------------------------------------
// prediction

inline MbmState predict(const MbmState& state, const LinearGaussianModel& model, const BirthModel& birth,
                        const FilterParams& params = {}) {
    model.validate();
    MbmState out;
    out.time = state.time + 1;
    out.components.reserve(state.components.size() + birth.components.size());
    for (const auto& component : state.components) {
        BernoulliComponent next;
        next.hypotheses.reserve(component.hypotheses.size());
        for (const auto& h : component.hypotheses) {
            next.hypotheses.push_back(SingleTargetHypothesis{
                h.log_weight, h.existence * model.survival_prob, kalman_predict(h.density, model), h.meta});
        }
        out.components.push_back(std::move(next));
    }
    for (std::size_t l = 0; l < birth.components.size(); ++l) {
        const auto& b = birth.components[l];
        if (!(b.existence >= 0.0 && b.existence <= 1.0)) throw InputError("birth existence outside [0,1]");
        if (b.density.mean.size() != model.state_dim() || b.density.covariance.rows() != model.state_dim() ||
            b.density.covariance.cols() != model.state_dim())
            throw InputError("birth density dimension does not match model");
        SingleTargetHypothesis h{0.0, b.existence, b.density, {}};
        if (params.track_labels) h.meta.label = Label{out.time, static_cast<int>(l)};
        out.components.push_back(BernoulliComponent{{std::move(h)}});
    }
    out.globals = state.globals;
    for (auto& g : out.globals) g.assignment.resize(out.components.size(), 0);
    return out;
}

// ---------------------------------------------------------------------------
// update

namespace detail {

/// Children of one prior single-target hypothesis: where they live in the
/// updated component and their log-weight factor relative to the parent.
struct ChildIndex {
    int misdetection = -1;
    double misdetection_factor = -std::numeric_limits<double>::infinity();
    std::vector<int> detection;            // per measurement, -1 when gated out
    std::vector<double> detection_factor;  // per measurement
};

inline void append_history(HypothesisMeta& meta, int xi, const FilterParams& params) {
    if (!params.track_labels) return;
    meta.association_history.push_back(xi);
    if (params.history_limit > 0 && meta.association_history.size() > params.history_limit)
        meta.association_history.erase(meta.association_history.begin());
}

inline std::size_t hypotheses_budget(std::size_t max_globals, double log_weight) {
    const double budget = std::ceil(static_cast<double>(max_globals) * std::exp(log_weight));
    if (!(budget >= 1.0)) return 1;
    if (budget >= static_cast<double>(std::numeric_limits<std::size_t>::max() / 2))
        return std::numeric_limits<std::size_t>::max() / 2;
    return static_cast<std::size_t>(budget);
}

}  // namespace detail

/// Measurement update. Every referenced single-target hypothesis spawns a
/// misdetection child and one detection child per gated measurement; each
/// prior global hypothesis is then expanded into its ceil(N_h * w) best
/// association hypotheses via Murty's algorithm.
inline MbmState update(const MbmState& state, std::span<const Vector> measurements, const LinearGaussianModel& model,
                       const FilterParams& params) {
    model.validate();
    const std::size_t n = state.components.size();
    const int m = static_cast<int>(measurements.size());
    for (const auto& z : measurements)
        if (z.size() != model.measurement_dim()) throw InputError("measurement dimension does not match model");

    const double p_d = model.detection_prob;
    // With no clutter every measurement must come from a target; the common
    // 1/kappa factor then cancels and is dropped.
    const bool clutter = model.clutter_intensity > 0.0;
    const double log_kappa = clutter ? std::log(model.clutter_intensity) : 0.0;

    std::vector<char> referenced_flags;
    MbmState out;
    out.time = state.time;
    out.components.resize(n);
    std::vector<std::vector<detail::ChildIndex>> children(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& parents = state.components[i].hypotheses;
        referenced_flags.assign(parents.size(), 0);
        for (const auto& g : state.globals) referenced_flags[static_cast<std::size_t>(g.assignment[i])] = 1;
        children[i].resize(parents.size());
        auto& next = out.components[i].hypotheses;

        for (std::size_t h = 0; h < parents.size(); ++h) {
            if (!referenced_flags[h]) continue;
            const auto& parent = parents[h];
            auto& idx = children[i][h];
            const double r = parent.existence;

            const double miss_mass = 1.0 - r * p_d;  // 1 - r + r (1 - p_D)
            if (miss_mass > 0.0) {
                idx.misdetection_factor = std::log(miss_mass);
                idx.misdetection = static_cast<int>(next.size());
                SingleTargetHypothesis child{parent.log_weight + idx.misdetection_factor,
                                             std::clamp(r * (1.0 - p_d) / miss_mass, 0.0, 1.0), parent.density,
                                             parent.meta};
                detail::append_history(child.meta, 0, params);
                next.push_back(std::move(child));
            }

            idx.detection.assign(static_cast<std::size_t>(m), -1);
            idx.detection_factor.assign(static_cast<std::size_t>(m), -std::numeric_limits<double>::infinity());
            if (m == 0 || r <= 0.0 || p_d <= 0.0) continue;
            const InnovationTerms terms(parent.density, model);
            const double log_rpd = std::log(r) + std::log(p_d);
            for (int j = 0; j < m; ++j) {
                const Vector& z = measurements[static_cast<std::size_t>(j)];
                const double d2 = terms.mahalanobis(z);
                if (d2 > params.gate_threshold) continue;
                const double factor = log_rpd + terms.log_likelihood(z) - log_kappa;
                idx.detection[static_cast<std::size_t>(j)] = static_cast<int>(next.size());
                idx.detection_factor[static_cast<std::size_t>(j)] = factor;
                SingleTargetHypothesis child{parent.log_weight + factor, 1.0, terms.posterior(z), parent.meta};
                detail::append_history(child.meta, j + 1, params);
                next.push_back(std::move(child));
            }
        }
    }

    std::vector<double> prior_lw;
    for (const auto& g : state.globals) prior_lw.push_back(g.log_weight);
    const double prior_norm = log_sum_exp(prior_lw);

    for (const auto& g : state.globals) {
        const double w_log = g.log_weight - prior_norm;
        if (m == 0) {
            GlobalHypothesis child{w_log, std::vector<int>(n)};
            bool feasible = true;
            for (std::size_t i = 0; i < n && feasible; ++i) {
                const auto& idx = children[i][static_cast<std::size_t>(g.assignment[i])];
                feasible = idx.misdetection >= 0;
                child.log_weight += idx.misdetection_factor;
                child.assignment[i] = idx.misdetection;
            }
            if (feasible) out.globals.push_back(std::move(child));
            continue;
        }

        // C_ij = -ln(w_det / w_miss); rows whose misdetection is impossible use
        // -ln(w_det) with a forbidden slack so the row must be assigned.
        CostMatrix costs(static_cast<Eigen::Index>(n), m);
        costs.unassigned_row_cost = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        if (!clutter) costs.unassigned_col_cost = Eigen::VectorXd::Constant(m, kForbidden);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& idx = children[i][static_cast<std::size_t>(g.assignment[i])];
            const bool can_miss = idx.misdetection >= 0;
            const double base = can_miss ? idx.misdetection_factor : 0.0;
            if (!can_miss) costs.unassigned_row_cost[static_cast<Eigen::Index>(i)] = kForbidden;
            for (int j = 0; j < m; ++j) {
                const int child = idx.detection[static_cast<std::size_t>(j)];
                costs.entries(static_cast<Eigen::Index>(i), j) =
                    child < 0 ? kForbidden : base - idx.detection_factor[static_cast<std::size_t>(j)];
            }
        }

        const auto ranked = k_best(costs, detail::hypotheses_budget(params.max_globals, w_log));
        for (const auto& a : ranked) {
            GlobalHypothesis child{w_log, std::vector<int>(n)};
            for (std::size_t i = 0; i < n; ++i) {
                const auto& idx = children[i][static_cast<std::size_t>(g.assignment[i])];
                const int j = a.row_to_col[i];
                if (j == kUnassigned) {
                    child.log_weight += idx.misdetection_factor;
                    child.assignment[i] = idx.misdetection;
                } else {
                    child.log_weight += idx.detection_factor[static_cast<std::size_t>(j)];
                    child.assignment[i] = idx.detection[static_cast<std::size_t>(j)];
                }
            }
            out.globals.push_back(std::move(child));
        }
    }

    if (out.globals.empty()) throw NumericalError("measurement set has zero likelihood under every global hypothesis");
    normalize_globals(out.globals);
    return out;
}

// ---------------------------------------------------------------------------
// estimation and pruning

/// Means of the Bernoulli components of the highest-weight global hypothesis
/// whose existence probability exceeds the threshold.
inline std::vector<Estimate> estimate(const MbmState& state, const FilterParams& params) {
    std::vector<Estimate> out;
    if (state.globals.empty()) return out;
    std::size_t best = 0;
    for (std::size_t a = 1; a < state.globals.size(); ++a)
        if (state.globals[a].log_weight > state.globals[best].log_weight) best = a;
    const auto& g = state.globals[best];
    for (std::size_t i = 0; i < state.components.size(); ++i) {
        const auto& h = state.components[i].hypotheses[static_cast<std::size_t>(g.assignment[i])];
        if (h.existence > params.estimate_existence) out.push_back(Estimate{h.density.mean, h.meta.label});
    }
    return out;
}

namespace detail {

inline void merge_duplicates(std::vector<GlobalHypothesis>& globals) {
    std::map<std::vector<int>, std::size_t> seen;
    std::vector<GlobalHypothesis> merged;
    merged.reserve(globals.size());
    for (auto& g : globals) {
        auto [it, inserted] = seen.try_emplace(g.assignment, merged.size());
        if (inserted)
            merged.push_back(std::move(g));
        else
            merged[it->second].log_weight = log_add(merged[it->second].log_weight, g.log_weight);
    }
    globals = std::move(merged);
}

}  // namespace detail

/// Caps and thresholds global hypotheses, then drops unreferenced
/// single-target hypotheses and Bernoulli components that are unlikely to
/// exist under every remaining hypothesis. Duplicate global hypotheses are
/// merged by adding their weights.
inline MbmState prune(const MbmState& state, const FilterParams& params) {
    if (state.globals.empty()) throw InputError("prune: state has no global hypotheses");
    std::vector<GlobalHypothesis> globals = state.globals;
    normalize_globals(globals);
    detail::merge_duplicates(globals);

    std::vector<std::size_t> order(globals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return globals[a].log_weight > globals[b].log_weight; });
    const double log_threshold = params.prune_global_weight > 0.0 ? std::log(params.prune_global_weight)
                                                                  : -std::numeric_limits<double>::infinity();
    std::vector<GlobalHypothesis> kept;
    for (std::size_t idx : order) {
        if (kept.size() >= std::max<std::size_t>(params.max_globals, 1)) break;
        if (globals[idx].log_weight < log_threshold) break;
        kept.push_back(std::move(globals[idx]));
    }
    if (kept.empty()) kept.push_back(std::move(globals[order.front()]));

    MbmState out;
    out.time = state.time;
    const std::size_t n = state.components.size();
    std::vector<char> keep_component(n, 0);
    std::vector<std::vector<int>> remap(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& hyps = state.components[i].hypotheses;
        std::vector<char> used(hyps.size(), 0);
        for (const auto& g : kept) used[static_cast<std::size_t>(g.assignment[i])] = 1;
        remap[i].assign(hyps.size(), -1);
        BernoulliComponent component;
        bool alive = false;
        for (std::size_t h = 0; h < hyps.size(); ++h) {
            if (!used[h]) continue;
            remap[i][h] = static_cast<int>(component.hypotheses.size());
            component.hypotheses.push_back(hyps[h]);
            alive = alive || hyps[h].existence >= params.prune_existence;
        }
        if (alive) {
            keep_component[i] = 1;
            out.components.push_back(std::move(component));
        }
    }
    for (auto& g : kept) {
        std::vector<int> assignment;
        assignment.reserve(out.components.size());
        for (std::size_t i = 0; i < n; ++i)
            if (keep_component[i]) assignment.push_back(remap[i][static_cast<std::size_t>(g.assignment[i])]);
        g.assignment = std::move(assignment);
    }
    detail::merge_duplicates(kept);
    normalize_globals(kept);
    out.globals = std::move(kept);
    return out;
}

struct StepResult {
    MbmState state;
    std::vector<Estimate> estimates;
};

/// One filter recursion: predict, update, estimate, then prune.
inline StepResult step(const MbmState& state, std::span<const Vector> measurements, const LinearGaussianModel& model,
                       const BirthModel& birth, const FilterParams& params) {
    auto updated = update(predict(state, model, birth, params), measurements, model, params);
    auto estimates = estimate(updated, params);
    return {prune(updated, params), std::move(estimates)};
}

}  // namespace mbm
