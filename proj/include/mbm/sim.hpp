#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mbm/filter.hpp"
#include "mbm/gospa.hpp"

namespace mbm {

// ---------------------------------------------------------------------------
// random numbers

/// MT19937-64 (whose output sequence is fixed by the C++ standard) seeded via
/// std::seed_seq, with the distributions written out here so that samples
/// are identical across standard libraries.
///
/// - uniform: top 53 bits scaled to [0, 1)
/// - normal: Marsaglia polar method, spare value cached
/// - poisson: Knuth multiplication for rates up to 30, larger rates as a sum
///   of independent rate-30 draws plus a remainder
/// - below(n): rejection sampling on the 64-bit output, no modulo bias
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    Vector normal(const Vector& mean, const Matrix& cov) {
        Vector n(mean.size());
        for (Eigen::Index i = 0; i < n.size(); ++i) n[i] = normal();
        return mean + cov_factor(cov) * n;
    }

    int poisson(double rate) {
        if (!(rate >= 0.0) || !std::isfinite(rate)) throw InputError("poisson rate must be finite and non-negative");
        int total = 0;
        while (rate > 30.0) {
            total += knuth(30.0);
            rate -= 30.0;
        }
        return total + knuth(rate);
    }

private:
    int knuth(double rate) {
        const double limit = std::exp(-rate);
        int k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    static Matrix cov_factor(const Matrix& cov) {
        // LDLT tolerates the rank-deficient covariances used for noiseless runs
        Eigen::LDLT<Matrix> ldlt(cov);
        const Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
        Matrix l = ldlt.matrixL();
        return ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// scenarios and ground truth

struct Region {
    double x_min = 0.0, x_max = 300.0, y_min = 0.0, y_max = 300.0;
    [[nodiscard]] double area() const { return (x_max - x_min) * (y_max - y_min); }
};

/// Ground-truth layout: every trajectory passes through a random midpoint
/// drawn around `midpoint_mean` at `midpoint_step` and is propagated forward
/// and backward with the motion model. A trajectory is present from its
/// birth step up to, but excluding, its death step (0 = never dies).
struct TruthSpec {
    int midpoint_step = 41;
    Vector midpoint_mean = (Vector(4) << 150.0, 0.0, 150.0, 0.0).finished();
    double midpoint_variance = 0.01;
    std::vector<int> birth_steps = {1, 1, 21, 21};
    std::vector<int> death_steps = {40, 0, 0, 0};
};

struct Scenario {
    std::string name;
    /// Sampling time and process noise intensity q that define the model.
    double sampling_time = 1.0;
    double process_noise_q = 0.01;
    double measurement_variance = 1.0;
    LinearGaussianModel model;
    BirthModel birth;
    Region region;
    double clutter_rate = 10.0;
    int duration = 81;
    /// Per-step p_D override, index 0 = step 1; steps past the end use model.detection_prob.
    std::vector<double> detection_schedule;
    /// Last step at which the birth model applies; 0 = every step.
    int birth_last_step = 0;
    TruthSpec truth;

    [[nodiscard]] bool births_at(int k) const { return birth_last_step == 0 || k <= birth_last_step; }

    [[nodiscard]] double detection_prob_at(int k) const {
        const auto idx = static_cast<std::size_t>(k - 1);
        return k >= 1 && idx < detection_schedule.size() ? detection_schedule[idx] : model.detection_prob;
    }

    [[nodiscard]] LinearGaussianModel model_at(int k) const {
        LinearGaussianModel m = model;
        m.detection_prob = detection_prob_at(k);
        return m;
    }

    /// Rebuilds `model` from the scalar parameters, keeping p_S and p_D.
    void rebuild_model() {
        model = constant_velocity_model(sampling_time, process_noise_q, measurement_variance, model.survival_prob,
                                        model.detection_prob, clutter_rate / region.area());
    }

    void validate() const {
        model.validate();
        if (duration < 1) throw InputError("scenario: duration must be positive");
        if (birth_last_step < 0) throw InputError("scenario: birth_last_step must be non-negative");
        if (!(clutter_rate >= 0.0)) throw InputError("scenario: clutter rate must be non-negative");
        if (!(region.area() > 0.0)) throw InputError("scenario: region must have positive area");
        for (double p : detection_schedule)
            if (!(p >= 0.0 && p <= 1.0)) throw InputError("scenario: detection schedule outside [0,1]");
        for (const auto& b : birth.components) {
            if (!(b.existence >= 0.0 && b.existence <= 1.0)) throw InputError("scenario: birth existence outside [0,1]");
            if (b.density.dim() != model.state_dim()) throw InputError("scenario: birth dimension mismatch");
        }
        if (truth.birth_steps.size() != truth.death_steps.size())
            throw InputError("scenario: truth birth and death lists differ in length");
        if (truth.midpoint_mean.size() != model.state_dim()) throw InputError("scenario: truth midpoint dimension");
        if (truth.midpoint_step < 1 || truth.midpoint_step > duration)
            throw InputError("scenario: truth midpoint outside the run");
    }
};

namespace detail {

inline Scenario standard_base(std::string name) {
    Scenario s;
    s.name = std::move(name);
    s.model.survival_prob = 0.99;
    s.model.detection_prob = 0.9;
    s.rebuild_model();
    return s;
}

inline GaussianDensity diag_gaussian(const Vector& mean, const Vector& stds) {
    return {mean, stds.cwiseProduct(stds).asDiagonal()};
}

}  // namespace detail

inline Scenario scenario1() {
    Scenario s = detail::standard_base("scenario1");
    const Vector stds = (Vector(4) << 3, 1, 3, 1).finished();
    for (auto [x, y] : {std::pair{140.0, 170.0}, {165.0, 155.0}, {150.0, 160.0}, {160.0, 150.0}})
        s.birth.components.push_back({0.01, detail::diag_gaussian((Vector(4) << x, 0, y, 0).finished(), stds)});
    return s;
}

inline Scenario scenario2() {
    Scenario s = detail::standard_base("scenario2");
    const Vector stds = (Vector(4) << 150, 1, 150, 1).finished();
    for (int l = 0; l < 2; ++l)
        s.birth.components.push_back({0.02, detail::diag_gaussian((Vector(4) << 100, 0, 100, 0).finished(), stds)});
    return s;
}

inline Scenario scenario3() {
    Scenario s = scenario2();
    s.name = "scenario3";
    s.detection_schedule.assign(10, 0.0);
    return s;
}

inline std::vector<Scenario> builtin_scenarios() { return {scenario1(), scenario2(), scenario3()}; }

/// Throws InputError for unknown names.
inline Scenario builtin_scenario(const std::string& name) {
    for (auto& s : builtin_scenarios())
        if (s.name == name) return s;
    throw InputError("unknown scenario '" + name + "'");
}

struct LabeledState {
    Label label;  // birth step, trajectory index
    Vector state;
};

/// Truth[k - 1] holds the targets present at step k.
using Truth = std::vector<std::vector<LabeledState>>;

inline Truth make_truth(const Scenario& scenario, Rng& rng) {
    scenario.validate();
    const auto& spec = scenario.truth;
    const Matrix& F = scenario.model.transition;
    const Matrix& Q = scenario.model.process_noise;
    const Eigen::PartialPivLU<Matrix> F_lu(F);
    const Vector zero = Vector::Zero(F.rows());
    const int K = scenario.duration;
    const int mid = spec.midpoint_step;

    Truth truth(static_cast<std::size_t>(K));
    for (std::size_t t = 0; t < spec.birth_steps.size(); ++t) {
        std::vector<Vector> path(static_cast<std::size_t>(K));
        path[static_cast<std::size_t>(mid - 1)] =
            rng.normal(spec.midpoint_mean, spec.midpoint_variance * Matrix::Identity(F.rows(), F.rows()));
        for (int k = mid + 1; k <= K; ++k)
            path[static_cast<std::size_t>(k - 1)] = F * path[static_cast<std::size_t>(k - 2)] + rng.normal(zero, Q);
        for (int k = mid - 1; k >= 1; --k)
            path[static_cast<std::size_t>(k - 1)] =
                F_lu.solve(path[static_cast<std::size_t>(k)] - rng.normal(zero, Q));

        const int born = spec.birth_steps[t];
        const int dies = spec.death_steps[t] > 0 ? spec.death_steps[t] : K + 1;
        for (int k = std::max(born, 1); k < dies && k <= K; ++k)
            truth[static_cast<std::size_t>(k - 1)].push_back(
                {Label{born, static_cast<int>(t)}, path[static_cast<std::size_t>(k - 1)]});
    }
    return truth;
}

/// The standard ground truth: four trajectories through step 41, two born at
/// step 1 (the first dies at step 40) and two at step 21.
inline Truth make_standard_truth(Rng& rng) { return make_truth(scenario1(), rng); }

/// Detections of the targets in `truth_at_k` plus Poisson clutter over the
/// region, in shuffled order.
inline std::vector<Vector> generate_measurements(const std::vector<LabeledState>& truth_at_k, const Scenario& scenario,
                                                 int k, Rng& rng) {
    const auto& m = scenario.model;
    const double p_d = scenario.detection_prob_at(k);
    const Vector zero = Vector::Zero(m.measurement_dim());
    std::vector<Vector> z;
    for (const auto& t : truth_at_k)
        if (rng.uniform() < p_d) z.push_back(m.observation * t.state + rng.normal(zero, m.measurement_noise));
    const int clutter = rng.poisson(scenario.clutter_rate);
    const auto& a = scenario.region;
    for (int c = 0; c < clutter; ++c) {
        Vector v(2);
        v[0] = rng.uniform(a.x_min, a.x_max);
        v[1] = rng.uniform(a.y_min, a.y_max);
        z.push_back(std::move(v));
    }
    for (std::size_t i = z.size(); i > 1; --i) std::swap(z[i - 1], z[rng.below(i)]);
    return z;
}

// ---------------------------------------------------------------------------
// Monte Carlo

inline std::vector<Vector> truth_states(const std::vector<LabeledState>& points) {
    std::vector<Vector> out;
    for (const auto& p : points) out.push_back(p.state);
    return out;
}

inline std::vector<Vector> estimate_states(const std::vector<Estimate>& estimates) {
    std::vector<Vector> out;
    for (const auto& e : estimates) out.push_back(e.state);
    return out;
}

/// Runs the filter over a measurement sequence; step k uses the scenario's p_D for k.
inline std::vector<std::vector<Estimate>> run_filter(const Scenario& scenario,
                                                     const std::vector<std::vector<Vector>>& measurements,
                                                     const FilterParams& params) {
    std::vector<std::vector<Estimate>> out;
    MbmState state = init_empty();
    const BirthModel none;
    for (std::size_t k = 0; k < measurements.size(); ++k) {
        const int t = static_cast<int>(k) + 1;
        auto res = step(state, measurements[k], scenario.model_at(t), scenario.births_at(t) ? scenario.birth : none, params);
        state = std::move(res.state);
        out.push_back(std::move(res.estimates));
    }
    return out;
}

struct MonteCarloConfig {
    int n_runs = 100;
    std::uint64_t seed = 0;
    /// Draw a fresh ground truth for every run instead of once per seed.
    bool truth_per_run = false;
    GospaParams gospa;
};

struct RunRecord {
    std::uint64_t seed = 0;
    Truth truth;
    std::vector<std::vector<Vector>> measurements;
    std::vector<std::vector<Estimate>> estimates;
    std::vector<GospaResult> gospa;
    double rms_gospa = 0.0;
    double mean_localisation_p = 0.0;
    double mean_missed_p = 0.0;
    double mean_false_p = 0.0;
    double duration_seconds = 0.0;
};

struct MonteCarloReport {
    std::string scenario;
    std::size_t max_globals = 0;
    int n_runs = 0;
    std::uint64_t seed = 0;
    double mean_rms_gospa = 0.0;
    double mean_localisation_p = 0.0;
    double mean_missed_p = 0.0;
    double mean_false_p = 0.0;
    double mean_runtime_seconds = 0.0;
    std::vector<RunRecord> runs;
};

namespace detail {
inline constexpr std::uint64_t kTruthStream = 1;
inline constexpr std::uint64_t kMeasurementStream = 2;
}  // namespace detail

/// Simulated truth and measurements for one run seed, without filtering.
inline std::pair<Truth, std::vector<std::vector<Vector>>> simulate(const Scenario& scenario, std::uint64_t truth_seed,
                                                                   std::uint64_t measurement_seed) {
    Rng truth_rng(truth_seed, detail::kTruthStream);
    Truth truth = make_truth(scenario, truth_rng);
    Rng rng(measurement_seed, detail::kMeasurementStream);
    std::vector<std::vector<Vector>> z;
    for (int k = 1; k <= scenario.duration; ++k)
        z.push_back(generate_measurements(truth[static_cast<std::size_t>(k - 1)], scenario, k, rng));
    return {std::move(truth), std::move(z)};
}

/// Scores per-step estimates against truth.
inline std::vector<GospaResult> score(const Truth& truth, const std::vector<std::vector<Estimate>>& estimates,
                                      const GospaParams& params) {
    if (truth.size() != estimates.size()) throw InputError("truth and estimates differ in step count");
    std::vector<GospaResult> out;
    for (std::size_t k = 0; k < truth.size(); ++k)
        out.push_back(gospa(truth_states(truth[k]), estimate_states(estimates[k]), params));
    return out;
}

/// Run r uses seed + r for its measurements; the truth uses the base seed
/// unless `truth_per_run` is set. Aggregates are summed in run order.
inline MonteCarloReport run_monte_carlo(const Scenario& scenario, const FilterParams& params,
                                        const MonteCarloConfig& config) {
    if (config.n_runs < 1) throw InputError("monte carlo: n_runs must be at least 1");
    scenario.validate();
    MonteCarloReport report;
    report.scenario = scenario.name;
    report.max_globals = params.max_globals;
    report.n_runs = config.n_runs;
    report.seed = config.seed;

    for (int r = 0; r < config.n_runs; ++r) {
        RunRecord rec;
        rec.seed = config.seed + static_cast<std::uint64_t>(r);
        auto [truth, z] = simulate(scenario, config.truth_per_run ? rec.seed : config.seed, rec.seed);
        rec.truth = std::move(truth);
        rec.measurements = std::move(z);

        const auto start = std::chrono::steady_clock::now();
        rec.estimates = run_filter(scenario, rec.measurements, params);
        rec.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        rec.gospa = score(rec.truth, rec.estimates, config.gospa);
        rec.rms_gospa = rms_gospa(rec.gospa);
        for (const auto& g : rec.gospa) {
            rec.mean_localisation_p += g.localisation_p;
            rec.mean_missed_p += g.missed_p;
            rec.mean_false_p += g.false_p;
        }
        const auto steps = static_cast<double>(rec.gospa.size());
        rec.mean_localisation_p /= steps;
        rec.mean_missed_p /= steps;
        rec.mean_false_p /= steps;

        report.mean_rms_gospa += rec.rms_gospa;
        report.mean_localisation_p += rec.mean_localisation_p;
        report.mean_missed_p += rec.mean_missed_p;
        report.mean_false_p += rec.mean_false_p;
        report.mean_runtime_seconds += rec.duration_seconds;
        report.runs.push_back(std::move(rec));
    }
    const auto n = static_cast<double>(config.n_runs);
    report.mean_rms_gospa /= n;
    report.mean_localisation_p /= n;
    report.mean_missed_p /= n;
    report.mean_false_p /= n;
    report.mean_runtime_seconds /= n;
    return report;
}

}  // namespace mbm
