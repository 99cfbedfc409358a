#pragma once

// Text formats used by the command-line tools.
//
// Point files hold one line per time step. A measurement line is a
// ';'-separated list of points with ','-separated coordinates; an empty line
// is a step without measurements. Estimate and truth lines prefix every
// point with its label as "t:l ", e.g. "1:0 140.5,0.1,170,-0.2;21:3 ...".
// Lines starting with '#' are comments. Numbers are written in the shortest
// form that reads back to the same double.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mbm/assignment.hpp"
#include "mbm/sim.hpp"

namespace mbm::io {

using PointSequence = std::vector<std::vector<Vector>>;
using LabeledSequence = std::vector<std::vector<LabeledState>>;

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] inline void fail(std::string_view what, int line, std::string_view detail) {
    throw InputError(std::string(what) + " line " + std::to_string(line) + ": " + std::string(detail));
}

inline double parse_double(std::string_view token, std::string_view what, int line) {
    token = trim(token);
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size())
        fail(what, line, "bad number '" + std::string(token) + "'");
    return v;
}

inline int parse_int(std::string_view token, std::string_view what, int line) {
    token = trim(token);
    int v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size())
        fail(what, line, "bad integer '" + std::string(token) + "'");
    return v;
}

inline Vector parse_point(std::string_view text, std::string_view what, int line) {
    const auto coords = split(text, ',');
    Vector v(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = parse_double(coords[i], what, line);
    if (!v.allFinite()) fail(what, line, "non-finite coordinate");
    return v;
}

inline void write_point(std::ostream& os, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_double(v[i]);
}

/// Calls `on_line(text, line_number)` for every non-comment line.
template <typename F>
void for_each_line(std::istream& is, F&& on_line) {
    std::string raw;
    int number = 0;
    while (std::getline(is, raw)) {
        ++number;
        const auto text = trim(raw);
        if (!text.empty() && text.front() == '#') continue;
        on_line(text, number);
    }
}

}  // namespace detail

inline PointSequence read_measurements(std::istream& is) {
    PointSequence out;
    detail::for_each_line(is, [&](std::string_view text, int line) {
        std::vector<Vector> step;
        if (!text.empty())
            for (auto item : detail::split(text, ';')) step.push_back(detail::parse_point(item, "measurements", line));
        out.push_back(std::move(step));
    });
    return out;
}

inline void write_measurements(std::ostream& os, const PointSequence& steps) {
    for (const auto& step : steps) {
        for (std::size_t i = 0; i < step.size(); ++i) {
            if (i) os << ';';
            detail::write_point(os, step[i]);
        }
        os << '\n';
    }
}

inline LabeledSequence read_labeled(std::istream& is) {
    LabeledSequence out;
    detail::for_each_line(is, [&](std::string_view text, int line) {
        std::vector<LabeledState> step;
        if (!text.empty())
            for (auto item : detail::split(text, ';')) {
                item = detail::trim(item);
                const auto space = item.find(' ');
                if (space == std::string_view::npos) detail::fail("labeled points", line, "missing 't:l' label");
                const auto label = detail::split(item.substr(0, space), ':');
                if (label.size() != 2) detail::fail("labeled points", line, "label must be 't:l'");
                step.push_back({Label{detail::parse_int(label[0], "labeled points", line),
                                      detail::parse_int(label[1], "labeled points", line)},
                                detail::parse_point(item.substr(space + 1), "labeled points", line)});
            }
        out.push_back(std::move(step));
    });
    return out;
}

inline void write_labeled(std::ostream& os, const LabeledSequence& steps) {
    for (const auto& step : steps) {
        for (std::size_t i = 0; i < step.size(); ++i) {
            if (i) os << ';';
            os << step[i].label.birth_time << ':' << step[i].label.birth_index << ' ';
            detail::write_point(os, step[i].state);
        }
        os << '\n';
    }
}

inline LabeledSequence to_labeled(const std::vector<std::vector<Estimate>>& estimates) {
    LabeledSequence out;
    for (const auto& step : estimates) {
        std::vector<LabeledState> s;
        for (const auto& e : step) s.push_back({e.label, e.state});
        out.push_back(std::move(s));
    }
    return out;
}

/// Rows of whitespace-separated numbers; `inf` marks a forbidden pairing.
inline CostMatrix read_cost_matrix(std::istream& is) {
    std::vector<std::vector<double>> rows;
    detail::for_each_line(is, [&](std::string_view text, int line) {
        if (text.empty()) return;
        std::vector<double> row;
        std::istringstream tokens{std::string(text)};
        std::string tok;
        while (tokens >> tok) {
            const double v = detail::parse_double(tok, "cost matrix", line);
            if (std::isnan(v) || v == -kForbidden) detail::fail("cost matrix", line, "entries must be finite or inf");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            detail::fail("cost matrix", line, "row length differs from the first row");
        rows.push_back(std::move(row));
    });
    CostMatrix c(static_cast<Eigen::Index>(rows.size()),
                 rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            c.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return c;
}

/// CSV with columns rank,cost,assignment; the assignment lists the column of
/// every row separated by spaces, -1 for unassigned.
inline void write_assignments(std::ostream& os, const std::vector<Assignment>& ranked) {
    os << "rank,cost,assignment\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        os << r + 1 << ',' << format_double(ranked[r].total_cost) << ',';
        for (std::size_t i = 0; i < ranked[r].row_to_col.size(); ++i) os << (i ? " " : "") << ranked[r].row_to_col[i];
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_gospa_csv(std::ostream& os, const std::vector<GospaResult>& steps) {
    os << "step,total,loc_p,missed_p,false_p,n_missed,n_false\n";
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& g = steps[k];
        os << k + 1 << ',' << format_double(g.total) << ',' << format_double(g.localisation_p) << ','
           << format_double(g.missed_p) << ',' << format_double(g.false_p) << ',' << g.n_missed << ',' << g.n_false
           << '\n';
    }
}

inline void write_gospa_summary(std::ostream& os, const std::vector<GospaResult>& steps) {
    double loc = 0.0, missed = 0.0, fals = 0.0;
    for (const auto& g : steps) {
        loc += g.localisation_p;
        missed += g.missed_p;
        fals += g.false_p;
    }
    const double n = steps.empty() ? 1.0 : static_cast<double>(steps.size());
    os << "steps,rms_gospa,mean_loc_p,mean_missed_p,mean_false_p\n"
       << steps.size() << ',' << format_double(rms_gospa(steps)) << ',' << format_double(loc / n) << ','
       << format_double(missed / n) << ',' << format_double(fals / n) << '\n';
}

inline void write_run_csv(std::ostream& os, const RunRecord& run) {
    os << "step,m_k,n_estimates,gospa_total,loc_p,missed_p,false_p\n";
    for (std::size_t k = 0; k < run.gospa.size(); ++k) {
        const auto& g = run.gospa[k];
        os << k + 1 << ',' << run.measurements[k].size() << ',' << run.estimates[k].size() << ','
           << format_double(g.total) << ',' << format_double(g.localisation_p) << ',' << format_double(g.missed_p)
           << ',' << format_double(g.false_p) << '\n';
    }
}

/// Deterministic aggregate table, one row per report. Wall-clock time lives
/// in the timing table so that this one is reproducible byte for byte.
inline void write_summary_csv(std::ostream& os, const std::vector<MonteCarloReport>& reports) {
    os << "scenario,max_globals,n_runs,seed,mean_rms_gospa,mean_loc_p,mean_missed_p,mean_false_p\n";
    for (const auto& r : reports)
        os << r.scenario << ',' << r.max_globals << ',' << r.n_runs << ',' << r.seed << ','
           << format_double(r.mean_rms_gospa) << ',' << format_double(r.mean_localisation_p) << ','
           << format_double(r.mean_missed_p) << ',' << format_double(r.mean_false_p) << '\n';
}

inline void write_timing_csv(std::ostream& os, const std::vector<MonteCarloReport>& reports) {
    os << "scenario,max_globals,n_runs,seed,mean_runtime_s\n";
    for (const auto& r : reports)
        os << r.scenario << ',' << r.max_globals << ',' << r.n_runs << ',' << r.seed << ','
           << format_double(r.mean_runtime_seconds) << '\n';
}

// ---------------------------------------------------------------------------
// scenario configuration

struct ScenarioConfig {
    Scenario scenario;
    FilterParams filter;
};

namespace detail {

using nlohmann::json;

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
    return rows;
}

inline Vector vector_from(const json& j, const char* key) {
    if (!j.is_array()) throw InputError(std::string("scenario: '") + key + "' must be an array");
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline Matrix matrix_from(const json& j, const char* key) {
    if (!j.is_array()) throw InputError(std::string("scenario: '") + key + "' must be an array of rows");
    Matrix m(static_cast<Eigen::Index>(j.size()), j.empty() ? 0 : static_cast<Eigen::Index>(j.front().size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Vector row = vector_from(j[i], key);
        if (row.size() != m.cols()) throw InputError(std::string("scenario: ragged matrix '") + key + "'");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok |= key == k;
        if (!ok) throw InputError("scenario: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
    using detail::to_json;
    const auto& s = cfg.scenario;
    const auto& f = cfg.filter;
    nlohmann::json births = nlohmann::json::array();
    for (const auto& b : s.birth.components)
        births.push_back({{"existence", b.existence}, {"mean", to_json(b.density.mean)},
                          {"covariance", to_json(b.density.covariance)}});
    return {
        {"name", s.name},
        {"sampling_time", s.sampling_time},
        {"process_noise_q", s.process_noise_q},
        {"measurement_variance", s.measurement_variance},
        {"survival_prob", s.model.survival_prob},
        {"detection_prob", s.model.detection_prob},
        {"detection_schedule", s.detection_schedule},
        {"clutter_rate", s.clutter_rate},
        {"region", {{"x_min", s.region.x_min}, {"x_max", s.region.x_max}, {"y_min", s.region.y_min},
                    {"y_max", s.region.y_max}}},
        {"duration", s.duration},
        {"birth_last_step", s.birth_last_step},
        {"birth", births},
        {"truth", {{"midpoint_step", s.truth.midpoint_step},
                   {"midpoint_mean", to_json(s.truth.midpoint_mean)},
                   {"midpoint_variance", s.truth.midpoint_variance},
                   {"birth_steps", s.truth.birth_steps},
                   {"death_steps", s.truth.death_steps}}},
        {"filter", {{"max_globals", f.max_globals},
                    {"gate_threshold", std::isinf(f.gate_threshold) ? nlohmann::json("inf") : nlohmann::json(f.gate_threshold)},
                    {"prune_global_weight", f.prune_global_weight},
                    {"prune_existence", f.prune_existence},
                    {"estimate_existence", f.estimate_existence},
                    {"track_labels", f.track_labels},
                    {"history_limit", f.history_limit}}},
    };
}

/// Keys that are absent keep the Scenario 1 and default filter values.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    using detail::read_if;
    if (!j.is_object()) throw InputError("scenario: top level must be an object");
    detail::reject_unknown(j,
                           {"name", "sampling_time", "process_noise_q", "measurement_variance", "survival_prob",
                            "detection_prob", "detection_schedule", "clutter_rate", "region", "duration",
                            "birth_last_step", "birth", "truth", "filter"},
                           "scenario");
    ScenarioConfig cfg{scenario1(), FilterParams{}};
    auto& s = cfg.scenario;
    try {
        read_if(j, "name", s.name);
        read_if(j, "sampling_time", s.sampling_time);
        read_if(j, "process_noise_q", s.process_noise_q);
        read_if(j, "measurement_variance", s.measurement_variance);
        read_if(j, "survival_prob", s.model.survival_prob);
        read_if(j, "detection_prob", s.model.detection_prob);
        read_if(j, "detection_schedule", s.detection_schedule);
        read_if(j, "clutter_rate", s.clutter_rate);
        read_if(j, "duration", s.duration);
        read_if(j, "birth_last_step", s.birth_last_step);
        if (j.contains("region")) {
            const auto& r = j.at("region");
            detail::reject_unknown(r, {"x_min", "x_max", "y_min", "y_max"}, "region");
            read_if(r, "x_min", s.region.x_min);
            read_if(r, "x_max", s.region.x_max);
            read_if(r, "y_min", s.region.y_min);
            read_if(r, "y_max", s.region.y_max);
        }
        if (j.contains("birth")) {
            s.birth.components.clear();
            for (const auto& b : j.at("birth")) {
                detail::reject_unknown(b, {"existence", "mean", "covariance"}, "birth");
                s.birth.components.push_back({b.at("existence").get<double>(),
                                              {detail::vector_from(b.at("mean"), "mean"),
                                               detail::matrix_from(b.at("covariance"), "covariance")}});
            }
        }
        if (j.contains("truth")) {
            const auto& t = j.at("truth");
            detail::reject_unknown(t, {"midpoint_step", "midpoint_mean", "midpoint_variance", "birth_steps", "death_steps"},
                                   "truth");
            read_if(t, "midpoint_step", s.truth.midpoint_step);
            if (t.contains("midpoint_mean")) s.truth.midpoint_mean = detail::vector_from(t.at("midpoint_mean"), "midpoint_mean");
            read_if(t, "midpoint_variance", s.truth.midpoint_variance);
            read_if(t, "birth_steps", s.truth.birth_steps);
            read_if(t, "death_steps", s.truth.death_steps);
        }
        if (j.contains("filter")) {
            const auto& f = j.at("filter");
            detail::reject_unknown(f,
                                   {"max_globals", "gate_threshold", "prune_global_weight", "prune_existence",
                                    "estimate_existence", "track_labels", "history_limit"},
                                   "filter");
            read_if(f, "max_globals", cfg.filter.max_globals);
            if (f.contains("gate_threshold")) {
                const auto& g = f.at("gate_threshold");
                cfg.filter.gate_threshold = g.is_string() && g.get<std::string>() == "inf"
                                                ? std::numeric_limits<double>::infinity()
                                                : g.get<double>();
            }
            read_if(f, "prune_global_weight", cfg.filter.prune_global_weight);
            read_if(f, "prune_existence", cfg.filter.prune_existence);
            read_if(f, "estimate_existence", cfg.filter.estimate_existence);
            read_if(f, "track_labels", cfg.filter.track_labels);
            read_if(f, "history_limit", cfg.filter.history_limit);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("scenario: ") + e.what());
    }
    s.rebuild_model();
    s.validate();
    return cfg;
}

inline ScenarioConfig read_scenario(std::istream& is) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("scenario: ") + e.what());
    }
    return scenario_from_json(j);
}

inline void write_scenario(std::ostream& os, const ScenarioConfig& cfg) { os << to_json(cfg).dump(2) << '\n'; }

}  // namespace mbm::io
