#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "mbm/errors.hpp"

namespace mbm {

/// Cost of an excluded pairing (an association removed by gating).
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

inline constexpr int kUnassigned = -1;

/// Rectangular cost matrix for partial assignment. Rows may stay unassigned
/// at `unassigned_row_cost` (zero when empty) and columns at
/// `unassigned_col_cost` (zero when empty); either slack may be kForbidden,
/// which makes assigning that row / column mandatory.
struct CostMatrix {
    Eigen::MatrixXd entries;
    Eigen::VectorXd unassigned_row_cost;
    Eigen::VectorXd unassigned_col_cost;

    CostMatrix() = default;
    explicit CostMatrix(Eigen::MatrixXd e) : entries(std::move(e)) {}
    CostMatrix(Eigen::Index rows, Eigen::Index cols) : entries(Eigen::MatrixXd::Zero(rows, cols)) {}

    [[nodiscard]] int rows() const { return static_cast<int>(entries.rows()); }
    [[nodiscard]] int cols() const { return static_cast<int>(entries.cols()); }

    [[nodiscard]] double row_slack(int i) const {
        return unassigned_row_cost.size() == 0 ? 0.0 : unassigned_row_cost[i];
    }
    [[nodiscard]] double col_slack(int j) const {
        return unassigned_col_cost.size() == 0 ? 0.0 : unassigned_col_cost[j];
    }

    static bool forbidden(double c) { return c == kForbidden; }

    void validate() const {
        if (unassigned_row_cost.size() != 0 && unassigned_row_cost.size() != entries.rows())
            throw InputError("cost matrix: row slack size mismatch");
        if (unassigned_col_cost.size() != 0 && unassigned_col_cost.size() != entries.cols())
            throw InputError("cost matrix: column slack size mismatch");
        auto ok = [](double c) { return !std::isnan(c) && c != -kForbidden; };
        for (Eigen::Index i = 0; i < entries.size(); ++i)
            if (!ok(entries.data()[i])) throw InputError("cost matrix: entries must be finite or forbidden");
        for (Eigen::Index i = 0; i < unassigned_row_cost.size(); ++i)
            if (!ok(unassigned_row_cost[i])) throw InputError("cost matrix: bad row slack");
        for (Eigen::Index i = 0; i < unassigned_col_cost.size(); ++i)
            if (!ok(unassigned_col_cost[i])) throw InputError("cost matrix: bad column slack");
    }
};

/// A partial injective assignment; row_to_col[i] == kUnassigned for rows left
/// unassigned.
struct Assignment {
    std::vector<int> row_to_col;
    double total_cost = 0.0;

    [[nodiscard]] std::size_t assigned_count() const {
        return static_cast<std::size_t>(
            std::count_if(row_to_col.begin(), row_to_col.end(), [](int c) { return c != kUnassigned; }));
    }

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Total cost of a partial assignment, accumulated rows first, then unassigned
/// columns. Returns kForbidden if a forbidden entry or slack is used.
inline double assignment_cost(const CostMatrix& costs, const std::vector<int>& row_to_col) {
    double total = 0.0;
    std::vector<char> used(static_cast<std::size_t>(costs.cols()), 0);
    for (int i = 0; i < costs.rows(); ++i) {
        const int j = row_to_col[static_cast<std::size_t>(i)];
        const double c = j == kUnassigned ? costs.row_slack(i) : costs.entries(i, j);
        if (CostMatrix::forbidden(c)) return kForbidden;
        if (j != kUnassigned) used[static_cast<std::size_t>(j)] = 1;
        total += c;
    }
    for (int j = 0; j < costs.cols(); ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double c = costs.col_slack(j);
        if (CostMatrix::forbidden(c)) return kForbidden;
        total += c;
    }
    return total;
}

/// Ranking used everywhere: cost, then lexicographic row_to_col with
/// "unassigned" (-1) before column 0.
inline bool ranks_before(const Assignment& a, const Assignment& b) {
    if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
    return a.row_to_col < b.row_to_col;
}

namespace detail {

/// Dense square min-cost perfect matching (shortest augmenting path with
/// potentials). Keeps the dual variables so that the equality subgraph of the
/// optimum can be inspected afterwards.
class SquareHungarian {
public:
    void solve(const std::vector<double>& cost, int n) {
        n_ = n;
        const double inf = std::numeric_limits<double>::infinity();
        u_.assign(static_cast<std::size_t>(n + 1), 0.0);
        v_.assign(static_cast<std::size_t>(n + 1), 0.0);
        std::vector<int> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
        std::vector<double> minv(static_cast<std::size_t>(n + 1));
        std::vector<char> used(static_cast<std::size_t>(n + 1));
        for (int i = 1; i <= n; ++i) {
            p[0] = i;
            int j0 = 0;
            std::fill(minv.begin(), minv.end(), inf);
            std::fill(used.begin(), used.end(), 0);
            do {
                used[static_cast<std::size_t>(j0)] = 1;
                const int i0 = p[static_cast<std::size_t>(j0)];
                double delta = inf;
                int j1 = 0;
                const double* row = &cost[static_cast<std::size_t>(i0 - 1) * static_cast<std::size_t>(n)];
                for (int j = 1; j <= n; ++j) {
                    if (used[static_cast<std::size_t>(j)]) continue;
                    const double cur = row[j - 1] - u_[static_cast<std::size_t>(i0)] - v_[static_cast<std::size_t>(j)];
                    if (cur < minv[static_cast<std::size_t>(j)]) {
                        minv[static_cast<std::size_t>(j)] = cur;
                        way[static_cast<std::size_t>(j)] = j0;
                    }
                    if (minv[static_cast<std::size_t>(j)] < delta) {
                        delta = minv[static_cast<std::size_t>(j)];
                        j1 = j;
                    }
                }
                for (int j = 0; j <= n; ++j) {
                    if (used[static_cast<std::size_t>(j)]) {
                        u_[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                        v_[static_cast<std::size_t>(j)] -= delta;
                    } else {
                        minv[static_cast<std::size_t>(j)] -= delta;
                    }
                }
                j0 = j1;
            } while (p[static_cast<std::size_t>(j0)] != 0);
            do {
                const int j1 = way[static_cast<std::size_t>(j0)];
                p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
                j0 = j1;
            } while (j0 != 0);
        }
        col_of_row_.assign(static_cast<std::size_t>(n), -1);
        row_of_col_.assign(static_cast<std::size_t>(n), -1);
        for (int j = 1; j <= n; ++j) {
            const int i = p[static_cast<std::size_t>(j)];
            if (i != 0) {
                col_of_row_[static_cast<std::size_t>(i - 1)] = j - 1;
                row_of_col_[static_cast<std::size_t>(j - 1)] = i - 1;
            }
        }
    }

    [[nodiscard]] double reduced_cost(const std::vector<double>& cost, int r, int c) const {
        return cost[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(c)] -
               u_[static_cast<std::size_t>(r + 1)] - v_[static_cast<std::size_t>(c + 1)];
    }

    std::vector<int> col_of_row_;
    std::vector<int> row_of_col_;

private:
    int n_ = 0;
    std::vector<double> u_, v_;
};

/// Solves partial-assignment subproblems given, per row, which options are
/// still allowed. Option 0 is "unassigned", option j+1 is column j.
class PartialAssignmentSolver {
public:
    explicit PartialAssignmentSolver(const CostMatrix& costs) : costs_(costs), n_(costs.rows()), m_(costs.cols()) {
        double largest = 0.0;
        auto track = [&](double c) {
            if (!CostMatrix::forbidden(c)) largest = std::max(largest, std::abs(c));
        };
        for (Eigen::Index i = 0; i < costs.entries.size(); ++i) track(costs.entries.data()[i]);
        for (int i = 0; i < n_; ++i) track(costs.row_slack(i));
        for (int j = 0; j < m_; ++j) track(costs.col_slack(j));
        const double dim = static_cast<double>(n_ + m_);
        big_ = (2.0 * dim + 1.0) * largest + 1.0;
        tolerance_ = 1e-9 * (1.0 + largest);
    }

    [[nodiscard]] int options() const { return m_ + 1; }

    [[nodiscard]] std::vector<std::uint8_t> root_constraints() const {
        std::vector<std::uint8_t> allowed(static_cast<std::size_t>(n_ * options()), 0);
        for (int i = 0; i < n_; ++i) {
            allowed[index(i, 0)] = CostMatrix::forbidden(costs_.row_slack(i)) ? 0 : 1;
            for (int j = 0; j < m_; ++j)
                allowed[index(i, j + 1)] = CostMatrix::forbidden(costs_.entries(i, j)) ? 0 : 1;
        }
        return allowed;
    }

    [[nodiscard]] std::size_t index(int row, int option) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(options()) + static_cast<std::size_t>(option);
    }

    /// Minimum-cost assignment respecting `allowed`, ties resolved to the
    /// lexicographically smallest row_to_col. nullopt if infeasible.
    [[nodiscard]] std::optional<Assignment> solve(const std::vector<std::uint8_t>& allowed) {
        Assignment out;
        out.row_to_col.assign(static_cast<std::size_t>(n_), kUnassigned);

        // Rows with a single allowed option are settled up front and removed
        // from the matching together with their column.
        std::vector<char> col_taken(static_cast<std::size_t>(m_), 0);
        std::vector<int> free_rows;
        for (int i = 0; i < n_; ++i) {
            int count = 0, last = -1;
            for (int o = 0; o < options(); ++o)
                if (allowed[index(i, o)]) {
                    ++count;
                    last = o;
                }
            if (count == 0) return std::nullopt;
            if (count == 1) {
                if (last > 0) {
                    if (col_taken[static_cast<std::size_t>(last - 1)]) return std::nullopt;
                    col_taken[static_cast<std::size_t>(last - 1)] = 1;
                }
                out.row_to_col[static_cast<std::size_t>(i)] = last - 1;
            } else {
                free_rows.push_back(i);
            }
        }
        // Columns no free row may take are left unassigned outright.
        std::vector<int> free_cols;
        for (int j = 0; j < m_; ++j) {
            if (col_taken[static_cast<std::size_t>(j)]) continue;
            const bool reachable = std::any_of(free_rows.begin(), free_rows.end(),
                                               [&](int i) { return allowed[index(i, j + 1)] != 0; });
            if (reachable)
                free_cols.push_back(j);
            else if (CostMatrix::forbidden(costs_.col_slack(j)))
                return std::nullopt;
        }

        const int nr = static_cast<int>(free_rows.size());
        const int nc = static_cast<int>(free_cols.size());
        if (nr > 0 || nc > 0) {
            if (!match(allowed, free_rows, free_cols, out.row_to_col)) return std::nullopt;
        }
        out.total_cost = assignment_cost(costs_, out.row_to_col);
        if (CostMatrix::forbidden(out.total_cost)) return std::nullopt;
        return out;
    }

private:
    // Augmented square problem over the free rows/cols:
    //   rows 0..nr-1 real, nr..nr+nc-1 column dummies ("column j unassigned")
    //   cols 0..nc-1 real, nc..nc+nr-1 row dummies ("row i unassigned")
    bool match(const std::vector<std::uint8_t>& allowed, const std::vector<int>& rows, const std::vector<int>& cols,
               std::vector<int>& row_to_col) {
        const int nr = static_cast<int>(rows.size());
        const int nc = static_cast<int>(cols.size());
        const int N = nr + nc;
        cost_.assign(static_cast<std::size_t>(N) * static_cast<std::size_t>(N), big_);
        usable_.assign(static_cast<std::size_t>(N) * static_cast<std::size_t>(N), 0);
        auto set = [&](int r, int c, double v) {
            const auto k = static_cast<std::size_t>(r) * static_cast<std::size_t>(N) + static_cast<std::size_t>(c);
            cost_[k] = v;
            usable_[k] = 1;
        };
        for (int a = 0; a < nr; ++a) {
            const int i = rows[static_cast<std::size_t>(a)];
            for (int b = 0; b < nc; ++b) {
                const int j = cols[static_cast<std::size_t>(b)];
                if (allowed[index(i, j + 1)]) set(a, b, costs_.entries(i, j));
            }
            if (allowed[index(i, 0)]) set(a, nc + a, costs_.row_slack(i));
        }
        for (int b = 0; b < nc; ++b) {
            const double slack = costs_.col_slack(cols[static_cast<std::size_t>(b)]);
            if (!CostMatrix::forbidden(slack)) set(nr + b, b, slack);
            for (int a = 0; a < nr; ++a) set(nr + b, nc + a, 0.0);
        }

        hungarian_.solve(cost_, N);
        for (int r = 0; r < N; ++r)
            if (!usable_[static_cast<std::size_t>(r) * static_cast<std::size_t>(N) +
                         static_cast<std::size_t>(hungarian_.col_of_row_[static_cast<std::size_t>(r)])])
                return false;

        lexicographic_refine(N, nr, nc);

        for (int a = 0; a < nr; ++a) {
            const int c = hungarian_.col_of_row_[static_cast<std::size_t>(a)];
            row_to_col[static_cast<std::size_t>(rows[static_cast<std::size_t>(a)])] =
                c < nc ? cols[static_cast<std::size_t>(c)] : kUnassigned;
        }
        return true;
    }

    [[nodiscard]] bool tight(int N, int r, int c) const {
        const auto k = static_cast<std::size_t>(r) * static_cast<std::size_t>(N) + static_cast<std::size_t>(c);
        return usable_[k] && std::abs(hungarian_.reduced_cost(cost_, r, c)) <= tolerance_;
    }

    // Among all optimal matchings (perfect matchings of the equality
    // subgraph), walk real rows in order and move each to its smallest
    // option that still admits a completion, keeping earlier rows fixed.
    void lexicographic_refine(int N, int nr, int nc) {
        auto& col_of_row = hungarian_.col_of_row_;
        auto& row_of_col = hungarian_.row_of_col_;
        std::vector<char> fixed(static_cast<std::size_t>(N), 0);
        std::vector<char> visited(static_cast<std::size_t>(N));
        // lexicographic rank of an augmented column for real row a
        auto rank = [&](int a, int c) { return c == nc + a ? -1 : (c < nc ? c : N + c); };

        for (int a = 0; a < nr; ++a) {
            const int current = col_of_row[static_cast<std::size_t>(a)];
            std::vector<int> candidates;
            if (nc + a != current) candidates.push_back(nc + a);
            for (int c = 0; c < nc; ++c) candidates.push_back(c);
            for (int c : candidates) {
                if (rank(a, c) >= rank(a, current)) break;
                if (!tight(N, a, c)) continue;
                const int displaced = row_of_col[static_cast<std::size_t>(c)];
                if (fixed[static_cast<std::size_t>(displaced)]) continue;
                // tentatively move a -> c; the displaced row must reach `current`
                col_of_row[static_cast<std::size_t>(a)] = c;
                row_of_col[static_cast<std::size_t>(c)] = a;
                fixed[static_cast<std::size_t>(a)] = 1;
                std::fill(visited.begin(), visited.end(), 0);
                if (augment(N, displaced, current, fixed, visited)) break;
                // revert
                fixed[static_cast<std::size_t>(a)] = 0;
                col_of_row[static_cast<std::size_t>(a)] = current;
                row_of_col[static_cast<std::size_t>(current)] = a;
                row_of_col[static_cast<std::size_t>(c)] = displaced;
                col_of_row[static_cast<std::size_t>(displaced)] = c;
            }
            fixed[static_cast<std::size_t>(a)] = 1;
        }
    }

    // Alternating path search from free row r to the free column `target`.
    bool augment(int N, int r, int target, const std::vector<char>& fixed, std::vector<char>& visited) {
        auto& col_of_row = hungarian_.col_of_row_;
        auto& row_of_col = hungarian_.row_of_col_;
        for (int c = 0; c < N; ++c) {
            if (visited[static_cast<std::size_t>(c)] || !tight(N, r, c)) continue;
            visited[static_cast<std::size_t>(c)] = 1;
            if (c == target) {
                col_of_row[static_cast<std::size_t>(r)] = c;
                row_of_col[static_cast<std::size_t>(c)] = r;
                return true;
            }
            const int next = row_of_col[static_cast<std::size_t>(c)];
            if (fixed[static_cast<std::size_t>(next)]) continue;
            if (augment(N, next, target, fixed, visited)) {
                col_of_row[static_cast<std::size_t>(r)] = c;
                row_of_col[static_cast<std::size_t>(c)] = r;
                return true;
            }
        }
        return false;
    }

    const CostMatrix& costs_;
    int n_;
    int m_;
    double big_ = 1.0;
    double tolerance_ = 1e-9;
    std::vector<double> cost_;
    std::vector<std::uint8_t> usable_;
    SquareHungarian hungarian_;
};

}  // namespace detail

/// Ranked enumeration of the k lowest-cost partial assignments (Murty's
/// algorithm over the partial-assignment formulation). Output is ordered by
/// ranks_before; fewer than k are returned when fewer are feasible.
inline std::vector<Assignment> k_best(const CostMatrix& costs, std::size_t k) {
    costs.validate();
    std::vector<Assignment> out;
    if (k == 0) return out;

    detail::PartialAssignmentSolver solver(costs);
    const int n = costs.rows();
    const int options = solver.options();

    struct Node {
        std::vector<std::uint8_t> allowed;
        Assignment solution;
    };
    auto worse = [](const Node& a, const Node& b) { return ranks_before(b.solution, a.solution); };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> queue(worse);

    {
        auto root = solver.root_constraints();
        auto sol = solver.solve(root);
        if (!sol) return out;
        queue.push(Node{std::move(root), std::move(*sol)});
    }

    while (!queue.empty() && out.size() < k) {
        Node node = queue.top();
        queue.pop();
        out.push_back(node.solution);
        if (out.size() == k) break;

        // Partition the remaining space of this node: child t fixes rows < t
        // to the node's solution and forbids row t's chosen option.
        std::vector<std::uint8_t> allowed = node.allowed;
        for (int t = 0; t < n; ++t) {
            const int chosen = node.solution.row_to_col[static_cast<std::size_t>(t)] + 1;
            int alternatives = 0;
            for (int o = 0; o < options; ++o)
                if (o != chosen && allowed[solver.index(t, o)]) ++alternatives;
            if (alternatives > 0) {
                std::vector<std::uint8_t> child = allowed;
                child[solver.index(t, chosen)] = 0;
                if (auto sol = solver.solve(child)) queue.push(Node{std::move(child), std::move(*sol)});
            }
            for (int o = 0; o < options; ++o) allowed[solver.index(t, o)] = o == chosen ? 1 : 0;
        }
    }
    return out;
}

/// Minimum-cost partial assignment. Throws NumericalError when mandatory
/// slack constraints make the problem infeasible.
inline Assignment solve_optimal(const CostMatrix& costs) {
    auto best = k_best(costs, 1);
    if (best.empty()) throw NumericalError("assignment problem has no feasible solution");
    return std::move(best.front());
}

}  // namespace mbm
