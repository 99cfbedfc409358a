#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mbm/errors.hpp"

namespace mbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Single-target density N(x; mean, covariance).
struct GaussianDensity {
    Vector mean;
    Matrix covariance;

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// Linear-Gaussian motion/measurement model with constant survival and
/// detection probabilities and a constant clutter intensity kappa(z) over the
/// surveillance region.
struct LinearGaussianModel {
    Matrix transition;         // F
    Matrix process_noise;      // Q
    Matrix observation;        // H
    Matrix measurement_noise;  // R
    double survival_prob = 0.99;
    double detection_prob = 0.9;
    /// kappa(z) for z inside the region: lambda_c / |A|. Zero means no clutter.
    double clutter_intensity = 0.0;

    [[nodiscard]] Eigen::Index state_dim() const { return transition.rows(); }
    [[nodiscard]] Eigen::Index measurement_dim() const { return observation.rows(); }

    void validate() const {
        const auto nx = transition.rows();
        const auto nz = observation.rows();
        if (transition.cols() != nx || process_noise.rows() != nx || process_noise.cols() != nx)
            throw InputError("model: F and Q must be n_x by n_x");
        if (observation.cols() != nx)
            throw InputError("model: H must be n_z by n_x");
        if (measurement_noise.rows() != nz || measurement_noise.cols() != nz)
            throw InputError("model: R must be n_z by n_z");
        if (!(survival_prob >= 0.0 && survival_prob <= 1.0))
            throw InputError("model: survival probability outside [0,1]");
        if (!(detection_prob >= 0.0 && detection_prob <= 1.0))
            throw InputError("model: detection probability outside [0,1]");
        if (!(clutter_intensity >= 0.0) || !std::isfinite(clutter_intensity))
            throw InputError("model: clutter intensity must be finite and non-negative");
    }
};

/// Nearly-constant-velocity motion in 2D with position measurements: state
/// [p_x, v_x, p_y, v_y], F = I2 (x) [[1,T],[0,1]],
/// Q = q I2 (x) [[T^3/3, T^2/2],[T^2/2, T]], H = I2 (x) [1 0], R = r I2.
inline LinearGaussianModel constant_velocity_model(double sampling_time, double q, double measurement_var,
                                                   double survival_prob, double detection_prob,
                                                   double clutter_intensity) {
    const double T = sampling_time;
    Matrix f(2, 2), qb(2, 2), h(1, 2);
    f << 1.0, T, 0.0, 1.0;
    qb << T * T * T / 3.0, T * T / 2.0, T * T / 2.0, T;
    h << 1.0, 0.0;
    LinearGaussianModel m;
    m.transition = Eigen::kroneckerProduct(Matrix::Identity(2, 2), f);
    m.process_noise = q * Eigen::kroneckerProduct(Matrix::Identity(2, 2), qb);
    m.observation = Eigen::kroneckerProduct(Matrix::Identity(2, 2), h);
    m.measurement_noise = measurement_var * Matrix::Identity(2, 2);
    m.survival_prob = survival_prob;
    m.detection_prob = detection_prob;
    m.clutter_intensity = clutter_intensity;
    return m;
}

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

/// Relative pivot below which an innovation covariance is treated as singular.
inline constexpr double kSingularPivotRatio = 1e-12;

/// Pre-computed terms of a Kalman measurement update for one prior. The
/// posterior covariance and gain do not depend on the measurement, so a
/// prior can be updated against many measurements at the cost of one
/// factorization.
class InnovationTerms {
public:
    InnovationTerms(const GaussianDensity& prior, const LinearGaussianModel& model) : prior_mean_(prior.mean) {
        const auto nx = model.state_dim();
        if (prior.mean.size() != nx || prior.covariance.rows() != nx || prior.covariance.cols() != nx)
            throw InputError("kalman_update: prior dimension does not match model");
        const Matrix& H = model.observation;
        const Matrix PHt = prior.covariance * H.transpose();
        Matrix S = H * PHt + model.measurement_noise;
        symmetrize(S);
        predicted_measurement_ = H * prior.mean;

        factor_.compute(S);
        const Vector pivots = factor_.vectorD();
        const double largest = pivots.cwiseAbs().maxCoeff();
        const double smallest = pivots.minCoeff();
        if (factor_.info() != Eigen::Success || !(largest > 0.0) || smallest < kSingularPivotRatio * largest)
            throw NumericalError("degenerate innovation covariance S = H P H^T + R");

        double log_det = 0.0;
        for (Eigen::Index i = 0; i < pivots.size(); ++i) log_det += std::log(pivots[i]);
        log_normalizer_ = -0.5 * (static_cast<double>(S.rows()) * std::log(2.0 * std::numbers::pi) + log_det);

        gain_ = factor_.solve(PHt.transpose()).transpose();
        // Joseph form: (I - K H) P (I - K H)^T + K R K^T
        const Matrix A = Matrix::Identity(nx, nx) - gain_ * H;
        posterior_covariance_ = A * prior.covariance * A.transpose() + gain_ * model.measurement_noise * gain_.transpose();
        symmetrize(posterior_covariance_);
    }

    [[nodiscard]] const Vector& predicted_measurement() const { return predicted_measurement_; }
    [[nodiscard]] const Matrix& gain() const { return gain_; }
    [[nodiscard]] const Matrix& posterior_covariance() const { return posterior_covariance_; }

    /// Squared Mahalanobis distance of the innovation, (z - Hx)^T S^-1 (z - Hx).
    [[nodiscard]] double mahalanobis(const Vector& z) const {
        check_measurement(z);
        const Vector v = z - predicted_measurement_;
        return std::max(0.0, v.dot(factor_.solve(v)));
    }

    /// log N(z; H x, S)
    [[nodiscard]] double log_likelihood(const Vector& z) const { return log_normalizer_ - 0.5 * mahalanobis(z); }

    [[nodiscard]] GaussianDensity posterior(const Vector& z) const {
        check_measurement(z);
        return {prior_mean_ + gain_ * (z - predicted_measurement_), posterior_covariance_};
    }

private:
    void check_measurement(const Vector& z) const {
        if (z.size() != predicted_measurement_.size())
            throw InputError("measurement dimension does not match model");
    }

    Vector prior_mean_;
    Vector predicted_measurement_;
    Eigen::LDLT<Matrix> factor_;
    Matrix gain_;
    Matrix posterior_covariance_;
    double log_normalizer_ = 0.0;
};

inline GaussianDensity kalman_predict(const GaussianDensity& prior, const LinearGaussianModel& model) {
    const auto nx = model.state_dim();
    if (prior.mean.size() != nx || prior.covariance.rows() != nx || prior.covariance.cols() != nx)
        throw InputError("kalman_predict: prior dimension does not match model");
    const Matrix& F = model.transition;
    GaussianDensity out{F * prior.mean, F * prior.covariance * F.transpose() + model.process_noise};
    symmetrize(out.covariance);
    return out;
}

struct KalmanUpdate {
    GaussianDensity posterior;
    double predictive_loglik = 0.0;
};

inline KalmanUpdate kalman_update(const GaussianDensity& prior, const Vector& z, const LinearGaussianModel& model) {
    const InnovationTerms terms(prior, model);
    return {terms.posterior(z), terms.log_likelihood(z)};
}

inline double gating_statistic(const GaussianDensity& prior, const Vector& z, const LinearGaussianModel& model) {
    return InnovationTerms(prior, model).mahalanobis(z);
}

}  // namespace mbm
