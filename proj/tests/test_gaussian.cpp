#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mbm/gaussian.hpp"
#include "oracles.hpp"

using namespace mbm;

namespace {

LinearGaussianModel model_1d(double r) {
    LinearGaussianModel m;
    m.transition = Matrix::Identity(1, 1);
    m.process_noise = Matrix::Zero(1, 1);
    m.observation = Matrix::Identity(1, 1);
    m.measurement_noise = Matrix::Constant(1, 1, r);
    return m;
}

Matrix random_spd(std::mt19937_64& rng, int n, double floor = 0.1) { return oracle::random_spd(rng, n, floor); }

}  // namespace

TEST(KalmanPredict, IdentityDynamicsLeavesDensityUnchanged) {
    LinearGaussianModel m;
    m.transition = Matrix::Identity(3, 3);
    m.process_noise = Matrix::Zero(3, 3);
    m.observation = Matrix::Identity(1, 3);
    m.measurement_noise = Matrix::Identity(1, 1);
    std::mt19937_64 rng(3);
    GaussianDensity prior{Vector::Random(3), random_spd(rng, 3)};
    const auto out = kalman_predict(prior, m);
    EXPECT_TRUE(out.mean.isApprox(prior.mean, 1e-15));
    EXPECT_TRUE(out.covariance.isApprox(prior.covariance, 1e-14));
}

TEST(KalmanPredict, ConstantVelocityBlock) {
    LinearGaussianModel m;
    m.transition = (Matrix(2, 2) << 1, 1, 0, 1).finished();
    m.process_noise = Matrix::Zero(2, 2);
    m.observation = Matrix::Identity(1, 2);
    m.measurement_noise = Matrix::Identity(1, 1);
    GaussianDensity prior{(Vector(2) << 0, 1).finished(), Matrix::Identity(2, 2)};
    const auto out = kalman_predict(prior, m);
    EXPECT_DOUBLE_EQ(out.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(out.mean[1], 1.0);
    EXPECT_DOUBLE_EQ(out.covariance(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.covariance(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(out.covariance(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.covariance(1, 1), 1.0);
}

TEST(KalmanPredict, ScenarioDynamicsMatchesExplicitArithmetic) {
    const auto model = constant_velocity_model(1.0, 0.01, 1.0, 0.99, 0.9, 0.0);
    GaussianDensity prior{Vector::Zero(4), Matrix::Identity(4, 4)};
    const auto out = kalman_predict(prior, model);

    // F = I2 (x) [[1,T],[0,1]], Q = q I2 (x) [[T^3/3, T^2/2],[T^2/2, T]] written out by hand
    const double T = 1.0, q = 0.01;
    double F[4][4] = {{1, T, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, T}, {0, 0, 0, 1}};
    double Q[4][4] = {{q * T * T * T / 3, q * T * T / 2, 0, 0},
                      {q * T * T / 2, q * T, 0, 0},
                      {0, 0, q * T * T * T / 3, q * T * T / 2},
                      {0, 0, q * T * T / 2, q * T}};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double fpf = 0.0;  // (F I F^T)_{ij} = sum_k F_ik F_jk
            for (int k = 0; k < 4; ++k) fpf += F[i][k] * F[j][k];
            EXPECT_NEAR(out.covariance(i, j), fpf + Q[i][j], 1e-15) << i << "," << j;
        }
        EXPECT_EQ(out.mean[i], 0.0);
    }
}

TEST(KalmanPredict, DimensionMismatchIsInputError) {
    const auto model = constant_velocity_model(1.0, 0.01, 1.0, 0.99, 0.9, 0.0);
    GaussianDensity prior{Vector::Zero(3), Matrix::Identity(3, 3)};
    EXPECT_THROW(kalman_predict(prior, model), InputError);
    GaussianDensity ok{Vector::Zero(4), Matrix::Identity(4, 4)};
    EXPECT_THROW(kalman_update(ok, Vector::Zero(3), model), InputError);
}

TEST(KalmanUpdate, ScalarBayesProduct) {
    const auto m = model_1d(1.0);
    GaussianDensity prior{Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 1.0)};
    const auto up = kalman_update(prior, Vector::Constant(1, 2.0), m);
    EXPECT_NEAR(up.posterior.mean[0], 1.0, 1e-15);
    EXPECT_NEAR(up.posterior.covariance(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(up.predictive_loglik, oracle::log_normal_pdf(2.0, 0.0, 2.0), 1e-14);
}

TEST(KalmanUpdate, UninformativeMeasurementKeepsPrior) {
    LinearGaussianModel m;
    m.transition = Matrix::Identity(2, 2);
    m.process_noise = Matrix::Zero(2, 2);
    m.observation = Matrix::Identity(2, 2);
    m.measurement_noise = 1e12 * Matrix::Identity(2, 2);
    std::mt19937_64 rng(5);
    GaussianDensity prior{(Vector(2) << 3.0, -1.0).finished(), random_spd(rng, 2)};
    const auto up = kalman_update(prior, (Vector(2) << 10.0, 20.0).finished(), m);
    EXPECT_LT((up.posterior.mean - prior.mean).norm() / prior.mean.norm(), 1e-6);
    EXPECT_LT((up.posterior.covariance - prior.covariance).norm() / prior.covariance.norm(), 1e-6);
}

TEST(KalmanUpdate, Random2dMatchesInformationForm) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        LinearGaussianModel m;
        m.transition = Matrix::Identity(2, 2);
        m.process_noise = Matrix::Zero(2, 2);
        m.observation = Matrix::Random(2, 2) + 2.0 * Matrix::Identity(2, 2);
        m.measurement_noise = random_spd(rng, 2, 0.5);
        GaussianDensity prior{(Vector(2) << g(rng), g(rng)).finished(), random_spd(rng, 2, 0.5)};
        const Vector z = (Vector(2) << g(rng), g(rng)).finished();
        const auto up = kalman_update(prior, z, m);
        const auto ref =
            oracle::information_form_posterior(prior.mean, prior.covariance, z, m.observation, m.measurement_noise);
        EXPECT_LT((up.posterior.mean - ref.mean).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((up.posterior.covariance - ref.covariance).cwiseAbs().maxCoeff(), 1e-10);
        // symmetric and dominated by the prior
        EXPECT_EQ((up.posterior.covariance - up.posterior.covariance.transpose()).norm(), 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(prior.covariance - up.posterior.covariance);
        EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
    }
}

TEST(KalmanUpdate, Random1dMatchesGridProduct) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-3.0, 3.0), s(0.3, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double x0 = u(rng), p0 = s(rng) * s(rng), r = s(rng) * s(rng), h = s(rng), z = u(rng);
        auto m = model_1d(r);
        m.observation(0, 0) = h;
        const auto up = kalman_update({Vector::Constant(1, x0), Matrix::Constant(1, 1, p0)}, Vector::Constant(1, z), m);

        const auto ref = oracle::grid_posterior_1d(x0, p0, h, r, z);
        EXPECT_NEAR(up.posterior.mean[0], ref.mean, 1e-8);
        EXPECT_NEAR(up.posterior.covariance(0, 0), ref.variance, 1e-8);
        EXPECT_NEAR(up.predictive_loglik, ref.log_evidence, 1e-8);
    }
}

TEST(KalmanUpdate, PredictiveLikelihoodIntegratesToOne) {
    auto m = model_1d(0.7);
    GaussianDensity prior{Vector::Constant(1, 1.5), Matrix::Constant(1, 1, 2.0)};
    const InnovationTerms terms(prior, m);
    double total = 0.0;
    const double dz = 1e-3;
    for (double z = -30.0; z <= 30.0; z += dz) total += std::exp(terms.log_likelihood(Vector::Constant(1, z))) * dz;
    EXPECT_NEAR(total, 1.0, 1e-4);
}

TEST(KalmanUpdate, DegenerateInnovationCovarianceIsNumericalError) {
    auto m = model_1d(0.0);
    GaussianDensity prior{Vector::Zero(1), Matrix::Zero(1, 1)};
    EXPECT_THROW(kalman_update(prior, Vector::Zero(1), m), NumericalError);
    EXPECT_THROW(gating_statistic(prior, Vector::Zero(1), m), NumericalError);
}

TEST(Gating, ZeroInnovation) {
    const auto model = constant_velocity_model(1.0, 0.01, 1.0, 0.99, 0.9, 0.0);
    GaussianDensity prior{(Vector(4) << 1, 2, 3, 4).finished(), Matrix::Identity(4, 4)};
    EXPECT_NEAR(gating_statistic(prior, model.observation * prior.mean, model), 0.0, 1e-15);
}

TEST(Gating, ScalarEvaluation) {
    const auto m = model_1d(1.0);
    GaussianDensity prior{Vector::Zero(1), Matrix::Zero(1, 1)};
    EXPECT_DOUBLE_EQ(gating_statistic(prior, Vector::Constant(1, 3.0), m), 9.0);
}

TEST(Gating, InvariantUnderOrthogonalMeasurementRotation) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> angle(0.0, 6.28);
    for (int trial = 0; trial < 20; ++trial) {
        LinearGaussianModel m = constant_velocity_model(1.0, 0.01, 1.0, 0.99, 0.9, 0.0);
        m.measurement_noise = random_spd(rng, 2, 0.2);
        GaussianDensity prior{Vector::Random(4) * 10.0, random_spd(rng, 4)};
        const Vector z = Vector::Random(2) * 5.0;
        const double base = gating_statistic(prior, z, m);

        const double a = angle(rng);
        const Matrix U = (Matrix(2, 2) << std::cos(a), -std::sin(a), std::sin(a), std::cos(a)).finished();
        LinearGaussianModel rotated = m;
        rotated.observation = U * m.observation;
        rotated.measurement_noise = U * m.measurement_noise * U.transpose();
        EXPECT_NEAR(gating_statistic(prior, U * z, rotated), base, 1e-9 * (1.0 + base));
        EXPECT_GE(base, 0.0);
    }
}
