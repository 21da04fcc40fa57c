#include "splitheat/propagator.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace splitheat {
namespace {

/// exp(-tau M_L^{-1} S) through the symmetric similarity
/// M_L^{1/2} (M_L^{-1} S) M_L^{-1/2} and its eigendecomposition.
Eigen::MatrixXd eigen_propagator(const FemOperators& ops, double tau) {
    const Eigen::VectorXd sq = ops.lumped_mass.cwiseSqrt();
    const Eigen::VectorXd inv_sq = sq.cwiseInverse();
    const Eigen::MatrixXd sym = inv_sq.asDiagonal() * Eigen::MatrixXd(ops.stiffness) * inv_sq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    const Eigen::VectorXd decay = (-tau * eig.eigenvalues().array()).exp();
    return inv_sq.asDiagonal() * eig.eigenvectors() * decay.asDiagonal() * eig.eigenvectors().transpose() * sq.asDiagonal();
}

double sin_sin(double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); }

TEST(Expm, KnownMatrices) {
    Eigen::Matrix2d nil;
    nil << 0, 1, 0, 0;
    Eigen::Matrix2d nil_exp;
    nil_exp << 1, 1, 0, 1;
    EXPECT_LE((expm(nil) - nil_exp).cwiseAbs().maxCoeff(), 1e-15);

    // cover every Pade degree and the scaled branch
    for (double theta : {0.005, 0.1, 0.5, 1.5, 4.0, 40.0}) {
        Eigen::Matrix2d rot;
        rot << 0, -theta, theta, 0;
        Eigen::Matrix2d expected;
        expected << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        EXPECT_LE((expm(rot) - expected).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, theta)) << theta;
    }
    Eigen::Matrix3d diag = Eigen::Vector3d(-50.0, 3.0, 0.25).asDiagonal();
    const Eigen::MatrixXd e = expm(diag);
    EXPECT_NEAR(e(0, 0), std::exp(-50.0), 1e-30);
    EXPECT_NEAR(e(1, 1), std::exp(3.0), 1e-13 * std::exp(3.0));
    EXPECT_NEAR(e(2, 2), std::exp(0.25), 1e-14);
    EXPECT_THROW(expm(Eigen::MatrixXd::Zero(2, 3)), Error);
}

TEST(Propagator, ZeroStepIsIdentity) {
    const FemOperators ops = assemble(build_uniform_unit_square(5));
    const HeatPropagator p = build_propagator(ops, 0.0);
    EXPECT_EQ(p.matrix, Eigen::MatrixXd::Identity(16, 16));
    EXPECT_EQ(p.min_entry, 0.0);
    const auto cert = certify_nonnegative(p, 1e-12);
    EXPECT_TRUE(cert.passed);
    EXPECT_EQ(cert.min_entry, 0.0);
}

TEST(Propagator, SingleNodeIsScalarExponential) {
    const FemOperators ops = assemble(build_uniform_unit_square(2));
    ASSERT_EQ(ops.n_h, 1u);
    EXPECT_DOUBLE_EQ(ops.lumped_mass[0], 0.25);
    EXPECT_DOUBLE_EQ(ops.stiffness.coeff(0, 0), 4.0);
    for (double tau : {0.0, 1e-3, 0.0625, 0.5}) EXPECT_NEAR(build_propagator(ops, tau).matrix(0, 0), std::exp(-16.0 * tau), 1e-15);
}

TEST(Propagator, NonnegativeOnWeaklyAcuteMeshes) {
    const HeatPropagator p4 = build_propagator(assemble(build_uniform_unit_square(4)), 0.0625);
    EXPECT_GE(p4.min_entry, -1e-12);
    for (std::size_t N : {4u, 8u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        for (int e = 4; e <= 13; ++e) {
            const auto cert = certify_nonnegative(build_propagator(ops, std::ldexp(1.0, -e)), 1e-12);
            EXPECT_TRUE(cert.passed) << "N=" << N << " tau=2^-" << e << " min=" << cert.min_entry;
            EXPECT_TRUE(cert.metzler);
        }
    }
}

TEST(Propagator, PerturbedStiffnessFailsMetzler) {
    FemOperators ops = assemble(build_uniform_unit_square(4));
    ops.stiffness.coeffRef(0, 1) = 0.5;
    ops.stiffness.coeffRef(1, 0) = 0.5;
    EXPECT_FALSE(is_metzler(ops));
    const auto cert = certify_nonnegative(build_propagator(ops, 0.01));
    EXPECT_FALSE(cert.metzler);
    EXPECT_FALSE(cert.passed);
}

TEST(Propagator, DenseLimit) {
    const FemOperators ops = assemble(build_uniform_unit_square(8));
    EXPECT_THROW(build_propagator(ops, 0.1, 10), Error);
    EXPECT_THROW(build_propagator(ops, -1.0), Error);
}

TEST(Propagator, ApplyBasics) {
    const FemOperators ops = assemble(build_uniform_unit_square(8));
    const HeatPropagator p = build_propagator(ops, 1.0 / 64);
    EXPECT_EQ(apply(p, NodalVector::Zero(49)), NodalVector::Zero(49));
    EXPECT_THROW(apply(p, NodalVector::Zero(48)), Error);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        NodalVector v(49);
        for (auto& c : v) c = trial % 2 ? u(rng) : (u(rng) < 0.8 ? 0.0 : u(rng));
        EXPECT_GE(apply(p, v).minCoeff(), 0.0);
    }
}

TEST(Propagator, SineModeIsEigenvector) {
    const Mesh mesh = build_uniform_unit_square(16);
    const FemOperators ops = assemble(mesh);
    const NodalVector v = nodal_interpolant(sin_sin, mesh);
    const double mu = v.dot(ops.stiffness * v) / v.dot(ops.lumped_mass.cwiseProduct(v));
    EXPECT_NEAR(mu, 2.0 * std::numbers::pi * std::numbers::pi, 0.01 * 2.0 * std::numbers::pi * std::numbers::pi);
    for (double tau : {1.0 / 16, 1.0 / 128, 0.5}) {
        const NodalVector w = apply(build_propagator(ops, tau), v);
        EXPECT_LE((w - std::exp(-mu * tau) * v).norm(), 1e-3 * std::exp(-mu * tau) * v.norm()) << tau;
    }
    // the discrete eigenvalue approaches 2 pi^2 under refinement
    const Mesh fine = build_uniform_unit_square(64);
    const FemOperators fops = assemble(fine);
    const NodalVector vf = nodal_interpolant(sin_sin, fine);
    const double mu_fine = vf.dot(fops.stiffness * vf) / vf.dot(fops.lumped_mass.cwiseProduct(vf));
    EXPECT_LT(std::abs(mu_fine - 2 * std::numbers::pi * std::numbers::pi), std::abs(mu - 2 * std::numbers::pi * std::numbers::pi));
}

TEST(Propagator, SemigroupProperty) {
    for (std::size_t N : {4u, 8u, 16u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        for (double tau : {1.0 / 16, 1.0 / 1024}) {
            const Eigen::MatrixXd one = build_propagator(ops, tau).matrix;
            const Eigen::MatrixXd two = build_propagator(ops, 2 * tau).matrix;
            EXPECT_LE((two - one * one).cwiseAbs().maxCoeff(), 1e-10) << "N=" << N << " tau=" << tau;
        }
    }
}

TEST(Propagator, SubStochasticAndSelfAdjoint) {
    for (std::size_t N : {4u, 8u, 16u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        const HeatPropagator p = build_propagator(ops, 1.0 / 32);
        EXPECT_LE(p.matrix.rowwise().sum().maxCoeff(), 1.0 + 1e-12);
        const Eigen::MatrixXd weighted = ops.lumped_mass.asDiagonal() * p.matrix;
        EXPECT_LE((weighted - weighted.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Propagator, ContractionInLumpedNorm) {
    const FemOperators ops = assemble(build_uniform_unit_square(12));
    const HeatPropagator p = build_propagator(ops, 1.0 / 100);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 200; ++trial) {
        NodalVector v(static_cast<Eigen::Index>(ops.n_h));
        for (auto& c : v) c = z(rng);
        EXPECT_LE(h_norm(apply(p, v), ops), h_norm(v, ops) * (1.0 + 1e-14));
    }
}

TEST(Propagator, AgreesWithEigendecomposition) {
    for (std::size_t N : {3u, 6u, 11u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        ASSERT_LE(ops.n_h, 100u);
        for (double tau : {1e-4, 1.0 / 64, 1.0 / 16, 0.5}) {
            const Eigen::MatrixXd diff = build_propagator(ops, tau).matrix - eigen_propagator(ops, tau);
            EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-9) << "N=" << N << " tau=" << tau;
        }
    }
}

}  // namespace
}  // namespace splitheat
