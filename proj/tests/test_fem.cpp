#include "oracles.hpp"
#include "splitheat/fem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace splitheat {
namespace {

double sin_sin(double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); }

TEST(Assemble, MatchesQuadratureOracle) {
    for (std::size_t N : {2u, 3u, 4u}) {
        const Mesh mesh = build_uniform_unit_square(N);
        const FemOperators ops = assemble(mesh);
        const auto q = oracle::quadrature_operators(mesh);
        EXPECT_LE((Eigen::MatrixXd(ops.mass) - q.mass).cwiseAbs().maxCoeff(), 1e-9) << "N=" << N;
        EXPECT_LE((Eigen::MatrixXd(ops.stiffness) - q.stiffness).cwiseAbs().maxCoeff(), 1e-9) << "N=" << N;
        EXPECT_LE((ops.lumped_mass - q.lumped).cwiseAbs().maxCoeff(), 1e-9) << "N=" << N;
    }
}

TEST(Assemble, UniformDiagonals) {
    for (std::size_t N : {2u, 5u, 8u, 16u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        const double n2 = static_cast<double>(N * N);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ops.n_h); ++i) {
            EXPECT_NEAR(ops.lumped_mass[i], 1.0 / n2, 1e-15);
            EXPECT_NEAR(ops.mass.coeff(i, i), 0.5 / n2, 1e-15);
            EXPECT_NEAR(ops.stiffness.coeff(i, i), 4.0, 1e-13);
        }
    }
}

TEST(Assemble, FivePointStencil) {
    for (std::size_t N = 2; N <= 8; ++N) {
        const Mesh mesh = build_uniform_unit_square(N);
        const FemOperators ops = assemble(mesh);
        const auto m = static_cast<long>(N - 1);
        for (long r = 0; r < m * m; ++r) {
            for (long c = 0; c < m * m; ++c) {
                if (r == c) continue;
                const long dr = std::abs(r / m - c / m), dc = std::abs(r % m - c % m);
                const bool axis_neighbour = dr + dc == 1;
                const double want = axis_neighbour ? -1.0 : 0.0;
                // power-of-two N keeps every edge product exact in binary
                if ((N & (N - 1)) == 0)
                    EXPECT_EQ(ops.stiffness.coeff(r, c), want) << "N=" << N << " (" << r << "," << c << ")";
                else
                    EXPECT_NEAR(ops.stiffness.coeff(r, c), want, 1e-14) << "N=" << N << " (" << r << "," << c << ")";
            }
        }
    }
}

TEST(Assemble, ExactSymmetry) {
    for (std::size_t N : {3u, 6u, 11u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        EXPECT_EQ((Eigen::MatrixXd(ops.mass) - Eigen::MatrixXd(ops.mass).transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((Eigen::MatrixXd(ops.stiffness) - Eigen::MatrixXd(ops.stiffness).transpose()).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Assemble, LumpingPreservesRowSumsOfFullMass) {
    // sum over all vertices j of int phi_i phi_j = int phi_i, since the hats sum to one
    for (std::size_t N : {2u, 4u, 7u}) {
        const Mesh mesh = build_uniform_unit_square(N);
        const FemOperators ops = assemble(mesh);
        const auto q = oracle::quadrature_operators(mesh);
        for (std::size_t j = 0; j < mesh.n_h(); ++j) {
            const double row = q.full_mass.row(static_cast<Eigen::Index>(mesh.interior_nodes[j])).sum();
            EXPECT_NEAR(ops.lumped_mass[static_cast<Eigen::Index>(j)], row, 1e-12);
        }
    }
    // away from the boundary the interior-only rows already sum to int phi_i
    const FemOperators ops = assemble(build_uniform_unit_square(8));
    const Eigen::VectorXd rows = Eigen::MatrixXd(ops.mass).rowwise().sum();
    EXPECT_NEAR(rows[3 * 7 + 3], ops.lumped_mass[3 * 7 + 3], 1e-15);
}

TEST(Assemble, PositiveDefinite) {
    for (std::size_t N : {2u, 3u, 8u, 32u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_m(Eigen::SparseMatrix<double>(ops.mass));
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_s(Eigen::SparseMatrix<double>(ops.stiffness));
        EXPECT_EQ(llt_m.info(), Eigen::Success) << "N=" << N;
        EXPECT_EQ(llt_s.info(), Eigen::Success) << "N=" << N;
        EXPECT_TRUE((ops.lumped_mass.array() > 0.0).all());
    }
    const FemOperators small = assemble(build_uniform_unit_square(5));
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(small.mass)).eigenvalues().minCoeff(), 0.0);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(small.stiffness)).eigenvalues().minCoeff(), 0.0);
}

TEST(Assemble, RejectsDegenerateTriangle) {
    const Mesh mesh = mesh_from_triangles({{0, 0}, {1, 0}, {1, 1}, {0.5, 0.5}}, {{0, 1, 2}, {0, 3, 2}});
    EXPECT_THROW(assemble(mesh), Error);
}

TEST(Norms, ZeroVector) {
    const FemOperators ops = assemble(build_uniform_unit_square(4));
    const NodalVector zero = NodalVector::Zero(9);
    EXPECT_EQ(l2_norm(zero, ops), 0.0);
    EXPECT_EQ(h_norm(zero, ops), 0.0);
}

TEST(Norms, SizeMismatch) {
    const FemOperators ops = assemble(build_uniform_unit_square(4));
    EXPECT_THROW(l2_norm(NodalVector::Zero(4), ops), Error);
    EXPECT_THROW(h_norm(NodalVector::Zero(10), ops), Error);
}

TEST(Norms, InterpolatedSineMode) {
    const Mesh mesh = build_uniform_unit_square(32);
    const FemOperators ops = assemble(mesh);
    EXPECT_NEAR(l2_norm(nodal_interpolant(sin_sin, mesh), ops), 0.5, 2e-3);
}

TEST(Norms, L2MatchesElementwiseIntegration) {
    const Mesh mesh = build_uniform_unit_square(4);
    const FemOperators ops = assemble(mesh);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 5; ++trial) {
        NodalVector v(9);
        for (auto& c : v) c = z(rng);
        EXPECT_NEAR(l2_norm(v, ops), std::sqrt(oracle::p1_square_integral(mesh, v)), 1e-12);
    }
}

TEST(Norms, UnitNodalValue) {
    for (std::size_t N : {2u, 4u, 10u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        NodalVector v = NodalVector::Zero(static_cast<Eigen::Index>(ops.n_h));
        v[static_cast<Eigen::Index>(ops.n_h / 2)] = 1.0;
        EXPECT_NEAR(h_norm(v, ops), 1.0 / static_cast<double>(N), 1e-15);
    }
}

TEST(Norms, L2BoundedByLumpedNorm) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    for (std::size_t N : {2u, 3u, 8u, 16u}) {
        const FemOperators ops = assemble(build_uniform_unit_square(N));
        for (int trial = 0; trial < 1000; ++trial) {
            NodalVector v(static_cast<Eigen::Index>(ops.n_h));
            for (auto& c : v) c = z(rng);
            EXPECT_LE(v.dot(ops.mass * v), v.dot(ops.lumped_mass.cwiseProduct(v)) * (1.0 + 1e-14));
        }
    }
}

TEST(Interpolant, Basics) {
    const Mesh mesh = build_uniform_unit_square(2);
    EXPECT_DOUBLE_EQ(nodal_interpolant(sin_sin, mesh)[0], 1.0);
    const Mesh m5 = build_uniform_unit_square(5);
    EXPECT_EQ(nodal_interpolant([](double, double) { return 0.0; }, m5), NodalVector::Zero(16));

    // interpolating a P1 function reproduces its coefficients
    const Mesh fine = build_uniform_unit_square(8);
    NodalVector coarse_v(9);
    coarse_v << 0.3, -1.0, 2.0, 0.5, 0.25, -0.75, 1.5, 0.0, 4.0;
    const Mesh coarse = build_uniform_unit_square(4);
    const NodalVector fine_v = prolongate(coarse_v, coarse, fine);
    auto evaluate = [&](double x, double y) {
        const auto i = static_cast<std::size_t>(std::lround(x * 8)), j = static_cast<std::size_t>(std::lround(y * 8));
        return fine_v[static_cast<Eigen::Index>((j - 1) * 7 + (i - 1))];
    };
    EXPECT_EQ(nodal_interpolant(evaluate, fine), fine_v);
}

TEST(Prolongate, Identity) {
    const Mesh mesh = build_uniform_unit_square(6);
    NodalVector v = NodalVector::LinSpaced(25, -1.0, 3.0);
    EXPECT_EQ(prolongate(v, mesh, mesh), v);
}

TEST(Prolongate, PreservesL2Norm) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    const Mesh coarse = build_uniform_unit_square(4);
    const FemOperators coarse_ops = assemble(coarse);
    for (std::size_t Nf : {8u, 12u, 16u, 32u}) {
        const Mesh fine = build_uniform_unit_square(Nf);
        const FemOperators fine_ops = assemble(fine);
        NodalVector v(9);
        for (auto& c : v) c = z(rng);
        EXPECT_NEAR(l2_norm(prolongate(v, coarse, fine), fine_ops), l2_norm(v, coarse_ops), 1e-10) << "N'=" << Nf;
    }
}

TEST(Prolongate, ReproducesLinearsAwayFromBoundary) {
    const Mesh coarse = build_uniform_unit_square(4);
    const Mesh fine = build_uniform_unit_square(12);
    const NodalVector v = nodal_interpolant([](double x, double y) { return x + y; }, coarse);
    const NodalVector w = prolongate(v, coarse, fine);
    for (std::size_t j = 0; j < fine.n_h(); ++j) {
        const Point& p = fine.node(j);
        // coarse cells touching the boundary carry the Dirichlet zero
        if (p.x < 0.25 || p.x > 0.75 || p.y < 0.25 || p.y > 0.75) continue;
        EXPECT_NEAR(w[static_cast<Eigen::Index>(j)], p.x + p.y, 1e-14);
    }
}

TEST(Prolongate, RejectsNonNested) {
    const Mesh coarse = build_uniform_unit_square(4);
    const Mesh fine = build_uniform_unit_square(6);
    EXPECT_THROW(prolongate(NodalVector::Zero(9), coarse, fine), Error);
}

TEST(Triplets, WritesSortedRows) {
    const FemOperators ops = assemble(build_uniform_unit_square(3));
    std::ostringstream os;
    write_operators(os, ops);
    const std::string text = os.str();
    EXPECT_NE(text.find("# mass 4 4"), std::string::npos);
    EXPECT_NE(text.find("# lumped_mass 4 4 4"), std::string::npos);
    EXPECT_NE(text.find("0 0 0.1111111111111111"), std::string::npos);
}

}  // namespace
}  // namespace splitheat
