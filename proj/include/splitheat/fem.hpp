#pragma once

#include "splitheat/error.hpp"
#include "splitheat/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace splitheat {

using NodalVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// P1 operators on the interior nodes of a mesh (homogeneous Dirichlet).
struct FemOperators {
    SparseMatrix mass;
    NodalVector lumped_mass;  ///< diagonal of M_L, entries are the integrals of phi_i
    SparseMatrix stiffness;
    std::size_t n_h = 0;
};

/// Closed-form assembly over interior-node pairs. On a triangle T:
/// int phi_i phi_i = |T|/6, int phi_i phi_j = |T|/12, int phi_i = |T|/3.
inline FemOperators assemble(const Mesh& mesh) {
    const std::size_t n = mesh.n_h();
    std::vector<Eigen::Triplet<double>> mass_entries, stiff_entries;
    mass_entries.reserve(9 * mesh.triangles.size());
    stiff_entries.reserve(9 * mesh.triangles.size());
    NodalVector lumped = NodalVector::Zero(static_cast<Eigen::Index>(n));

    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const double area = triangle_area_checked(mesh, t);
        const auto& tri = mesh.triangles[t];
        const auto k = element_stiffness(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]], area);
        for (int a = 0; a < 3; ++a) {
            const std::size_t ia = mesh.dof_of_vertex[tri[a]];
            if (ia == Mesh::npos) continue;
            lumped[static_cast<Eigen::Index>(ia)] += area / 3.0;
            for (int b = 0; b < 3; ++b) {
                const std::size_t ib = mesh.dof_of_vertex[tri[b]];
                if (ib == Mesh::npos) continue;
                const auto r = static_cast<int>(ia), c = static_cast<int>(ib);
                mass_entries.emplace_back(r, c, a == b ? area / 6.0 : area / 12.0);
                stiff_entries.emplace_back(r, c, k[a][b]);
            }
        }
    }

    FemOperators ops;
    ops.n_h = n;
    ops.mass.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    ops.stiffness.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    ops.mass.setFromTriplets(mass_entries.begin(), mass_entries.end());
    ops.stiffness.setFromTriplets(stiff_entries.begin(), stiff_entries.end());
    ops.mass.makeCompressed();
    ops.stiffness.makeCompressed();
    ops.lumped_mass = std::move(lumped);
    return ops;
}

namespace detail {
inline void check_size(const NodalVector& v, const FemOperators& ops, const char* what) {
    if (static_cast<std::size_t>(v.size()) != ops.n_h)
        throw Error(std::string(what) + ": vector has " + std::to_string(v.size()) + " entries, operators have " + std::to_string(ops.n_h));
}
}  // namespace detail

/// Exact L2 norm of the P1 function with nodal values v: sqrt(v' M v).
inline double l2_norm(const NodalVector& v, const FemOperators& ops) {
    detail::check_size(v, ops, "l2_norm");
    return std::sqrt(std::max(0.0, v.dot(ops.mass * v)));
}

/// Lumped (discrete) norm sqrt(v' M_L v).
inline double h_norm(const NodalVector& v, const FemOperators& ops) {
    detail::check_size(v, ops, "h_norm");
    return std::sqrt(v.dot(ops.lumped_mass.cwiseProduct(v)));
}

inline NodalVector nodal_interpolant(const std::function<double(double, double)>& f, const Mesh& mesh) {
    NodalVector c(static_cast<Eigen::Index>(mesh.n_h()));
    for (std::size_t j = 0; j < mesh.n_h(); ++j) {
        const Point& p = mesh.node(j);
        c[static_cast<Eigen::Index>(j)] = f(p.x, p.y);
    }
    return c;
}

/// Exact embedding of a P1 function from a uniform N-mesh into a uniform
/// N'-mesh with N | N'. Both meshes use the same diagonal, so the coarse
/// space is a subspace of the fine one and the result is the coarse function
/// evaluated at the fine nodes.
inline NodalVector prolongate(const NodalVector& v, const Mesh& coarse, const Mesh& fine) {
    if (!coarse.is_uniform() || !fine.is_uniform()) throw Error("prolongate: both meshes must come from build_uniform_unit_square");
    if (fine.N % coarse.N != 0)
        throw Error("prolongate: coarse N=" + std::to_string(coarse.N) + " does not divide fine N=" + std::to_string(fine.N));
    if (static_cast<std::size_t>(v.size()) != coarse.n_h()) throw Error("prolongate: vector size does not match coarse mesh");

    const std::size_t Nc = coarse.N, Nf = fine.N, q = Nf / Nc;
    if (q == 1) return v;

    auto coarse_value = [&](std::size_t i, std::size_t j) -> double {
        if (i == 0 || j == 0 || i == Nc || j == Nc) return 0.0;
        return v[static_cast<Eigen::Index>((j - 1) * (Nc - 1) + (i - 1))];
    };

    const double inv_q = 1.0 / static_cast<double>(q);
    NodalVector out(static_cast<Eigen::Index>(fine.n_h()));
    for (std::size_t jf = 1; jf < Nf; ++jf) {
        for (std::size_t i_f = 1; i_f < Nf; ++i_f) {
            const std::size_t ci = i_f / q, cj = jf / q, lx = i_f % q, ly = jf % q;
            const double ll = coarse_value(ci, cj);
            double value = ll;
            if (lx != 0 || ly != 0) {
                const double ur = coarse_value(ci + 1, cj + 1);
                const double sx = static_cast<double>(lx) * inv_q, sy = static_cast<double>(ly) * inv_q;
                if (lx >= ly) {
                    const double lr = coarse_value(ci + 1, cj);  // triangle (ll, lr, ur)
                    value = ll + sx * (lr - ll) + sy * (ur - lr);
                } else {
                    const double ul = coarse_value(ci, cj + 1);  // triangle (ll, ur, ul)
                    value = ll + sy * (ul - ll) + sx * (ur - ul);
                }
            }
            out[static_cast<Eigen::Index>((jf - 1) * (Nf - 1) + (i_f - 1))] = value;
        }
    }
    return out;
}

/// Writes "row col value" lines (0-based, 17 significant digits), preceded
/// by a `#` comment naming the matrix and its size.
inline void write_triplets(std::ostream& os, const std::string& name, const SparseMatrix& a) {
    os << "# " << name << ' ' << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index r = 0; r < a.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(a, r); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

inline void write_triplets(std::ostream& os, const std::string& name, const NodalVector& diagonal) {
    os << "# " << name << ' ' << diagonal.size() << ' ' << diagonal.size() << ' ' << diagonal.size() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < diagonal.size(); ++i) os << i << ' ' << i << ' ' << diagonal[i] << '\n';
}

inline void write_operators(std::ostream& os, const FemOperators& ops) {
    write_triplets(os, "mass", ops.mass);
    write_triplets(os, "lumped_mass", ops.lumped_mass);
    write_triplets(os, "stiffness", ops.stiffness);
}

}  // namespace splitheat
