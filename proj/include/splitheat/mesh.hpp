#pragma once

#include "splitheat/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace splitheat {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using Triangle = std::array<std::size_t, 3>;

/// Conforming triangulation of the unit square with homogeneous Dirichlet
/// boundary. Interior vertices carry the degrees of freedom; `dof_of_vertex`
/// maps a vertex to its interior index or `npos` for boundary vertices.
struct Mesh {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    std::size_t N = 0;  ///< subdivisions per side; 0 for meshes not built by the uniform constructor
    std::vector<Point> vertices;
    std::vector<Triangle> triangles;
    std::vector<std::size_t> interior_nodes;
    std::vector<std::size_t> dof_of_vertex;
    double h = 0.0;

    std::size_t n_h() const { return interior_nodes.size(); }
    const Point& node(std::size_t dof) const { return vertices[interior_nodes[dof]]; }
    bool is_uniform() const { return N != 0; }
};

struct AcutenessReport {
    bool is_weakly_acute = false;
    double worst_offdiag = 0.0;   ///< max over elements, i != j of the element integral of grad(phi_i).grad(phi_j)
    double shape_constant = 0.0;  ///< min over elements of diam(inscribed disc) / diam(element)
};

/// Off-diagonal gradient integrals up to this absolute value count as nonpositive.
inline constexpr double kAcuteTolerance = 1e-12;

namespace detail {

inline bool on_unit_square_boundary(const Point& p) {
    constexpr double eps = 1e-14;
    return p.x <= eps || p.y <= eps || p.x >= 1.0 - eps || p.y >= 1.0 - eps;
}

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double signed_area(const Point& a, const Point& b, const Point& c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

inline void finalize(Mesh& mesh) {
    mesh.dof_of_vertex.assign(mesh.vertices.size(), Mesh::npos);
    mesh.interior_nodes.clear();
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (!on_unit_square_boundary(mesh.vertices[v])) mesh.interior_nodes.push_back(v);
    }
    // lexicographic by (row y, column x)
    std::stable_sort(mesh.interior_nodes.begin(), mesh.interior_nodes.end(), [&](std::size_t a, std::size_t b) {
        const Point& pa = mesh.vertices[a];
        const Point& pb = mesh.vertices[b];
        return pa.y != pb.y ? pa.y < pb.y : pa.x < pb.x;
    });
    for (std::size_t j = 0; j < mesh.interior_nodes.size(); ++j) mesh.dof_of_vertex[mesh.interior_nodes[j]] = j;

    mesh.h = 0.0;
    for (const auto& t : mesh.triangles) {
        const Point &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
        mesh.h = std::max({mesh.h, distance(a, b), distance(b, c), distance(c, a)});
    }
}

}  // namespace detail

/// Uniform N x N grid of the unit square, each cell split along its
/// lower-left to upper-right diagonal. Vertex (i, j) sits at (i/N, j/N) and
/// has index j*(N+1)+i.
inline Mesh build_uniform_unit_square(std::size_t N) {
    if (N < 2) throw Error("build_uniform_unit_square: N must be >= 2 (got " + std::to_string(N) + ")");
    Mesh mesh;
    mesh.N = N;
    const double inv = 1.0 / static_cast<double>(N);
    mesh.vertices.reserve((N + 1) * (N + 1));
    for (std::size_t j = 0; j <= N; ++j)
        for (std::size_t i = 0; i <= N; ++i)
            mesh.vertices.push_back({static_cast<double>(i) * inv, static_cast<double>(j) * inv});

    auto vid = [N](std::size_t i, std::size_t j) { return j * (N + 1) + i; };
    mesh.triangles.reserve(2 * N * N);
    for (std::size_t j = 0; j < N; ++j) {
        for (std::size_t i = 0; i < N; ++i) {
            const std::size_t ll = vid(i, j), lr = vid(i + 1, j), ur = vid(i + 1, j + 1), ul = vid(i, j + 1);
            mesh.triangles.push_back({ll, lr, ur});
            mesh.triangles.push_back({ll, ur, ul});
        }
    }
    detail::finalize(mesh);
    // exact value rather than the hypot of rounded coordinates
    mesh.h = std::sqrt(2.0) * inv;
    return mesh;
}

/// Mesh from explicit geometry. Triangles are reoriented counter-clockwise;
/// interior nodes are the vertices strictly inside the unit square.
inline Mesh mesh_from_triangles(std::vector<Point> vertices, std::vector<Triangle> triangles) {
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.triangles = std::move(triangles);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        auto& tri = mesh.triangles[t];
        for (auto v : tri)
            if (v >= mesh.vertices.size()) throw Error("mesh_from_triangles: triangle " + std::to_string(t) + " references missing vertex");
        if (detail::signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) < 0.0)
            std::swap(tri[1], tri[2]);
    }
    detail::finalize(mesh);
    return mesh;
}

/// Element gradient integrals: entry (a, b) is the integral over the triangle
/// of grad(phi_a).grad(phi_b) for the local P1 basis. Uses the identity
/// grad(phi_a).grad(phi_b) * |T| = (e_a . e_b) / (4|T|) with e_a the edge
/// opposite local vertex a.
inline std::array<std::array<double, 3>, 3> element_stiffness(const Point& p0, const Point& p1, const Point& p2, double area) {
    const std::array<Point, 3> edge{Point{p2.x - p1.x, p2.y - p1.y}, Point{p0.x - p2.x, p0.y - p2.y}, Point{p1.x - p0.x, p1.y - p0.y}};
    std::array<std::array<double, 3>, 3> k{};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) k[a][b] = (edge[a].x * edge[b].x + edge[a].y * edge[b].y) / (4.0 * area);
    return k;
}

inline double triangle_area_checked(const Mesh& mesh, std::size_t t) {
    const auto& tri = mesh.triangles[t];
    const double area = detail::signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    if (!(std::abs(area) > 1e-300)) throw Error("degenerate (zero-area) triangle at index " + std::to_string(t));
    return std::abs(area);
}

inline AcutenessReport check_weak_acuteness(const Mesh& mesh) {
    AcutenessReport report;
    report.worst_offdiag = -std::numeric_limits<double>::infinity();
    report.shape_constant = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const double area = triangle_area_checked(mesh, t);
        const auto& tri = mesh.triangles[t];
        const Point &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
        const auto k = element_stiffness(a, b, c, area);
        report.worst_offdiag = std::max({report.worst_offdiag, k[0][1], k[0][2], k[1][2]});

        const double la = detail::distance(b, c), lb = detail::distance(c, a), lc = detail::distance(a, b);
        const double inradius = 2.0 * area / (la + lb + lc);
        const double diameter = std::max({la, lb, lc});
        report.shape_constant = std::min(report.shape_constant, 2.0 * inradius / diameter);
    }
    if (mesh.triangles.empty()) {
        report.worst_offdiag = 0.0;
        report.shape_constant = 0.0;
    }
    report.is_weakly_acute = report.worst_offdiag <= kAcuteTolerance;
    return report;
}

}  // namespace splitheat
