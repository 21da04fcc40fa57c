#pragma once

#include "splitheat/error.hpp"
#include "splitheat/mesh.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace splitheat {

// ---------------------------------------------------------------------------
// Counter-based generator
// ---------------------------------------------------------------------------

/// Philox4x32-10 block function (Salmon et al., Random123). Stateless: the
/// output is a pure function of (counter, key).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// Two independent standard normals for block `block` of stream (r, k).
/// Counter = (block lo, block hi, k, r), key = (seed lo, seed hi); the four
/// 32-bit outputs form two 53-bit uniforms fed to Box-Muller.
inline std::array<double, 2> gaussian_pair(std::uint64_t seed, std::uint64_t r, std::uint64_t k, std::uint64_t block) {
    const auto out = philox4x32({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                 static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(r)},
                                {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0, 1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Increments are stored as integer multiples of 2^-36. Partial sums of such
/// values stay exact in double precision while their magnitude is below
/// 2^17, so aggregation to any coarser grid is associative bit for bit.
inline constexpr int kIncrementFractionBits = 36;

inline double quantize_increment(double x) {
    return std::ldexp(std::nearbyint(std::ldexp(x, kIncrementFractionBits)), -kIncrementFractionBits);
}

/// Brownian increments of stream (r, k) on a uniform grid of `steps` steps
/// over [0, T]. Step s uses normal (s mod 2) of block s/2.
inline std::vector<double> generate_stream(std::uint64_t seed, std::size_t r, std::size_t k, std::size_t steps, double T) {
    std::vector<double> inc(steps);
    const double scale = std::sqrt(T / static_cast<double>(steps));
    for (std::size_t s = 0; s < steps; s += 2) {
        const auto z = gaussian_pair(seed, r, k, s / 2);
        inc[s] = quantize_increment(scale * z[0]);
        if (s + 1 < steps) inc[s + 1] = quantize_increment(scale * z[1]);
    }
    return inc;
}

/// Sums consecutive groups of fine increments in ascending index order.
inline std::vector<double> aggregate(std::span<const double> fine, std::size_t coarse_steps) {
    if (coarse_steps == 0 || fine.size() % coarse_steps != 0)
        throw Error("aggregate: " + std::to_string(coarse_steps) + " does not divide " + std::to_string(fine.size()) + " fine steps");
    const std::size_t q = fine.size() / coarse_steps;
    std::vector<double> coarse(coarse_steps, 0.0);
    for (std::size_t m = 0; m < coarse_steps; ++m) {
        double sum = 0.0;
        for (std::size_t i = q * m; i < q * (m + 1); ++i) sum += fine[i];
        coarse[m] = sum;
    }
    return coarse;
}

// ---------------------------------------------------------------------------
// Brownian paths
// ---------------------------------------------------------------------------

/// K independent Brownian paths for each of R realizations on a grid of
/// `steps` steps. Immutable once built.
class BrownianStore {
public:
    BrownianStore() = default;

    static BrownianStore sample(std::uint64_t master_seed, std::size_t R, std::size_t K, std::size_t steps, double T) {
        if (steps == 0) throw Error("sample_paths: need at least one time step");
        if (!(T > 0.0)) throw Error("sample_paths: final time must be positive");
        BrownianStore store(master_seed, R, K, steps, T);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t k = 0; k < K; ++k) {
                const auto stream = generate_stream(master_seed, r, k, steps, T);
                std::copy(stream.begin(), stream.end(), store.data_.begin() + static_cast<std::ptrdiff_t>(store.offset(r, k)));
            }
        }
        return store;
    }

    /// Store on a coarser grid whose increments are exact sums of this one's.
    BrownianStore aggregate(std::size_t coarse_steps) const {
        if (coarse_steps == 0 || steps_ % coarse_steps != 0)
            throw Error("aggregate: " + std::to_string(coarse_steps) + " does not divide " + std::to_string(steps_) + " steps");
        BrownianStore coarse(seed_, R_, K_, coarse_steps, T_);
        for (std::size_t r = 0; r < R_; ++r) {
            for (std::size_t k = 0; k < K_; ++k) {
                const auto agg = splitheat::aggregate(path(r, k), coarse_steps);
                std::copy(agg.begin(), agg.end(), coarse.data_.begin() + static_cast<std::ptrdiff_t>(coarse.offset(r, k)));
            }
        }
        return coarse;
    }

    std::span<const double> path(std::size_t r, std::size_t k) const {
        if (r >= R_ || k >= K_) throw Error("BrownianStore: (r, k) out of range");
        return {data_.data() + offset(r, k), steps_};
    }

    /// K x coarse_steps matrix of increments for realization r, aggregated
    /// from the stored resolution.
    Eigen::MatrixXd increments(std::size_t r, std::size_t coarse_steps) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(K_), static_cast<Eigen::Index>(coarse_steps));
        for (std::size_t k = 0; k < K_; ++k) {
            const auto agg = splitheat::aggregate(path(r, k), coarse_steps);
            for (std::size_t m = 0; m < coarse_steps; ++m) out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = agg[m];
        }
        return out;
    }

    std::uint64_t master_seed() const { return seed_; }
    std::size_t realizations() const { return R_; }
    std::size_t modes() const { return K_; }
    std::size_t steps() const { return steps_; }
    double final_time() const { return T_; }

    friend bool operator==(const BrownianStore&, const BrownianStore&) = default;

private:
    BrownianStore(std::uint64_t seed, std::size_t R, std::size_t K, std::size_t steps, double T)
        : seed_(seed), R_(R), K_(K), steps_(steps), T_(T), data_(R * K * steps, 0.0) {}

    std::size_t offset(std::size_t r, std::size_t k) const { return (r * K_ + k) * steps_; }

    std::uint64_t seed_ = 0;
    std::size_t R_ = 0, K_ = 0, steps_ = 0;
    double T_ = 0.0;
    std::vector<double> data_;
};

inline BrownianStore sample_paths(std::uint64_t master_seed, std::size_t R, std::size_t K, std::size_t steps, double T) {
    return BrownianStore::sample(master_seed, R, K, steps, T);
}

// ---------------------------------------------------------------------------
// Noise basis
// ---------------------------------------------------------------------------

/// e_{i,j}(x, y) = 2 sin(pi i x) sin(pi j y).
inline double eval_basis(std::size_t i, std::size_t j, double x, double y) {
    return 2.0 * std::sin(std::numbers::pi * static_cast<double>(i) * x) * std::sin(std::numbers::pi * static_cast<double>(j) * y);
}

/// Sinusoidal modes e_{i,j}, 1 <= i, j <= n, evaluated at the interior nodes
/// of one mesh. Mode k corresponds to (i, j) = (k / n + 1, k % n + 1).
struct NoiseBasis {
    std::size_t n = 0;
    Eigen::MatrixXd node_values;   ///< K x n_h
    Eigen::VectorXd sum_squares;   ///< per node: sum_k e_k(P)^2
    std::vector<double> sup_norms;
    double K_e = 0.0;

    std::size_t modes() const { return n * n; }

    static NoiseBasis build(std::size_t n, const Mesh& mesh) {
        if (n == 0) throw Error("NoiseBasis: need n >= 1");
        NoiseBasis basis;
        basis.n = n;
        const auto K = static_cast<Eigen::Index>(n * n);
        const auto nh = static_cast<Eigen::Index>(mesh.n_h());
        basis.node_values.resize(K, nh);
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 1; j <= n; ++j) {
                const auto k = static_cast<Eigen::Index>((i - 1) * n + (j - 1));
                for (Eigen::Index l = 0; l < nh; ++l) {
                    const Point& p = mesh.node(static_cast<std::size_t>(l));
                    basis.node_values(k, l) = eval_basis(i, j, p.x, p.y);
                }
            }
        basis.sum_squares = basis.node_values.array().square().colwise().sum().transpose();
        basis.sup_norms.assign(n * n, 2.0);
        double acc = 0.0;
        for (double s : basis.sup_norms) acc += s * s;
        basis.K_e = std::sqrt(acc);
        return basis;
    }
};

/// Number of modes K = n^2 -> n; throws when K is not a perfect square.
inline std::size_t modes_per_axis(std::size_t K) {
    std::size_t n = 0;
    while ((n + 1) * (n + 1) <= K) ++n;
    if (n == 0 || n * n != K) throw Error("noise dimension K=" + std::to_string(K) + " must be a positive perfect square");
    return n;
}

}  // namespace splitheat
