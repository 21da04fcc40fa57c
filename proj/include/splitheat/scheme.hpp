#pragma once

#include "splitheat/error.hpp"
#include "splitheat/fem.hpp"
#include "splitheat/mesh.hpp"
#include "splitheat/noise.hpp"
#include "splitheat/nonlinearity.hpp"
#include "splitheat/propagator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace splitheat {

using InitialCondition = std::function<double(double, double)>;

inline double sin_sin(double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); }

/// Everything the stepper needs for one (N, M, T, K) resolution. Immutable
/// once built and shared read-only between realization workers.
struct Discretization {
    Mesh mesh;
    FemOperators ops;
    HeatPropagator propagator;
    NoiseBasis basis;
    std::size_t steps = 0;
    double T = 0.0;

    /// T / M; zero for the degenerate M = 0 case (initial state only).
    double tau() const { return steps == 0 ? 0.0 : T / static_cast<double>(steps); }
};

inline std::shared_ptr<const Discretization> make_discretization(std::size_t N, std::size_t steps, double T, std::size_t K,
                                                                 std::size_t dense_limit = kDefaultDenseLimit) {
    if (!(T > 0.0)) throw Error("make_discretization: final time must be positive");
    auto d = std::make_shared<Discretization>();
    d->mesh = build_uniform_unit_square(N);
    d->ops = assemble(d->mesh);
    d->steps = steps;
    d->T = T;
    d->propagator = build_propagator(d->ops, d->tau(), dense_limit);
    d->basis = NoiseBasis::build(modes_per_axis(K), d->mesh);
    return d;
}

enum class RecordMode { AllSteps, NormsOnly, FinalOnly };

inline RecordMode parse_record_mode(const std::string& s) {
    if (s == "all") return RecordMode::AllSteps;
    if (s == "norms") return RecordMode::NormsOnly;
    if (s == "final") return RecordMode::FinalOnly;
    throw Error("unknown record mode '" + s + "' (expected all|norms|final)");
}

struct SchemeConfig {
    std::shared_ptr<const Discretization> disc;
    Nonlinearity nonlinearity;
    InitialCondition u0 = sin_sin;
    RecordMode record = RecordMode::NormsOnly;
};

struct StepRecord {
    std::size_t step = 0;
    double time = 0.0;
    double l2_norm = 0.0;
    double h_norm = 0.0;
    double min_value = 0.0;
    bool overflow = false;
};

struct Trajectory {
    std::vector<StepRecord> records;
    std::vector<NodalVector> states;  ///< all steps for RecordMode::AllSteps, otherwise the final state only
    double min_value_seen = std::numeric_limits<double>::infinity();
    bool overflow_flag = false;
    std::optional<std::size_t> overflow_node;
};

/// Exponents above this (natural-log scale) are flagged as overflow.
inline constexpr double kOverflowExponent = 700.0;

struct SubstepDiagnostics {
    bool overflow = false;
    std::optional<std::size_t> node;
};

inline NodalVector initial_state(const InitialCondition& u0, const Mesh& mesh) { return nodal_interpolant(u0, mesh); }

/// Exact solution of the frozen-coefficient stochastic subsystem over one
/// step: node j is multiplied by exp(g_j s1_j - tau/2 g_j^2 s2_j) with
/// g_j = g(U_j), s1_j = sum_k dB^k e_k(P_j), s2_j = sum_k e_k(P_j)^2.
inline NodalVector stochastic_substep(const NodalVector& U, const Eigen::Ref<const Eigen::VectorXd>& increments, const NoiseBasis& basis,
                                      const Nonlinearity& nl, double tau, SubstepDiagnostics* diag = nullptr) {
    if (U.size() != basis.node_values.cols()) throw Error("stochastic_substep: state size does not match the noise basis");
    if (increments.size() != basis.node_values.rows()) throw Error("stochastic_substep: expected one increment per noise mode");
    const Eigen::VectorXd s1 = basis.node_values.transpose() * increments;
    NodalVector out(U.size());
    for (Eigen::Index j = 0; j < U.size(); ++j) {
        const double g = g_eval(nl, U[j]);
        const double exponent = g * s1[j] - 0.5 * tau * g * g * basis.sum_squares[j];
        if (exponent > kOverflowExponent && diag && !diag->overflow) {
            diag->overflow = true;
            diag->node = static_cast<std::size_t>(j);
        }
        out[j] = std::exp(exponent) * U[j];
    }
    return out;
}

/// One Lie-Trotter step: stochastic substep, then the heat propagator.
inline NodalVector step(const NodalVector& U, std::size_t m, const Eigen::MatrixXd& increments, const SchemeConfig& cfg,
                        SubstepDiagnostics* diag = nullptr) {
    const Discretization& d = *cfg.disc;
    if (m >= d.steps) throw Error("step: index " + std::to_string(m) + " outside [0, " + std::to_string(d.steps) + ")");
    if (static_cast<std::size_t>(increments.cols()) != d.steps) throw Error("step: increments do not match the step count");
    return apply(d.propagator, stochastic_substep(U, increments.col(static_cast<Eigen::Index>(m)), d.basis, cfg.nonlinearity, d.tau(), diag));
}

/// Runs M steps from the interpolated initial condition with the given
/// K x M increment matrix.
inline Trajectory run(const SchemeConfig& cfg, const Eigen::MatrixXd& increments) {
    const Discretization& d = *cfg.disc;
    if (static_cast<std::size_t>(increments.rows()) != d.basis.modes() || static_cast<std::size_t>(increments.cols()) != d.steps)
        throw Error("run: increment matrix must be K x M");

    Trajectory traj;
    NodalVector U = initial_state(cfg.u0, d.mesh);
    auto record = [&](std::size_t m, bool overflow) {
        const double min_value = U.size() ? U.minCoeff() : 0.0;
        traj.min_value_seen = std::min(traj.min_value_seen, min_value);
        const bool keep = cfg.record != RecordMode::FinalOnly || m == d.steps;
        if (keep) traj.records.push_back({m, static_cast<double>(m) * d.tau(), l2_norm(U, d.ops), h_norm(U, d.ops), min_value, overflow});
        if (cfg.record == RecordMode::AllSteps) traj.states.push_back(U);
    };

    record(0, false);
    for (std::size_t m = 0; m < d.steps; ++m) {
        SubstepDiagnostics diag;
        U = step(U, m, increments, cfg, &diag);
        if (diag.overflow && !traj.overflow_flag) {
            traj.overflow_flag = true;
            traj.overflow_node = diag.node;
        }
        record(m + 1, diag.overflow);
    }
    if (cfg.record != RecordMode::AllSteps) traj.states.push_back(U);
    return traj;
}

inline Trajectory run(const SchemeConfig& cfg, const BrownianStore& store, std::size_t r) {
    if (store.modes() != cfg.disc->basis.modes()) throw Error("run: store has a different number of noise modes");
    if (cfg.disc->steps == 0) return run(cfg, Eigen::MatrixXd(static_cast<Eigen::Index>(store.modes()), 0));
    return run(cfg, store.increments(r, cfg.disc->steps));
}

}  // namespace splitheat
