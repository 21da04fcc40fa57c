#pragma once

#include "splitheat/error.hpp"
#include "splitheat/fem.hpp"
#include "splitheat/noise.hpp"
#include "splitheat/nonlinearity.hpp"
#include "splitheat/scheme.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace splitheat {

// ---------------------------------------------------------------------------
// Parallel realization loop
// ---------------------------------------------------------------------------

inline std::size_t default_worker_count() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

/// Calls task(r) for r in [0, count) on up to `workers` threads. Each task
/// writes only its own result slot, so the outcome does not depend on the
/// schedule. The first exception thrown by any task is rethrown.
template <class Task>
void parallel_for_realizations(std::size_t count, std::size_t workers, Task&& task) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t r = 0; r < count; ++r) task(r);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < count; r = next++) {
                try {
                    task(r);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Tables and rate fits
// ---------------------------------------------------------------------------

enum class Vary { Time, Space };

struct ErrorRow {
    std::size_t resolution = 0;  ///< M (time) or N (space)
    double param = 0.0;          ///< tau or h
    double error = 0.0;
    double std_error = 0.0;
    double rel_error = 0.0;
    double ref_norm = 0.0;
    std::size_t sup_index = 0;   ///< coarse grid index attaining the sup (strong tables)
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  ///< root-mean-square residual in log space
    std::size_t points = 0;
};

struct ErrorTable {
    std::string param_kind;  ///< "tau" or "h"
    std::vector<ErrorRow> rows;
    std::optional<RateFit> fit;
};

/// Least-squares line through (log param, log error).
inline RateFit fit_rate(std::span<const double> params, std::span<const double> errors) {
    if (params.size() != errors.size()) throw Error("fit_rate: size mismatch");
    if (params.size() < 3) throw Error("fit_rate: need at least 3 usable points, got " + std::to_string(params.size()));
    const double n = static_cast<double>(params.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!(params[i] > 0.0) || !(errors[i] > 0.0)) throw Error("fit_rate: parameters and errors must be positive");
        sx += std::log(params[i]);
        sy += std::log(errors[i]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double dx = std::log(params[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(errors[i]) - my);
    }
    if (!(sxx > 0.0)) throw Error("fit_rate: parameters must not all be equal");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double r = std::log(errors[i]) - (fit.intercept + fit.slope * std::log(params[i]));
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    fit.points = params.size();
    return fit;
}

/// Fits a table, skipping zero-error rows (self-comparison) and the
/// coarsest row when its relative error exceeds `max_coarse_rel_error`.
inline RateFit fit_rate(const ErrorTable& table, double max_coarse_rel_error = 0.4) {
    std::vector<const ErrorRow*> usable;
    for (const auto& row : table.rows)
        if (row.error > 0.0) usable.push_back(&row);
    if (!usable.empty()) {
        auto coarsest = std::max_element(usable.begin(), usable.end(), [](auto* a, auto* b) { return a->param < b->param; });
        if ((*coarsest)->rel_error > max_coarse_rel_error) usable.erase(coarsest);
    }
    std::vector<double> params, errors;
    for (auto* row : usable) {
        params.push_back(row->param);
        errors.push_back(row->error);
    }
    return fit_rate(params, errors);
}

/// sqrt of the sample mean of squared distances.
inline double rms_estimate(std::span<const double> squared) {
    if (squared.empty()) return 0.0;
    double sum = 0.0;
    for (double x : squared) sum += x;
    return std::sqrt(sum / static_cast<double>(squared.size()));
}

inline double sample_std(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// Monte-Carlo studies
// ---------------------------------------------------------------------------

struct StudyConfig {
    Vary vary = Vary::Time;
    std::size_t N_ref = 16;
    std::size_t M_ref = 1024;
    std::vector<std::size_t> sweep{8, 16, 32, 64, 128, 256};
    std::size_t realizations = 64;
    double T = 0.5;
    std::size_t K = 4;
    Nonlinearity nonlinearity = Nonlinearity::regularized_sqrt(0.1);
    InitialCondition u0 = sin_sin;
    std::uint64_t master_seed = 20240601;
    std::size_t workers = default_worker_count();
    double max_coarse_rel_error = 0.4;
    std::size_t dense_limit = kDefaultDenseLimit;
};

/// Published experiment resolutions: N_ref = 2^6, M_ref = 2^12, R = 150.
inline StudyConfig paper_study(Vary vary) {
    StudyConfig cfg;
    cfg.vary = vary;
    cfg.N_ref = 64;
    cfg.M_ref = 4096;
    cfg.realizations = 150;
    cfg.sweep = vary == Vary::Time ? std::vector<std::size_t>{8, 16, 32, 64, 128, 256, 512, 1024, 2048}
                                   : std::vector<std::size_t>{4, 8, 16, 32};
    return cfg;
}

/// Reduced resolutions that finish in minutes on one machine.
inline StudyConfig desk_study(Vary vary) {
    StudyConfig cfg;
    cfg.vary = vary;
    cfg.M_ref = 1024;
    cfg.realizations = 64;
    if (vary == Vary::Time) {
        cfg.N_ref = 16;
        cfg.sweep = {8, 16, 32, 64, 128, 256};
    } else {
        cfg.N_ref = 32;
        cfg.sweep = {4, 8, 16};
    }
    return cfg;
}

struct StudyResult {
    ErrorTable strong;
    ErrorTable weak;
    /// per sweep entry: sums of the increments the stepper consumed, indexed r*K + k
    std::vector<std::vector<double>> increment_checksums;
    std::vector<double> reference_checksums;
    bool overflow = false;
    double min_value_seen = 0.0;
};

namespace detail {

struct RealizationResult {
    std::vector<std::vector<double>> sq_dist;  ///< [sweep][coarse grid index]
    std::vector<double> ref_sq_norm;           ///< [reference grid index]
    std::vector<double> final_phi;             ///< [sweep]
    double ref_final_phi = 0.0;
    std::vector<std::vector<double>> checksums;  ///< [sweep][k]
    std::vector<double> ref_checksums;
    bool overflow = false;
    double min_value = std::numeric_limits<double>::infinity();
};

inline std::vector<double> row_sums(const Eigen::MatrixXd& inc) {
    std::vector<double> sums(static_cast<std::size_t>(inc.rows()), 0.0);
    for (Eigen::Index k = 0; k < inc.rows(); ++k)
        for (Eigen::Index m = 0; m < inc.cols(); ++m) sums[static_cast<std::size_t>(k)] += inc(k, m);
    return sums;
}

inline void validate(const StudyConfig& cfg) {
    if (cfg.sweep.empty()) throw Error("study: sweep is empty");
    if (cfg.realizations == 0) throw Error("study: need at least one realization");
    for (std::size_t v : cfg.sweep) {
        if (cfg.vary == Vary::Time) {
            if (v == 0 || cfg.M_ref % v != 0)
                throw Error("study: sweep M=" + std::to_string(v) + " does not divide M_ref=" + std::to_string(cfg.M_ref));
        } else {
            if (v < 2 || cfg.N_ref % v != 0)
                throw Error("study: sweep N=" + std::to_string(v) + " does not divide N_ref=" + std::to_string(cfg.N_ref));
        }
    }
}

}  // namespace detail

/// Runs the reference (N_ref, M_ref) and every sweep resolution on the same
/// Brownian paths. Sweep trajectories advance in lockstep with the
/// reference, so each is compared at every one of its own grid times
/// without storing whole trajectories.
inline StudyResult run_study(const StudyConfig& cfg) {
    detail::validate(cfg);
    const std::size_t S = cfg.sweep.size();
    const std::size_t R = cfg.realizations;

    std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const Discretization>> cache;
    auto disc_for = [&](std::size_t N, std::size_t M) {
        auto& slot = cache[{N, M}];
        if (!slot) slot = make_discretization(N, M, cfg.T, cfg.K, cfg.dense_limit);
        return slot;
    };
    const auto ref = disc_for(cfg.N_ref, cfg.M_ref);
    std::vector<std::shared_ptr<const Discretization>> variants;
    for (std::size_t v : cfg.sweep) variants.push_back(cfg.vary == Vary::Time ? disc_for(cfg.N_ref, v) : disc_for(v, cfg.M_ref));

    const BrownianStore store = sample_paths(cfg.master_seed, R, cfg.K, cfg.M_ref, cfg.T);

    std::vector<detail::RealizationResult> results(R);
    parallel_for_realizations(R, cfg.workers, [&](std::size_t r) {
        auto& out = results[r];
        const SchemeConfig ref_cfg{ref, cfg.nonlinearity, cfg.u0, RecordMode::FinalOnly};
        const Eigen::MatrixXd ref_inc = store.increments(r, cfg.M_ref);
        out.ref_checksums = detail::row_sums(ref_inc);

        std::vector<SchemeConfig> var_cfg;
        std::vector<Eigen::MatrixXd> var_inc;
        std::vector<NodalVector> var_state;
        std::vector<std::size_t> stride;
        for (std::size_t s = 0; s < S; ++s) {
            var_cfg.push_back({variants[s], cfg.nonlinearity, cfg.u0, RecordMode::FinalOnly});
            var_inc.push_back(store.increments(r, variants[s]->steps));
            out.checksums.push_back(detail::row_sums(var_inc.back()));
            var_state.push_back(initial_state(cfg.u0, variants[s]->mesh));
            stride.push_back(cfg.M_ref / variants[s]->steps);
            out.sq_dist.emplace_back(variants[s]->steps + 1, 0.0);
        }
        out.ref_sq_norm.assign(cfg.M_ref + 1, 0.0);

        NodalVector U = initial_state(cfg.u0, ref->mesh);
        for (std::size_t i = 0;; ++i) {
            out.ref_sq_norm[i] = U.dot(ref->ops.mass * U);
            out.min_value = std::min(out.min_value, U.minCoeff());
            for (std::size_t s = 0; s < S; ++s) {
                if (i % stride[s] != 0) continue;
                const NodalVector diff = prolongate(var_state[s], variants[s]->mesh, ref->mesh) - U;
                out.sq_dist[s][i / stride[s]] = diff.dot(ref->ops.mass * diff);
            }
            if (i == cfg.M_ref) break;

            SubstepDiagnostics diag;
            U = step(U, i, ref_inc, ref_cfg, &diag);
            out.overflow |= diag.overflow;
            for (std::size_t s = 0; s < S; ++s) {
                if (i % stride[s] != 0) continue;
                SubstepDiagnostics vdiag;
                var_state[s] = step(var_state[s], i / stride[s], var_inc[s], var_cfg[s], &vdiag);
                out.overflow |= vdiag.overflow;
            }
        }
        out.ref_final_phi = out.ref_sq_norm[cfg.M_ref];
        for (std::size_t s = 0; s < S; ++s) out.final_phi.push_back(var_state[s].dot(variants[s]->ops.mass * var_state[s]));
    });

    StudyResult result;
    const std::string kind = cfg.vary == Vary::Time ? "tau" : "h";
    result.strong.param_kind = kind;
    result.weak.param_kind = kind;
    result.min_value_seen = std::numeric_limits<double>::infinity();
    for (const auto& r : results) {
        result.overflow |= r.overflow;
        result.min_value_seen = std::min(result.min_value_seen, r.min_value);
    }
    result.reference_checksums.reserve(R * cfg.K);
    for (const auto& r : results) result.reference_checksums.insert(result.reference_checksums.end(), r.ref_checksums.begin(), r.ref_checksums.end());

    std::vector<double> column(R);
    for (std::size_t s = 0; s < S; ++s) {
        const Discretization& d = *variants[s];
        const std::size_t stride = cfg.M_ref / d.steps;
        ErrorRow strong;
        strong.resolution = cfg.sweep[s];
        strong.param = cfg.vary == Vary::Time ? d.tau() : d.mesh.h;
        double best = -1.0;
        for (std::size_t m = 0; m <= d.steps; ++m) {
            for (std::size_t r = 0; r < R; ++r) column[r] = results[r].sq_dist[s][m];
            const double e = rms_estimate(column);
            if (e > best) {
                best = e;
                strong.sup_index = m;
            }
        }
        strong.error = best;
        for (std::size_t r = 0; r < R; ++r) column[r] = results[r].sq_dist[s][strong.sup_index];
        // delta method through the square root
        const double se_mean = sample_std(column) / std::sqrt(static_cast<double>(R));
        strong.std_error = best > 0.0 ? se_mean / (2.0 * best) : 0.0;
        for (std::size_t r = 0; r < R; ++r) column[r] = results[r].ref_sq_norm[strong.sup_index * stride];
        strong.ref_norm = rms_estimate(column);
        strong.rel_error = strong.ref_norm > 0.0 ? strong.error / strong.ref_norm : 0.0;
        result.strong.rows.push_back(strong);

        ErrorRow weak;
        weak.resolution = cfg.sweep[s];
        weak.param = strong.param;
        weak.sup_index = d.steps;
        double mean_diff = 0.0, mean_ref = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
            column[r] = results[r].final_phi[s] - results[r].ref_final_phi;
            mean_diff += column[r];
            mean_ref += results[r].ref_final_phi;
        }
        mean_diff /= static_cast<double>(R);
        mean_ref /= static_cast<double>(R);
        weak.error = std::abs(mean_diff);
        weak.std_error = sample_std(column) / std::sqrt(static_cast<double>(R));
        weak.ref_norm = mean_ref;
        weak.rel_error = mean_ref > 0.0 ? weak.error / mean_ref : 0.0;
        result.weak.rows.push_back(weak);

        std::vector<double> sums;
        sums.reserve(R * cfg.K);
        for (const auto& r : results) sums.insert(sums.end(), r.checksums[s].begin(), r.checksums[s].end());
        result.increment_checksums.push_back(std::move(sums));
    }
    try {
        result.strong.fit = fit_rate(result.strong, cfg.max_coarse_rel_error);
    } catch (const Error&) {
        result.strong.fit.reset();
    }
    return result;
}

inline ErrorTable strong_error_temporal(StudyConfig cfg) {
    cfg.vary = Vary::Time;
    return run_study(cfg).strong;
}

inline ErrorTable strong_error_spatial(StudyConfig cfg) {
    cfg.vary = Vary::Space;
    return run_study(cfg).strong;
}

inline ErrorTable weak_error(const StudyConfig& cfg) { return run_study(cfg).weak; }

/// Deterministic limit: zero nonlinearity on uniform meshes against the
/// exact heat solution exp(-2 pi^2 T) sin(pi x) sin(pi y), measured as the
/// L2 norm of (u_h(T) - I_h u(T)).
inline ErrorTable heat_limit_error(const std::vector<std::size_t>& N_values, double T, std::size_t steps) {
    ErrorTable table;
    table.param_kind = "h";
    const double decay = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * T);
    for (std::size_t N : N_values) {
        const auto disc = make_discretization(N, steps, T, 1);
        const SchemeConfig cfg{disc, Nonlinearity::zero(), sin_sin, RecordMode::FinalOnly};
        const Trajectory traj = run(cfg, Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(steps)));
        const NodalVector exact = nodal_interpolant([&](double x, double y) { return decay * sin_sin(x, y); }, disc->mesh);
        ErrorRow row;
        row.resolution = N;
        row.param = disc->mesh.h;
        row.error = l2_norm(traj.states.back() - exact, disc->ops);
        row.ref_norm = l2_norm(exact, disc->ops);
        row.rel_error = row.error / row.ref_norm;
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace splitheat
