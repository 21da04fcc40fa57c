#pragma once

// Command-line front end. Kept in a header so the tests can drive it
// in-process through run_cli().

#include "config.hpp"
#include "splitheat/experiments.hpp"
#include "splitheat/scheme.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace splitheat::cli {

inline constexpr const char* kVersion = "splitheat 1.0.0";

namespace detail {

struct OutFile {
    std::ofstream file;
    std::ostream* os = nullptr;
};

inline void open_out(OutFile& f, const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
        f.os = &fallback;
        return;
    }
    f.file.open(path, std::ios::binary);
    if (!f.file) throw ConfigError("out", "cannot open '" + path + "' for writing");
    f.os = &f.file;
}

inline void write_provenance(std::ostream& os, const std::string& command, const AppConfig& cfg) {
    os << "# " << kVersion << '\n';
    os << "# command=" << command << '\n';
    for (const auto& [k, v] : cfg) os << "# " << k << '=' << v << '\n';
}

inline std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

inline void write_table(std::ostream& os, const ErrorTable& t) {
    os << "param_kind,param_value,error,std_error,rel_error,ref_norm,slope\n";
    for (const auto& r : t.rows)
        os << t.param_kind << ',' << num(r.param) << ',' << num(r.error) << ',' << num(r.std_error) << ',' << num(r.rel_error) << ','
           << num(r.ref_norm) << ",\n";
    if (t.fit) {
        os << "fit," << t.fit->points << ",,,,," << num(t.fit->slope) << '\n';
        os << "# fit intercept=" << num(t.fit->intercept) << " residual=" << num(t.fit->residual) << '\n';
    } else {
        os << "fit,0,,,,,nan\n";
    }
}

}  // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 failed
/// certificate under --strict, 2 usage or configuration error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Positivity-preserving splitting scheme for the stochastic heat equation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // mesh-check
    std::size_t mc_n = 0;
    double mc_tau = 0.0;
    std::string mc_ops, mc_prop;
    bool mc_strict = false;
    auto* mesh_check = app.add_subcommand("mesh-check", "Weak-acuteness report and propagator nonnegativity certificate");
    mesh_check->add_option("--n", mc_n, "Cells per side")->required()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
    mesh_check->add_option("--tau", mc_tau, "Step size for the propagator certificate (0 skips it)")->check(CLI::NonNegativeNumber);
    mesh_check->add_option("--dump-operators", mc_ops, "Write M, M_L, S as triplets");
    mesh_check->add_option("--dump-propagator", mc_prop, "Write the heat propagator as triplets (needs --tau)");
    mesh_check->add_flag("--strict", mc_strict, "Exit 1 if the certificate fails");

    // run
    std::size_t r_n = 16, r_m = 64, r_k = 4, r_R = 1, r_workers = default_worker_count();
    double r_T = 0.5, r_lambda = 1.0, r_delta = 0.1;
    std::string r_nl = "reg_sqrt", r_cap = "none", r_record = "norms", r_out;
    std::uint64_t r_seed = 20240601;
    bool r_strict = false;
    auto* run_cmd = app.add_subcommand("run", "Simulate realizations and write per-step norms");
    run_cmd->add_option("--n", r_n, "Cells per side")->required();
    run_cmd->add_option("--m-steps", r_m, "Time steps")->required();
    run_cmd->add_option("--t-final", r_T, "Final time");
    run_cmd->add_option("--k-modes", r_k, "Noise modes (perfect square)");
    run_cmd->add_option("--nonlinearity", r_nl, "zero | linear | reg_sqrt | half_sqrt");
    run_cmd->add_option("--lambda", r_lambda, "Coefficient of the linear nonlinearity");
    run_cmd->add_option("--delta", r_delta, "Regularization of reg_sqrt");
    run_cmd->add_option("--g-cap", r_cap, "Clamp |g| (or 'none')");
    run_cmd->add_option("--seed", r_seed, "Master seed");
    run_cmd->add_option("--realizations", r_R, "Number of realizations");
    run_cmd->add_option("--record", r_record, "all | norms | final");
    run_cmd->add_option("--out", r_out, "CSV path ('-' for stdout)");
    run_cmd->add_option("--workers", r_workers, "Worker threads");
    run_cmd->add_flag("--strict", r_strict, "Exit 1 if the certificate fails");

    // convergence / weak-error share their options
    struct StudyOpts {
        std::string vary = "time", config, out;
        std::optional<std::uint64_t> seed;
        std::optional<std::size_t> workers, realizations;
    };
    StudyOpts conv, weak;
    auto add_study = [&](const char* name, const char* help, StudyOpts& o) {
        auto* sc = app.add_subcommand(name, help);
        sc->add_option("--vary", o.vary, "time | space")->check(CLI::IsMember({"time", "space"}));
        sc->add_option("--config", o.config, "key=value configuration file");
        sc->add_option("--out", o.out, "CSV path ('-' for stdout)");
        sc->add_option("--seed", o.seed, "Override the master seed");
        sc->add_option("--workers", o.workers, "Override the worker count");
        sc->add_option("--realizations", o.realizations, "Override the realization count");
        return sc;
    };
    auto* conv_cmd = add_study("convergence", "Strong-error study against a fine reference", conv);
    auto* weak_cmd = add_study("weak-error", "Weak-error study of the squared L2 norm at final time", weak);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    std::string command;
    for (int i = 1; i < argc; ++i) command += (i > 1 ? " " : "") + std::string(argv[i]);

    try {
        if (mesh_check->parsed()) {
            const Mesh mesh = build_uniform_unit_square(mc_n);
            const AcutenessReport rep = check_weak_acuteness(mesh);
            out << "n=" << mc_n << '\n'
                << "n_h=" << mesh.n_h() << '\n'
                << "h=" << detail::num(mesh.h) << '\n'
                << "is_weakly_acute=" << (rep.is_weakly_acute ? "true" : "false") << '\n'
                << "worst_offdiag=" << detail::num(rep.worst_offdiag) << '\n'
                << "shape_constant=" << detail::num(rep.shape_constant) << '\n';
            const FemOperators ops = assemble(mesh);
            out << "metzler=" << (is_metzler(ops) ? "true" : "false") << '\n';
            if (!mc_ops.empty()) {
                std::ofstream f(mc_ops);
                if (!f) throw ConfigError("dump-operators", "cannot open '" + mc_ops + "'");
                write_operators(f, ops);
            }
            bool cert_ok = true;
            if (mc_tau > 0.0 || !mc_prop.empty()) {
                const HeatPropagator p = build_propagator(ops, mc_tau);
                const auto cert = certify_nonnegative(p);
                cert_ok = cert.passed;
                out << "tau=" << detail::num(mc_tau) << '\n'
                    << "min_entry=" << detail::num(cert.min_entry) << '\n'
                    << "certificate=" << (cert.passed ? "pass" : "fail") << '\n';
                if (!mc_prop.empty()) {
                    std::ofstream f(mc_prop);
                    if (!f) throw ConfigError("dump-propagator", "cannot open '" + mc_prop + "'");
                    write_propagator(f, p);
                }
            }
            if (!rep.is_weakly_acute) return 1;
            if (mc_strict && !cert_ok) return 1;
            return 0;
        }

        if (run_cmd->parsed()) {
            AppConfig cfg{{"n", std::to_string(r_n)},       {"m_steps", std::to_string(r_m)}, {"t_final", detail::num(r_T)},
                          {"k_modes", std::to_string(r_k)}, {"nonlinearity", r_nl},           {"lambda", detail::num(r_lambda)},
                          {"delta", detail::num(r_delta)},  {"g_cap", r_cap},                 {"seed", std::to_string(r_seed)},
                          {"realizations", std::to_string(r_R)}, {"record", r_record}};
            const Nonlinearity nl = parse_nonlinearity(cfg);
            RecordMode mode;
            try {
                mode = parse_record_mode(r_record);
            } catch (const Error& e) {
                throw ConfigError("record", e.what());
            }
            if (r_n < 2) throw ConfigError("n", "must be >= 2");
            if (!(r_T > 0.0)) throw ConfigError("t_final", "must be positive");
            if (r_workers < 1) throw ConfigError("workers", "must be >= 1");
            try {
                modes_per_axis(r_k);
            } catch (const Error& e) {
                throw ConfigError("k_modes", e.what());
            }

            const auto disc = make_discretization(r_n, r_m, r_T, r_k);
            const auto cert = certify_nonnegative(disc->propagator);
            err << "certificate min_entry=" << detail::num(cert.min_entry) << " verdict=" << (cert.passed ? "pass" : "fail") << '\n';
            if (r_strict && !cert.passed) return 1;

            const BrownianStore store = sample_paths(r_seed, r_R, r_k, r_m, r_T);
            const SchemeConfig scfg{disc, nl, sin_sin, mode};
            std::vector<Trajectory> trajs(r_R);
            parallel_for_realizations(r_R, r_workers, [&](std::size_t r) { trajs[r] = run(scfg, store, r); });

            detail::OutFile f;
            detail::open_out(f, r_out, out);
            std::ostream& os = *f.os;
            detail::write_provenance(os, command, cfg);
            os << "# certificate_min_entry=" << detail::num(cert.min_entry) << '\n';
            os << "realization,step,time,l2_norm,h_norm,min_value,overflow\n";
            bool any_overflow = false;
            for (std::size_t r = 0; r < r_R; ++r) {
                for (const auto& rec : trajs[r].records)
                    os << r << ',' << rec.step << ',' << detail::num(rec.time) << ',' << detail::num(rec.l2_norm) << ','
                       << detail::num(rec.h_norm) << ',' << detail::num(rec.min_value) << ',' << (rec.overflow ? 1 : 0) << '\n';
                any_overflow |= trajs[r].overflow_flag;
            }
            if (any_overflow) err << "warning: exponent overflow in at least one realization\n";
            return 0;
        }

        for (auto [sc, opts, weak_only] : {std::tuple{conv_cmd, &conv, false}, std::tuple{weak_cmd, &weak, true}}) {
            if (!sc->parsed()) continue;
            const Vary vary = opts->vary == "space" ? Vary::Space : Vary::Time;
            AppConfig cfg = study_defaults(vary);
            if (!opts->config.empty()) merge_config_file(cfg, opts->config);
            if (opts->seed) cfg["seed"] = std::to_string(*opts->seed);
            if (opts->workers) cfg["workers"] = std::to_string(*opts->workers);
            if (opts->realizations) cfg["realizations"] = std::to_string(*opts->realizations);
            const StudyConfig study = to_study(cfg, vary);

            const StudyResult res = run_study(study);
            const ErrorTable& table = weak_only ? res.weak : res.strong;
            for (const auto& row : table.rows)
                err << sc->get_name() << ' ' << table.param_kind << '=' << detail::num(row.param) << " error=" << detail::num(row.error)
                    << " se=" << detail::num(row.std_error) << '\n';
            if (res.overflow) err << "warning: exponent overflow in at least one realization\n";

            // the worker count does not influence results, so it stays out of the body
            AppConfig echoed = cfg;
            echoed["vary"] = opts->vary;
            detail::OutFile f;
            detail::open_out(f, opts->out, out);
            detail::write_provenance(*f.os, command, echoed);
            detail::write_table(*f.os, table);
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}

}  // namespace splitheat::cli
