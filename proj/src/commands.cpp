#include "calderon/commands.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "calderon/error.hpp"
#include "calderon/output.hpp"

namespace calderon {

namespace fs = std::filesystem;

void apply_overrides(ExperimentConfig& config, const CommandOptions& options)
{
    if (options.seed) {
        config.seeds = {*options.seed};
        config.noise.seed = *options.seed;
    }
    if (options.out)
        config.output = *options.out;
    if (options.no_noise)
        config.noise.enabled = false;
    if (options.t_override) {
        WindowPolicy::parse(*options.t_override);
        config.t_override = *options.t_override;
    }
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const GeometryError*>(&e))
        return 1;
    if (dynamic_cast<const BudgetError*>(&e))
        return 3;
    return 2;
}

namespace {

double boundary_integral(const DomainGeometry& dom, const std::function<double(const Vec2&, const Vec2&)>& integrand)
{
    using boost::math::quadrature::gauss_kronrod;
    auto f = [&](double th) {
        const Vec2 x = dom.point(th);
        return integrand(x, dom.outward_normal(th)) * dom.tangent(th).norm();
    };
    return gauss_kronrod<double, 61>::integrate(f, 0.0, 2.0 * std::numbers::pi, 15, 1e-13);
}

BoundaryFunction trace_of(const DomainGeometry& dom, long n_b, std::function<cplx(const Vec2&)> u)
{
    return BoundaryFunction::from_function(dom.length(), n_b,
                                           [dom, u](double s) { return u(dom.point(dom.theta_at(s))); });
}

struct Check {
    std::string name;
    double value;
    double reference;
    double error;
    double tolerance;
    bool pass() const { return error <= tolerance; }
};

long seed_K(const ExperimentConfig& c, const ProbeSpec& spec, double N_max)
{
    if (c.noise.K > 0)
        return c.noise.K;
    return probe_truncation(spec, N_max);
}

NoiseRealization realization(const ExperimentConfig& c, std::uint64_t seed, long K)
{
    return c.noise.enabled ? NoiseRealization(seed, K) : NoiseRealization::zero(K);
}

std::string csv_bool(bool b) { return b ? "1" : "0"; }

} // namespace

int cmd_validate(const ExperimentConfig& config, std::ostream& log)
{
    const DomainGeometry dom = make_domain(config);
    const fs::path dir = config.output;
    std::vector<Check> checks;
    const double h = config.validate.h;
    MeshRequest req;
    req.h_far = h;
    req.max_triangles = config.solver.max_triangles;
    const MeshPtr mesh = std::make_shared<const TriMesh>(generate_mesh(dom, req));
    const long n_b = fft_friendly_size(std::max(256L, long(8.0 * dom.length() / h)));
    auto oracle_for = [&](const ConductivityField& g) {
        MeshPolicy p;
        p.h_far = h;
        p.max_triangles = config.solver.max_triangles;
        SolverSettings s;
        s.tolerance = config.solver.tolerance;
        return std::make_unique<CleanOracle>(dom, g, p, OracleMode::Fem, s);
    };

    // Disk multiplier 2π|n| for e^{inϑ}, plus the observed order at n = max_mode / 2.
    if (dom.kind() == DomainGeometry::Kind::UnitDisk) {
        const auto one = oracle_for(builtin_field("constant", {{"c", 1.0}}));
        auto exp_mode = [&](long n, long sign) {
            return trace_of(dom, n_b, [n, sign](const Vec2& x) {
                return std::polar(1.0, double(sign * n) * std::atan2(x.y(), x.x()));
            });
        };
        for (long n = 1; n <= config.validate.max_mode; ++n) {
            const double v = dn_pair(*one, exp_mode(n, 1), exp_mode(n, -1), mesh).real();
            const double ref = 2.0 * std::numbers::pi * double(n);
            checks.push_back({"disk_multiplier_n" + std::to_string(n), v, ref, std::abs(v - ref) / ref,
                              config.validate.tolerance});
        }
        const long n = std::max(1L, config.validate.max_mode / 2);
        MeshRequest fine = req;
        fine.h_far = h / 2.0;
        const MeshPtr fine_mesh = std::make_shared<const TriMesh>(generate_mesh(dom, fine));
        const double ref = 2.0 * std::numbers::pi * double(n);
        const double e1 = std::abs(dn_pair(*one, exp_mode(n, 1), exp_mode(n, -1), mesh).real() - ref);
        const double e2 = std::abs(dn_pair(*one, exp_mode(n, 1), exp_mode(n, -1), fine_mesh).real() - ref);
        const double order = std::log2(e1 / e2);
        checks.push_back({"disk_order_n" + std::to_string(n), order, 2.0, std::max(0.0, 1.5 - order), 0.0});
    } else {
        log << "validate: domain is not the unit disk, multiplier checks skipped\n";
    }

    // γ = e^{αx} with u = e^{-αx}: flux γ∂_νu = -α n_x; paired with g = x.
    {
        const double a = config.validate.alpha;
        const auto o = oracle_for(builtin_field("exponential", {{"c", 1.0}, {"ax", a}}));
        const auto f = trace_of(dom, n_b, [a](const Vec2& x) { return cplx(std::exp(-a * x.x())); });
        const auto g = trace_of(dom, n_b, [](const Vec2& x) { return cplx(x.x()); });
        const double v = dn_pair(*o, f, g, mesh).real();
        const double ref = boundary_integral(dom, [a](const Vec2& x, const Vec2& n) { return -a * n.x() * x.x(); });
        checks.push_back({"exact_exponential", v, ref, std::abs(v - ref) / std::abs(ref), 0.01});
    }
    // γ = γ(x) with u = y: flux γ(x) n_y; paired with g = y.
    {
        const ConductivityField gx =
            builtin_field("trigonometric", {{"c", 2.0}, {"amplitude", 0.5}, {"kx", 2.0}, {"phase", 0.3}});
        const auto o = oracle_for(gx);
        const auto f = trace_of(dom, n_b, [](const Vec2& x) { return cplx(x.y()); });
        const double v = dn_pair(*o, f, f, mesh).real();
        const double ref = boundary_integral(dom, [&](const Vec2& x, const Vec2& n) { return gx(x) * n.y() * x.y(); });
        checks.push_back({"exact_layered", v, ref, std::abs(v - ref) / std::abs(ref), 0.01});
    }
    // Integration-by-parts identity for the configured conductivity.
    {
        const auto o = oracle_for(make_conductivity(config));
        const auto f = trace_of(dom, n_b, [](const Vec2& x) { return cplx(x.x() * x.x(), x.y()); });
        const auto g = trace_of(dom, n_b, [](const Vec2& x) { return std::polar(1.0, 2.0 * x.y()); });
        const double r = identity_residual(*o, f, g, mesh);
        const double scale = std::abs(dn_pair(*o, f, g, mesh)) + std::abs(harmonic_pair(*o, f, g, mesh));
        checks.push_back({"identity_residual", r, 0.0, r / scale, 0.01});
    }

    CsvWriter csv(dir / "validation.csv", "validate", config.hash(),
                  "value and reference in the check's natural units; error relative except disk_order (shortfall below "
                  "order 1.5)",
                  {"check", "value", "reference", "error", "tolerance", "status"});
    bool ok = true;
    for (const auto& c : checks) {
        csv.row({c.name, cell(c.value), cell(c.reference), cell(c.error), cell(c.tolerance), c.pass() ? "pass" : "FAIL"});
        if (!c.pass()) {
            ok = false;
            log << "validate: check '" << c.name << "' failed (error " << c.error << " > " << c.tolerance << ")\n";
        }
    }
    log << "validate: " << checks.size() << " checks, " << (ok ? "all passed" : "failures") << "\n";
    return ok ? 0 : 2;
}

int cmd_recover_gamma(const ExperimentConfig& config, std::ostream& log)
{
    const CleanOracle oracle = make_oracle(config);
    const ConductivityField gamma = make_conductivity(config);
    const ProbeSpec spec = make_spec(config, oracle.domain(), ProbeMode::Gamma);
    const double truth = gamma(spec.chart->anchor());
    const auto& Ns = config.gamma.N;
    const long K = seed_K(config, spec, Ns.back());

    std::vector<cplx> clean(Ns.size());
    parallel_for(long(Ns.size()), [&](long i) { clean[i] = clean_gamma_value(oracle, spec, Ns[i]); });

    const fs::path dir = config.output;
    CsvWriter csv(dir / "recover_gamma.csv", "recover-gamma", config.hash(),
                  "N probe frequency; estimate, clean, noise in conductivity units; truth = gamma(P); abs_err = "
                  "|estimate - truth|",
                  {"seed", "N", "estimate_re", "estimate_im", "clean_re", "clean_im", "noise_re", "noise_im", "truth",
                   "abs_err"});
    for (std::uint64_t seed : config.seeds) {
        const NoisyOracle no{&oracle, realization(config, seed, K)};
        const RecoveryTrace tr = recover_gamma(no, spec, Ns, clean, truth);
        for (const auto& r : tr.rows)
            csv.row({cell(static_cast<unsigned long long>(seed)), cell(r.N), cell(r.estimate.real()),
                     cell(r.estimate.imag()), cell(r.clean.real()), cell(r.clean.imag()), cell(r.noise.real()),
                     cell(r.noise.imag()), cell(truth), cell(*r.error)});
        log << "recover-gamma: seed " << seed << " estimate " << tr.point_estimate().real() << " (truth " << truth
            << ")\n";
    }
    write_plot_script(dir / "recover_gamma.gp",
                      "set logscale xy\nset xlabel 'N'\nset ylabel '|estimate - gamma(P)|'\n"
                      "set terminal pngcairo size 800,600\nset output 'recover_gamma.png'\n"
                      "plot 'recover_gamma.csv' using 2:10 with linespoints title 'abs_err'\n");
    return 0;
}

int cmd_recover_grad(const ExperimentConfig& config, std::ostream& log)
{
    const CleanOracle oracle = make_oracle(config);
    const ConductivityField gamma = make_conductivity(config);
    const ProbeSpec spec = make_spec(config, oracle.domain(), ProbeMode::Grad);
    const WindowPolicy policy = WindowPolicy::parse(config.t_override);
    const fs::path dir = config.output;

    CsvWriter csv(dir / "recover_grad.csv", "recover-grad", config.hash(),
                  "T averaging window in t; Y dimensionless (1/length); target = (grad(gamma).n_in + i "
                  "tau.grad(gamma))/gamma with n_in inward and tau counter-clockwise; stated_target uses the outward "
                  "normal; normal_derivative = outward d(gamma)/dn estimate",
                  {"seed", "N", "T", "T_nominal", "override", "policy", "Q", "gamma_source", "Y_re", "Y_im", "clean_re",
                   "clean_im", "noise_re", "noise_im", "target_re", "target_im", "stated_target_re",
                   "stated_target_im", "abs_err", "normal_derivative", "tangential_derivative"});
    CsvWriter nodes(dir / "recover_grad_nodes.csv", "recover-grad", config.hash(),
                    "t probe parameter; weight midpoint weight; clean integrand dimensionless",
                    {"seed", "N", "k", "t", "weight", "clean_re", "clean_im"});

    GradSettings settings;
    settings.Q = config.grad.Q;
    settings.extrapolate = config.grad.extrapolate;
    settings.K = config.noise.K;

    auto emit = [&](std::uint64_t seed, const GradCleanTable& table, const GradRecovery& r, bool with_nodes) {
        const double T_nominal = std::pow(table.N, 3.0 + 1.5 * spec.theta);
        csv.row({cell(static_cast<unsigned long long>(seed)), cell(table.N), cell(r.window.T), cell(T_nominal),
                 csv_bool(r.window.override_used), r.window.policy, cell(long(r.nodes.size())), table.gamma_source,
                 cell(r.Y.real()), cell(r.Y.imag()), cell(r.clean_average.real()), cell(r.clean_average.imag()),
                 cell(r.noise_average.real()), cell(r.noise_average.imag()), cell(r.target->real()),
                 cell(r.target->imag()), cell(r.stated_target->real()), cell(r.stated_target->imag()),
                 cell(std::abs(r.Y - *r.target)), cell(r.normal_derivative()), cell(r.tangential_derivative())});
        if (with_nodes)
            for (size_t k = 0; k < r.nodes.size(); ++k)
                nodes.row({cell(static_cast<unsigned long long>(seed)), cell(table.N), cell(long(k)),
                           cell(r.nodes[k]), cell(r.weights[k]), cell(table.clean[k].real()),
                           cell(table.clean[k].imag())});
    };

    for (double N : config.grad.N) {
        const Window window = averaging_window(N, spec.theta, policy);
        if (window.override_used)
            log << "recover-grad: N = " << N << " uses T = " << window.T << " (" << window.policy
                << " override of T_N = " << std::pow(N, 3.0 + 1.5 * spec.theta) << ")\n";
        if (config.grad.gamma_boundary == "truth") {
            const BoundaryGamma gb = truth_boundary_gamma(oracle.domain(), gamma);
            GradCleanTable table = grad_clean_table(oracle, spec, gb, N, policy, settings);
            bool first = true;
            for (std::uint64_t seed : config.seeds) {
                const NoisyOracle no{&oracle, realization(config, seed, table.K)};
                GradRecovery r = recover_grad(no, spec, gb, table);
                attach_grad_targets(r, gamma, spec);
                emit(seed, table, r, first);
                first = false;
            }
        } else {
            // Stage 1 runs on the same realization as stage 2.
            for (std::uint64_t seed : config.seeds) {
                const long K1 = seed_K(config, spec, config.grad.stage1_N);
                const double t_max = 2.0 * window.T;
                const long K = std::max(K1, seed_K(config, spec, t_max * t_max));
                const NoisyOracle no{&oracle, realization(config, seed, K)};
                const BoundaryGamma gb =
                    stage_one_gamma(no, config.anchor, config.theta, config.grad.stage1_N, config.grad.stage1_offsets);
                GradSettings s = settings;
                s.K = K;
                GradCleanTable table = grad_clean_table(oracle, spec, gb, N, policy, s);
                GradRecovery r = recover_grad(no, spec, gb, table);
                attach_grad_targets(r, gamma, spec);
                emit(seed, table, r, true);
            }
        }
    }
    write_plot_script(dir / "recover_grad.gp",
                      "set xlabel 't'\nset ylabel 'clean integrand'\n"
                      "set terminal pngcairo size 800,600\nset output 'recover_grad.png'\n"
                      "plot 'recover_grad_nodes.csv' using 4:6 with lines title 'Re', "
                      "'' using 4:7 with lines title 'Im'\n");
    return 0;
}

int cmd_noise_stats(const ExperimentConfig& config, std::ostream& log)
{
    const DomainGeometry dom = make_domain(config);
    const fs::path dir = config.output;
    const auto& ns = config.noise_stats;
    const double L = dom.length();
    const long n_b = fft_friendly_size(4 * ns.K);
    bool ok = true;

    CsvWriter csv(dir / "noise_stats.csv", "noise-stats", config.hash(),
                  "second moments of the noise pairing in (boundary function norm)^4; z = (mc_mean - predicted) / "
                  "std_err",
                  {"pair", "K", "seeds", "mc_mean", "std_err", "closed_form", "predicted", "z", "status"});
    for (long p = 0; p < ns.pairs; ++p) {
        // Band-limited pair with fixed pseudo-random coefficients.
        auto make = [&](long which) {
            std::vector<cplx> c(2 * ns.band + 1);
            for (long n = -ns.band; n <= ns.band; ++n)
                c[n + ns.band] = noise_entry(0xC0FFEEULL + std::uint64_t(p), n + ns.band, which);
            return BoundaryFunction::from_function(L, n_b, [c, band = ns.band, L](double s) {
                cplx v = 0.0;
                for (long n = -band; n <= band; ++n)
                    v += c[n + band] * std::polar(1.0 / std::sqrt(L), 2.0 * std::numbers::pi * double(n) * s / L);
                return v;
            });
        };
        const NoiseCoefficients a = noise_coefficients(make(0), ns.K, 0.0);
        const NoiseCoefficients b = noise_coefficients(make(1), ns.K, 0.0);
        std::vector<double> v(ns.seeds);
        parallel_for(ns.seeds, [&](long s) {
            const NoiseRealization X = realization(config, config.noise.seed + std::uint64_t(s), ns.K);
            v[s] = std::norm(noise_pair(X, a, b));
        });
        double mean = 0.0;
        for (double x : v)
            mean += x;
        mean /= double(ns.seeds);
        double var = 0.0;
        for (double x : v)
            var += (x - mean) * (x - mean);
        const double se = std::sqrt(var / double(ns.seeds - 1) / double(ns.seeds));
        const double closed = noise_second_moment(a, b);
        const double predicted = a.kept_mass * b.kept_mass;
        const double z = se > 0.0 ? (mean - predicted) / se : (config.noise.enabled ? 0.0 : -1e300);
        const bool pass = config.noise.enabled ? (std::abs(z) <= 3.0 && std::abs(closed - predicted) <= 1e-10 * predicted)
                                               : mean == 0.0;
        ok = ok && pass;
        csv.row({cell(p), cell(ns.K), cell(ns.seeds), cell(mean), cell(se), cell(closed), cell(predicted),
                 cell(config.noise.enabled ? z : 0.0), pass ? "pass" : "FAIL"});
        log << "noise-stats: pair " << p << " mean " << mean << " predicted " << predicted << " z " << z << "\n";
    }

    const ProbeSpec spec = make_spec(config, dom, ProbeMode::Grad);
    const BoundaryGamma gb = truth_boundary_gamma(dom, make_conductivity(config));
    CsvWriter fcsv(dir / "filtering.csv", "noise-stats", config.hash(),
                   "T averaging window; estimate = mean |t-averaged noise|^2 over seeds; closed_form exact for the "
                   "discretized average",
                   {"T", "seeds", "route", "rank_f", "rank_g", "estimate", "std_err", "closed_form"});
    std::vector<std::pair<double, double>> pts;
    for (double T : ns.T) {
        const FilteringMoment m =
            filtering_moment(spec, gb, T, ns.filtering_seeds, config.noise.seed, "auto", !config.noise.enabled);
        fcsv.row({cell(T), cell(m.seeds), m.route, cell(m.rank_f), cell(m.rank_g), cell(m.estimate),
                  cell(m.standard_error), cell(m.closed_form)});
        pts.push_back({T, m.estimate});
    }
    CsvWriter fit(dir / "filtering_fit.csv", "noise-stats", config.hash(), "log-log slope of estimate against T",
                  {"slope", "intercept", "predicted", "bound", "status"});
    if (config.noise.enabled && pts.size() >= 4) {
        const RateFit rf = fit_rate(pts);
        const bool pass = rf.slope <= -0.5;
        fit.row({cell(rf.slope), cell(rf.intercept), cell(-2.0 / 3.0), cell(-0.5), pass ? "pass" : "FAIL"});
        log << "noise-stats: filtering slope " << rf.slope << "\n";
    }
    write_plot_script(dir / "filtering.gp",
                      "set logscale xy\nset xlabel 'T'\nset ylabel 'E|average noise|^2'\n"
                      "set terminal pngcairo size 800,600\nset output 'filtering.png'\n"
                      "plot 'filtering.csv' using 1:6:7 with yerrorbars title 'Monte-Carlo', "
                      "'' using 1:8 with lines title 'closed form'\n");
    return ok ? 0 : 2;
}

int cmd_rates(const ExperimentConfig& config, std::ostream& log)
{
    const CleanOracle oracle = make_oracle(config);
    const ConductivityField gamma = make_conductivity(config);
    const fs::path dir = config.output;
    const bool grad = config.rates.mode == "grad";
    const ProbeSpec spec = make_spec(config, oracle.domain(), grad ? ProbeMode::Grad : ProbeMode::Gamma);
    const WindowPolicy policy = WindowPolicy::parse(config.t_override);
    const BoundaryGamma gb = truth_boundary_gamma(oracle.domain(), gamma);
    const double rate = grad ? spec.theta : spec.theta / (1.0 + spec.theta);

    cplx truth = gamma(spec.chart->anchor());
    if (grad) {
        GradRecovery probe;
        attach_grad_targets(probe, gamma, spec);
        truth = *probe.target;
    }

    const auto& Ns = config.rates.N;
    std::vector<cplx> clean(Ns.size());
    if (grad) {
        for (size_t i = 0; i < Ns.size(); ++i) {
            GradSettings s;
            s.clean_only = true;
            const GradCleanTable table = grad_clean_table(oracle, spec, gb, Ns[i], policy, s);
            const NoisyOracle no{&oracle, NoiseRealization::zero(1)};
            clean[i] = recover_grad(no, spec, gb, table).clean_average;
        }
    } else {
        parallel_for(long(Ns.size()), [&](long i) { clean[i] = clean_gamma_value(oracle, spec, Ns[i]); });
    }

    CsvWriter csv(dir / "rates.csv", "rates", config.hash(),
                  "N probe parameter; clean noise-free value; truth gamma(P) (gamma mode) or the derivative target "
                  "(grad mode); abs_err = |clean - truth|",
                  {"mode", "N", "clean_re", "clean_im", "truth_re", "truth_im", "abs_err"});
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < Ns.size(); ++i) {
        const double err = std::abs(clean[i] - truth);
        pts.push_back({Ns[i], err});
        csv.row({config.rates.mode, cell(Ns[i]), cell(clean[i].real()), cell(clean[i].imag()), cell(truth.real()),
                 cell(truth.imag()), cell(err)});
    }
    const RateFit rf = fit_rate(pts);
    const double C = calibrate_radius(pts, rate, config.rates.margin);
    CsvWriter fit(dir / "rates_fit.csv", "rates", config.hash(),
                  "slope and intercept of log(abs_err) against log(N); C calibrated radius constant",
                  {"mode", "slope", "intercept", "rate_bound", "C", "status"});
    const bool slope_ok = rf.slope <= -rate + 0.1;
    fit.row({config.rates.mode, cell(rf.slope), cell(rf.intercept), cell(-rate), cell(C), slope_ok ? "pass" : "FAIL"});
    log << "rates: slope " << rf.slope << " (predicted rate " << -rate << "), C = " << C << "\n";

    CsvWriter q(dir / "quantile.csv", "rates", config.hash(),
                "radius = C N^-rate; fraction of seeds within the radius",
                {"mode", "N", "seeds", "C", "radius", "inside", "fraction"});
    for (double N : config.rates.quantile_N) {
        const QuantileResult qr = quantile_experiment(oracle, spec, N, config.rates.seeds, config.noise.seed, C, truth,
                                                      config.noise.enabled, policy, &gb);
        q.row({config.rates.mode, cell(N), cell(qr.total), cell(C), cell(qr.radius), cell(qr.inside),
               cell(qr.fraction)});
        log << "rates: N = " << N << " fraction " << qr.fraction << "\n";
    }
    write_plot_script(dir / "rates.gp",
                      "set logscale xy\nset xlabel 'N'\nset ylabel 'noise-free error'\n"
                      "set terminal pngcairo size 800,600\nset output 'rates.png'\n"
                      "plot 'rates.csv' using 2:7 with linespoints title 'abs_err'\n");
    return 0;
}

int run_command(const std::string& name, const ExperimentConfig& config, std::ostream& log)
{
    try {
        if (name == "validate")
            return cmd_validate(config, log);
        if (name == "recover-gamma")
            return cmd_recover_gamma(config, log);
        if (name == "recover-grad")
            return cmd_recover_grad(config, log);
        if (name == "noise-stats")
            return cmd_noise_stats(config, log);
        if (name == "rates")
            return cmd_rates(config, log);
        throw ConfigError("unknown command '" + name + "'");
    } catch (const std::exception& e) {
        log << "calderon " << name << ": " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace calderon
