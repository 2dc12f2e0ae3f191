#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include "calderon/error.hpp"
#include "calderon/reconstruct.hpp"

using namespace calderon;

namespace {

struct DiskSetup {
    DomainGeometry domain = DomainGeometry::unit_disk();
    ConductivityField gamma;
    CleanOracle oracle;
    ProbeSpec spec;

    DiskSetup(const ConductivityField& g, ProbeMode mode, MeshPolicy policy = {})
        : gamma(g), oracle(domain, g, policy), spec(make_spec(domain, mode))
    {
    }

    static ProbeSpec make_spec(const DomainGeometry& d, ProbeMode mode)
    {
        const BoundaryChart chart = build_chart(d, 0.0);
        return make_probe_spec(chart, select_xi(chart), 0.5, mode);
    }
};

ConductivityField affine() { return builtin_field("affine", {{"a", 2.0}, {"bx", 1.0}}); }

// Independent evaluation of the summed tail Σ_{n >= n0} c / n^p: explicit terms
// up to n_cut, then the integral bracket for the remainder.
std::pair<double, double> tail_bracket(double c, double p, long n0, long n_cut)
{
    long double s = 0.0L;
    for (long n = n_cut; n >= n0; --n)
        s += 1.0L / std::pow(static_cast<long double>(n), static_cast<long double>(p));
    const double lo = std::pow(double(n_cut + 1), 1.0 - p) / (p - 1.0);
    const double hi = std::pow(double(n_cut), 1.0 - p) / (p - 1.0);
    return {c * (double(s) + lo), c * (double(s) + hi)};
}

} // namespace

TEST_CASE("planner example: smallest N with (N-1)^{1/3} > 30")
{
    CHECK(plan_sample_size(0.1, 0.5, 1.0, PlanMode::Gamma) == 27002);
}

TEST_CASE("planner matches a direct scan of the inequality")
{
    for (double theta : {0.2, 0.5, 0.8})
        for (double eps : {0.9, 0.5, 0.3})
            for (double C : {0.3, 1.0}) {
                for (auto mode : {PlanMode::Gamma, PlanMode::Grad}) {
                    const long n0 = plan_sample_size(eps, theta, C, mode);
                    auto holds = [&](long N) {
                        const double n = double(N - 1);
                        if (mode == PlanMode::Gamma)
                            return C * C / eps * (1 + theta) / (1 - theta) < std::pow(n, (1 - theta) / (1 + theta));
                        return std::pow(n, 1 - theta) > C / ((1 - theta) * eps);
                    };
                    if (n0 > 2000000)
                        continue;
                    long scan = 2;
                    while (!holds(scan))
                        ++scan;
                    CHECK(n0 == scan);
                }
            }
}

TEST_CASE("planned sizes make the summed tail at most epsilon")
{
    for (double theta : {0.2, 0.4, 0.5})
        for (double eps : {0.9, 0.6, 0.4}) {
            const double C = 0.5;
            const long g = plan_sample_size(eps, theta, C, PlanMode::Gamma);
            const long d = plan_sample_size(eps, theta, C, PlanMode::Grad);
            if (g < 100000) {
                const auto [lo, hi] = tail_bracket(C * C, 2.0 / (1.0 + theta), g, 4000000);
                CAPTURE(theta);
                CAPTURE(eps);
                CHECK(hi <= eps);
                CHECK(lo <= hi);
            }
            if (d < 100000) {
                const auto [lo, hi] = tail_bracket(C, 2.0 - theta, d, 4000000);
                CHECK(hi <= eps);
            }
        }
}

TEST_CASE("planner monotonicity and scaling")
{
    long prev = plan_sample_size(0.05, 0.5, 1.0, PlanMode::Gamma);
    for (double eps : {0.1, 0.2, 0.4, 0.8, 0.99}) {
        const long n = plan_sample_size(eps, 0.5, 1.0, PlanMode::Gamma);
        CHECK(n <= prev);
        prev = n;
    }
    // grad mode: N₀ - 1 ~ (C/ε)^{1/(1-θ)}, so doubling C at θ = 1/2 quadruples it
    const double a = double(plan_sample_size(0.01, 0.5, 1.0, PlanMode::Grad) - 1);
    const double b = double(plan_sample_size(0.01, 0.5, 2.0, PlanMode::Grad) - 1);
    CHECK(b / a == doctest::Approx(4.0).epsilon(1e-3));
    CHECK_THROWS_AS(plan_sample_size(1.0, 0.5, 1.0, PlanMode::Gamma), ConfigError);
    CHECK_THROWS_AS(plan_sample_size(0.5, 1.0, 1.0, PlanMode::Gamma), ConfigError);
}

TEST_CASE("averaging windows")
{
    const Window w2 = averaging_window(2, 0.5, WindowPolicy::parse("desk"));
    CHECK(w2.T == doctest::Approx(std::pow(2.0, 3.75)));
    CHECK_FALSE(w2.override_used);
    const Window w4 = averaging_window(4, 0.5, WindowPolicy::parse("desk"));
    CHECK(w4.T == doctest::Approx(8.0));
    CHECK(w4.override_used);
    CHECK(averaging_window(4, 0.5, WindowPolicy::parse("paper")).T == doctest::Approx(std::pow(4.0, 3.75)));
    const Window f = averaging_window(4, 0.5, WindowPolicy::parse("40"));
    CHECK(f.T == 40.0);
    CHECK(f.override_used);
    CHECK(f.policy == "fixed:40");
    CHECK_THROWS_AS(WindowPolicy::parse("fast"), ConfigError);
    CHECK_THROWS_AS(WindowPolicy::parse("0.5"), ConfigError);
}

TEST_CASE("midpoint t-quadrature")
{
    const TQuadrature q = t_quadrature(13.5);
    CHECK(q.nodes.size() == 108);
    double sum = 0.0;
    for (double w : q.weights)
        sum += w;
    CHECK(sum == doctest::Approx(13.5).epsilon(1e-14));
    CHECK(q.nodes.front() == doctest::Approx(13.5 + 0.0625));
    CHECK(t_quadrature(2.0).nodes.size() == 32);
    CHECK(t_quadrature(10.0, 16).nodes.size() == 16);
}

TEST_CASE("fit_rate")
{
    std::vector<std::pair<double, double>> a, b;
    for (double N : {16.0, 32.0, 64.0, 128.0, 256.0}) {
        a.emplace_back(N, std::pow(N, -0.5));
        b.emplace_back(N, 3.0 * std::pow(N, -1.0 / 3.0));
    }
    CHECK(std::abs(fit_rate(a).slope + 0.5) < 1e-12);
    CHECK(fit_rate(b).slope == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(fit_rate(b).intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (int trial = 0; trial < 200; ++trial) {
        auto c = b;
        for (auto& [N, e] : c)
            e *= 1.0 + u(rng);
        CHECK(std::abs(fit_rate(c).slope - fit_rate(b).slope) <= 0.02);
    }
    CHECK_THROWS_AS(fit_rate({{1, 1}, {2, 1}, {3, 1}}), ConfigError);
    CHECK_THROWS_AS(fit_rate({{4, 1}, {4, 2}, {4, 3}, {4, 4}}), ConfigError);
    CHECK_THROWS_AS(fit_rate({{1, 1}, {2, 0}, {3, 1}, {4, 1}}), ConfigError);
}

TEST_CASE("radius calibration")
{
    const double C = calibrate_radius({{16, 0.1}, {64, 0.08}}, 1.0 / 3.0, 3.0);
    CHECK(C == doctest::Approx(3.0 * 0.08 * 4.0));
    const auto spec = DiskSetup::make_spec(DomainGeometry::unit_disk(), ProbeMode::Gamma);
    CHECK(radius_rule(spec, 64, 2.0) == doctest::Approx(2.0 / 4.0));
    const auto grad = DiskSetup::make_spec(DomainGeometry::unit_disk(), ProbeMode::Grad);
    CHECK(radius_rule(grad, 16, 2.0) == doctest::Approx(0.5));
}

TEST_CASE("unit conductivity is recovered at N = 64")
{
    DiskSetup s(builtin_field("constant", {}), ProbeMode::Gamma);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    const RecoveryTrace t = recover_gamma(o, s.spec, {64}, 1.0);
    CHECK(std::abs(t.point_estimate() - 1.0) <= 0.2);
}

TEST_CASE("noise-free estimates of 2+x approach 3 monotonically")
{
    DiskSetup s(affine(), ProbeMode::Gamma);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    const RecoveryTrace t = recover_gamma(o, s.spec, {16, 32, 64, 128}, 3.0);
    for (size_t k = 1; k < t.rows.size(); ++k)
        CHECK(*t.rows[k].error < *t.rows[k - 1].error);
    for (const auto& r : t.rows)
        CHECK(r.noise == 0.0);
}

TEST_CASE("gamma trace bookkeeping with noise")
{
    DiskSetup s(affine(), ProbeMode::Gamma, MeshPolicy{0.1, 6.0});
    const std::vector<double> Ns{8, 16};
    const long K = probe_truncation(s.spec, 16);
    const NoisyOracle o{&s.oracle, sample_noise(5, K)};
    const RecoveryTrace t = recover_gamma(o, s.spec, Ns, 3.0);
    for (size_t k = 0; k < Ns.size(); ++k) {
        const auto& r = t.rows[k];
        CHECK(r.estimate == r.clean + r.noise);
        const long n_b = std::max(probe_grid_size(s.spec, Ns[k]), fft_friendly_size(2 * K + 2));
        const BoundaryFunction f = probe_gamma(s.spec, Ns[k], n_b);
        CHECK(std::abs(r.noise - noise_pair(o.noise, f, f.conj())) <= 1e-14 * std::max(1.0, std::abs(r.noise)));
    }
    CHECK_THROWS_AS(recover_gamma(o, s.spec, {16, 8}), ConfigError);
}

TEST_CASE("constant conductivity gives a vanishing grad average")
{
    DiskSetup s(builtin_field("constant", {{"c", 2.0}}), ProbeMode::Grad, MeshPolicy{0.1, 6.0});
    const BoundaryGamma gb = truth_boundary_gamma(s.domain, s.gamma);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    GradRecovery r = recover_grad(o, s.spec, gb, 2, WindowPolicy::parse("4"));
    attach_grad_targets(r, s.gamma, s.spec);
    CHECK(std::abs(*r.target) == 0.0);
    CHECK(std::abs(r.Y) <= 1.0 / r.window.T);
    CHECK(std::abs(r.Y) <= 1e-8);
}

TEST_CASE("tangential sign for e^y follows the counter-clockwise tangent")
{
    DiskSetup s(builtin_field("exponential", {{"ay", 1.0}}), ProbeMode::Grad);
    const BoundaryGamma gb = truth_boundary_gamma(s.domain, s.gamma);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    GradSettings settings;
    settings.Q = 16;
    GradRecovery r = recover_grad(o, s.spec, gb, 2, WindowPolicy::parse("10"), settings);
    attach_grad_targets(r, s.gamma, s.spec);
    CHECK(std::abs(*r.target - cplx(0.0, 1.0)) < 1e-14);
    CHECK(std::abs(r.Y - *r.target) <= 0.1);
    CHECK(r.tangential_derivative() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("grad noise kernel equals the per-node sum")
{
    DiskSetup s(affine(), ProbeMode::Grad, MeshPolicy{0.1, 6.0});
    const BoundaryGamma gb = truth_boundary_gamma(s.domain, s.gamma);
    GradCleanTable table = grad_clean_table(s.oracle, s.spec, gb, 2, WindowPolicy::parse("3"));
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        const NoisyOracle o{&s.oracle, sample_noise(seed, table.K)};
        const GradRecovery r = recover_grad(o, s.spec, gb, table);
        cplx direct = 0.0;
        for (size_t k = 0; k < r.nodes.size(); ++k)
            direct += r.weights[k] * noise_pair(o.noise, table.f_coefficients[k], table.g_coefficients[k]);
        direct /= table.window.T;
        CHECK(std::abs(r.noise_average - direct) <= 1e-12 * std::abs(direct));
        CHECK(r.Y == r.clean_average + r.noise_average);
    }
    const NoisyOracle short_noise{&s.oracle, sample_noise(1, table.K - 1)};
    CHECK_THROWS_AS(recover_grad(short_noise, s.spec, gb, table), ResolutionError);
}

TEST_CASE("grad average responds linearly to the boundary conductivity")
{
    DiskSetup s(affine(), ProbeMode::Grad, MeshPolicy{0.1, 6.0});
    const BoundaryGamma truth = truth_boundary_gamma(s.domain, s.gamma);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    const WindowPolicy policy = WindowPolicy::parse("3");
    const cplx base = recover_grad(o, s.spec, truth, 2, policy).Y;
    auto shifted = [&](double delta) {
        BoundaryGamma g = truth;
        g.value = [v = truth.value, delta](double t) { return v(t) + delta; };
        return recover_grad(o, s.spec, g, 2, policy).Y;
    };
    const double K = std::abs(shifted(1e-3) - base) / 1e-3;
    for (double delta : {2e-3, 5e-3, 1e-2})
        CHECK(std::abs(shifted(delta) - base) <= 1.1 * K * delta);
}

TEST_CASE("stage one reproduces the boundary conductivity near P")
{
    DiskSetup s(affine(), ProbeMode::Grad);
    const NoisyOracle o{&s.oracle, NoiseRealization::zero(1)};
    const BoundaryGamma g = stage_one_gamma(o, 0.0, 0.5, 64, {-0.1, -0.05, 0.0, 0.05, 0.1});
    CHECK(g.source == "stage1");
    for (double sarc : {-0.08, 0.0, 0.07}) {
        const double s_mod = std::fmod(sarc + 2 * std::numbers::pi, 2 * std::numbers::pi);
        CHECK(std::abs(g.value(s_mod) - (2.0 + std::cos(sarc))) <= 0.15);
    }
    CHECK_THROWS_AS(stage_one_gamma(o, 0.0, 0.5, 64, {0.0, 0.1}), ConfigError);
}

TEST_CASE("filtering moment without noise vanishes")
{
    const auto spec = DiskSetup::make_spec(DomainGeometry::unit_disk(), ProbeMode::Grad);
    const BoundaryGamma gb = truth_boundary_gamma(DomainGeometry::unit_disk(), affine());
    const FilteringMoment m = filtering_moment(spec, gb, 16, 20, 1, "adapted", true);
    CHECK(m.estimate == 0.0);
}

TEST_CASE("filtering routes agree on the closed form")
{
    const auto spec = DiskSetup::make_spec(DomainGeometry::unit_disk(), ProbeMode::Grad);
    const BoundaryGamma gb = truth_boundary_gamma(DomainGeometry::unit_disk(), affine());
    const FilteringMoment a = filtering_moment(spec, gb, 2, 50, 1, "fourier");
    const FilteringMoment b = filtering_moment(spec, gb, 2, 50, 1, "adapted");
    CHECK(b.closed_form == doctest::Approx(a.closed_form).epsilon(1e-3));
    CHECK(a.route == "fourier");
    CHECK(b.route == "adapted");
}

TEST_CASE("filtering moment decreases along a doubling grid")
{
    const auto spec = DiskSetup::make_spec(DomainGeometry::unit_disk(), ProbeMode::Grad);
    const BoundaryGamma gb = truth_boundary_gamma(DomainGeometry::unit_disk(), affine());
    std::vector<FilteringMoment> m;
    for (double T : {16.0, 32.0, 64.0})
        m.push_back(filtering_moment(spec, gb, T, 500));
    for (size_t k = 1; k < m.size(); ++k) {
        CHECK(m[k].estimate < m[k - 1].estimate + 2 * (m[k].standard_error + m[k - 1].standard_error));
        CHECK(std::abs(m[k].estimate - m[k].closed_form) <= 4 * m[k].standard_error);
    }
}

TEST_CASE("quantile experiment")
{
    DiskSetup s(affine(), ProbeMode::Gamma);
    // noise off: all or nothing
    const QuantileResult off = quantile_experiment(s.oracle, s.spec, 32, 10, 1, 1.0, 3.0, false);
    CHECK((off.fraction == 0.0 || off.fraction == 1.0));

    // calibrate C from noise-free errors, then run at the planned size for ε = 1/2
    const NoisyOracle silent{&s.oracle, NoiseRealization::zero(1)};
    const RecoveryTrace t = recover_gamma(silent, s.spec, {16, 32, 64}, 3.0);
    std::vector<std::pair<double, double>> errors;
    for (const auto& r : t.rows)
        errors.emplace_back(r.N, *r.error);
    const double C = calibrate_radius(errors, 1.0 / 3.0);
    double c_boundary = 0.0;
    for (double N : {4.0, 16.0, 64.0})
        c_boundary = std::max(c_boundary, N * probe_gamma(s.spec, N).norm_squared());
    const double eps = 0.5;
    const long N0 = plan_sample_size(eps, 0.5, c_boundary, PlanMode::Gamma);
    CHECK(N0 < 400);
    const long seeds = 200;
    const QuantileResult q = quantile_experiment(s.oracle, s.spec, double(N0), seeds, 1, C, 3.0);
    const double sigma = std::sqrt(eps * (1 - eps) / seeds);
    CHECK(q.fraction >= 1 - eps - 3 * sigma);

    // nondecreasing along a doubling grid up to 2σ
    double prev = 0.0;
    for (double N : {16.0, 32.0, 64.0}) {
        const QuantileResult r = quantile_experiment(s.oracle, s.spec, N, seeds, 1, C, 3.0);
        const double sd = std::sqrt(std::max(r.fraction * (1 - r.fraction), 0.25 / seeds) / seeds);
        CHECK(r.fraction >= prev - 2 * sd);
        prev = r.fraction;
    }
}

TEST_CASE("parallel runs do not depend on the worker count")
{
    DiskSetup s(affine(), ProbeMode::Grad, MeshPolicy{0.1, 6.0});
    const BoundaryGamma gb = truth_boundary_gamma(s.domain, s.gamma);
    ::setenv("CALDERON_WORKERS", "1", 1);
    const GradCleanTable one = grad_clean_table(s.oracle, s.spec, gb, 2, WindowPolicy::parse("3"));
    const GradRecovery r1 = recover_grad(NoisyOracle{&s.oracle, sample_noise(3, one.K)}, s.spec, gb, one);
    ::setenv("CALDERON_WORKERS", "3", 1);
    const GradCleanTable three = grad_clean_table(s.oracle, s.spec, gb, 2, WindowPolicy::parse("3"));
    const GradRecovery r3 = recover_grad(NoisyOracle{&s.oracle, sample_noise(3, three.K)}, s.spec, gb, three);
    ::unsetenv("CALDERON_WORKERS");
    CHECK(one.clean == three.clean);
    CHECK(r1.clean_average == r3.clean_average);
    CHECK(std::abs(r1.noise_average - r3.noise_average) <= 1e-15 * std::abs(r1.noise_average));
}
