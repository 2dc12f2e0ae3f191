#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "calderon/noise.hpp"
#include "calderon/probes.hpp"

namespace calderon {

/// Runs body(i) for i in [0, n) on a pool of worker threads. Results must be
/// written to index-addressed slots so that the outcome does not depend on
/// scheduling. The pool size comes from CALDERON_WORKERS (default 1).
void parallel_for(long n, const std::function<void(long)>& body);
int worker_count();

/// Conductivity on the boundary as a function of arclength.
struct BoundaryGamma {
    std::function<double(double)> value;
    std::string source; // "truth" or "stage1"

    BoundaryFunction sampled(double length, long n_b) const;
};

BoundaryGamma truth_boundary_gamma(const DomainGeometry& domain, const ConductivityField& gamma);

struct RecoveryRow {
    double N = 0.0;
    cplx estimate;
    cplx clean;
    cplx noise;
    std::optional<double> error; // |estimate - truth|
};

struct RecoveryTrace {
    std::vector<RecoveryRow> rows;
    double theta = 0.5;
    std::uint64_t seed = 0;
    bool noise_enabled = false;
    double anchor = 0.0; // ϑ_P
    long K = 0;
    std::optional<double> truth;

    cplx point_estimate() const { return rows.empty() ? cplx(0.0) : rows.back().estimate; }
};

/// Noise truncation used by the drivers: truncation_rule, enlarged until the
/// probe at N_max leaves at most `tail` of its mass beyond the truncation.
long probe_truncation(const ProbeSpec& spec, double N_max, double tail = 1e-3);

/// Clean pairing dn_pair(f_N, conj f_N) on the oracle's graded mesh for the probe.
cplx clean_gamma_value(const CleanOracle& oracle, const ProbeSpec& spec, double N);

/// estimate(N) = noisy_pair(f_N, conj f_N) for each N of an increasing list.
/// truth, when given, fills the error column.
RecoveryTrace recover_gamma(const NoisyOracle& oracle, const ProbeSpec& spec, const std::vector<double>& N_list,
                            std::optional<double> truth = std::nullopt);

/// Same with the clean column supplied (computed once, reused across seeds).
RecoveryTrace recover_gamma(const NoisyOracle& oracle, const ProbeSpec& spec, const std::vector<double>& N_list,
                            const std::vector<cplx>& clean, std::optional<double> truth = std::nullopt);

/// Stage-1 γ_b: recover_gamma estimates at boundary points offset from the
/// anchor by the given arclengths, joined by a least-squares quadratic in
/// the arclength offset. Needs at least three offsets.
BoundaryGamma stage_one_gamma(const NoisyOracle& oracle, double theta_anchor, double theta_holder, double N,
                              const std::vector<double>& offsets);

enum class PlanMode { Gamma, Grad };

/// Smallest integer N₀ >= 2 with
///   gamma: (C²/ε)(1+θ)/(1-θ) < (N₀-1)^{(1-θ)/(1+θ)}
///   grad:  (N₀-1)^{1-θ} > C/((1-θ)ε)
long plan_sample_size(double epsilon, double theta, double C, PlanMode mode);

/// Averaging window for the normal-derivative formula.
struct WindowPolicy {
    enum class Kind { Paper, Desk, Fixed };
    Kind kind = Kind::Desk;
    double fixed = 0.0;

    static WindowPolicy parse(const std::string& text); // "paper", "desk" or a number
    std::string describe() const;
};

struct Window {
    double T = 0.0;
    bool override_used = false;
    std::string policy;
};

/// T_N = N^{3+3θ/2}. Under the desk policy this is honored for N <= 3 and
/// replaced by N^{3/2} above; a fixed policy always overrides.
Window averaging_window(double N, double theta, const WindowPolicy& policy);

/// Composite midpoint rule on [T, 2T] with Q = max(32, ⌈8T⌉) nodes unless Q > 0.
struct TQuadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};
TQuadrature t_quadrature(double T, long Q = 0);

struct GradSettings {
    /// When set, the clean term at each node is the Richardson combination
    /// (4·Y(2 ppw) − Y(ppw))/3 of two graded meshes; the FEM bias is O(ppw⁻²).
    bool extrapolate = false;
    long Q = 0;
    long K = 0; // noise truncation; 0 means truncation_rule at t = 2T
    /// Skip the noise coefficients and kernel; the table then only serves
    /// noise-free evaluations.
    bool clean_only = false;
};

/// Seed-independent part of a normal-derivative run: per node the clean
/// integrand and the noise coefficients of both pairing arguments.
struct GradCleanTable {
    double N = 0.0;
    Window window;
    TQuadrature quadrature;
    long K = 0;
    std::vector<cplx> clean; // dn_pair(f, conj f/γ_b) - harmonic_pair(f, conj f)
    std::vector<NoiseCoefficients> f_coefficients;
    std::vector<NoiseCoefficients> g_coefficients;
    /// Σ_k w_k a_k b_kᵀ / T over the union of the kept indices, so the window
    /// average of the noise is Σ W_ij X(rows_i, cols_j) for any realization.
    std::vector<long> kernel_rows, kernel_cols;
    Eigen::MatrixXcd kernel;
    bool extrapolated = false;
    std::string gamma_source;
};

GradCleanTable grad_clean_table(const CleanOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                                double N, const WindowPolicy& policy, const GradSettings& settings = {});
GradCleanTable grad_clean_table(const CleanOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                                const Window& window, const GradSettings& settings = {});

struct GradRecovery {
    double N = 0.0;
    Window window;
    std::vector<double> nodes;
    std::vector<double> weights;
    cplx Y;
    cplx clean_average;
    cplx noise_average;
    std::uint64_t seed = 0;
    bool extrapolated = false;
    /// Limit of Y_N from the truth: (∇γ·n_in + iτ·∇γ)/γ with n_in the inward normal.
    std::optional<cplx> target;
    /// The same combination written with the outward normal, (∂_νγ + iτ·∇γ)/γ.
    std::optional<cplx> stated_target;
    double gamma_at_P = 0.0;

    /// Outward normal derivative estimate -γ(P) Re Y and tangential γ(P) Im Y.
    double normal_derivative() const { return -gamma_at_P * Y.real(); }
    double tangential_derivative() const { return gamma_at_P * Y.imag(); }
};

/// Y_N for the oracle's realization using a precomputed clean table.
GradRecovery recover_grad(const NoisyOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                          const GradCleanTable& table);
/// One-shot form: builds the table, then evaluates.
GradRecovery recover_grad(const NoisyOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b, double N,
                          const WindowPolicy& policy = {}, const GradSettings& settings = {});

/// Truth values for a grad run at the spec's anchor.
void attach_grad_targets(GradRecovery& result, const ConductivityField& gamma, const ProbeSpec& spec);

struct FilteringMoment {
    double T = 0.0;
    double estimate = 0.0;       // mean over seeds of |A|²
    double standard_error = 0.0;
    double closed_form = 0.0;    // exact E|A|² for the discretized average
    long seeds = 0;
    long rank_f = 0;
    long rank_g = 0;
    std::string route;           // "fourier" or "adapted"
};

/// Monte-Carlo E|(1/T) Σ_k w_k noise_pair(f_k, conj f_k/γ_b)|² over seeds
/// seed0, seed0+1, ... on the t-quadrature of recover_grad.
///
/// The fourier route pairs the boundary Fourier coefficients with X directly.
/// The adapted route expands the probe span in an orthonormal basis of its
/// own and draws X in that basis, which has the same law because the iid
/// circular Gaussian family is invariant under unitary changes of basis.
FilteringMoment filtering_moment(const ProbeSpec& spec, const BoundaryGamma& gamma_b, double T, long n_seeds,
                                 std::uint64_t seed0 = 1, const std::string& route = "auto", bool zero_noise = false);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Least squares on (log N, log err). Needs four points with err > 0 and two
/// distinct N (ConfigError otherwise).
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

/// C = margin · max_N err(N) N^{rate}, from noise-free errors.
double calibrate_radius(const std::vector<std::pair<double, double>>& clean_errors, double rate,
                        double margin = 3.0);

struct QuantileResult {
    double fraction = 0.0;
    long inside = 0;
    long total = 0;
    double radius = 0.0;
};

/// Fraction of seeds with |clean + noise(seed) - truth| <= radius. Gamma
/// mode uses the probe f_N; grad mode the clean table of N. Seeds are
/// seed0 .. seed0 + n_seeds - 1; noise off counts the clean value once per seed.
QuantileResult quantile_experiment(const CleanOracle& oracle, const ProbeSpec& spec, double N, long n_seeds,
                                   std::uint64_t seed0, double radius_constant, cplx truth, bool noise_enabled = true,
                                   const WindowPolicy& policy = {}, const BoundaryGamma* gamma_b = nullptr);

/// Radius C·N^{-θ/(1+θ)} (gamma) or C·N^{-θ} (grad).
double radius_rule(const ProbeSpec& spec, double N, double C);

} // namespace calderon
