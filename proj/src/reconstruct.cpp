#include "calderon/reconstruct.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include <Eigen/SVD>

#include "calderon/error.hpp"

namespace calderon {

int worker_count()
{
    const char* env = std::getenv("CALDERON_WORKERS");
    if (!env || !*env)
        return 1;
    const int n = std::atoi(env);
    return std::clamp(n, 1, 256);
}

void parallel_for(long n, const std::function<void(long)>& body)
{
    const int workers = int(std::min<long>(worker_count(), n));
    if (workers <= 1) {
        for (long i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (long i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

BoundaryFunction BoundaryGamma::sampled(double length, long n_b) const
{
    auto v = value;
    return BoundaryFunction::from_function(length, n_b, [v](double s) { return cplx(v(s)); });
}

BoundaryGamma truth_boundary_gamma(const DomainGeometry& domain, const ConductivityField& gamma)
{
    BoundaryGamma g;
    g.value = [domain, value = gamma.value](double s) { return value(domain.point(domain.theta_at(s))); };
    g.source = "truth";
    return g;
}

long probe_truncation(const ProbeSpec& spec, double N_max, double tail)
{
    const long rule = truncation_rule(N_max, spec.xi_prime_norm(), spec.chart->domain().length());
    const long n_b = std::max(probe_grid_size(spec, N_max), fft_friendly_size(8 * rule));
    const BoundaryFunction f =
        spec.mode == ProbeMode::Gamma ? probe_gamma(spec, N_max, n_b) : probe_grad(spec, std::sqrt(N_max), n_b);
    // mass per basis index, then the shortest prefix whose complement is below the tail fraction
    const auto& c = f.spectrum();
    std::vector<std::pair<long, double>> mass(n_b);
    double total = 0.0;
    for (long bin = 0; bin < n_b; ++bin) {
        const long mode = bin < n_b - n_b / 2 ? bin : bin - n_b;
        mass[bin] = {basis_index(mode), std::norm(c[bin])};
        total += mass[bin].second;
    }
    std::sort(mass.begin(), mass.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double beyond = 0.0;
    long needed = 1;
    for (const auto& [index, m] : mass) {
        if (beyond + m > tail * total) {
            needed = index + 1;
            break;
        }
        beyond += m;
    }
    return std::max(rule, needed);
}

// ---------------------------------------------------------------------------
// γ(P)

namespace {

MeshPtr probe_mesh(const CleanOracle& oracle, const ProbeSpec& spec, double N, double M)
{
    return oracle.make_mesh(oracle.probe_request(spec.chart->theta_anchor(), N * spec.xi_prime_norm(), M));
}

long noise_K(const ProbeSpec& spec, double N_max)
{
    return spec.K > 0 ? spec.K : probe_truncation(spec, N_max);
}

// Grid that resolves the probe and every index below K.
long grid_for(const ProbeSpec& spec, double N, long K)
{
    return std::max(probe_grid_size(spec, N), fft_friendly_size(2 * K + 2));
}

} // namespace

cplx clean_gamma_value(const CleanOracle& oracle, const ProbeSpec& spec, double N)
{
    if (spec.mode != ProbeMode::Gamma)
        throw ConfigError("recover_gamma needs a gamma-mode probe");
    const BoundaryFunction f = probe_gamma(spec, N);
    return dn_pair(oracle, f, f.conj(), probe_mesh(oracle, spec, N, spec.M_of(N)));
}

RecoveryTrace recover_gamma(const NoisyOracle& oracle, const ProbeSpec& spec, const std::vector<double>& N_list,
                            const std::vector<cplx>& clean, std::optional<double> truth)
{
    if (spec.mode != ProbeMode::Gamma)
        throw ConfigError("recover_gamma needs a gamma-mode probe");
    if (clean.size() != N_list.size())
        throw ConfigError("clean column does not match the N list");
    for (size_t i = 1; i < N_list.size(); ++i)
        if (!(N_list[i] > N_list[i - 1]))
            throw ConfigError("N list must be increasing");
    RecoveryTrace trace;
    trace.theta = spec.theta;
    trace.seed = oracle.noise.seed();
    trace.noise_enabled = !oracle.noise.is_zero();
    trace.anchor = spec.chart->theta_anchor();
    trace.K = oracle.noise.K();
    trace.truth = truth;
    trace.rows.resize(N_list.size());
    for (size_t i = 0; i < N_list.size(); ++i) {
        RecoveryRow& row = trace.rows[i];
        row.N = N_list[i];
        row.clean = clean[i];
        if (!oracle.noise.is_zero()) {
            const long n_b = grid_for(spec, row.N, oracle.noise.K());
            const BoundaryFunction f = probe_gamma(spec, row.N, n_b);
            row.noise = noise_pair(oracle.noise, f, f.conj());
        }
        row.estimate = row.clean + row.noise;
        if (truth)
            row.error = std::abs(row.estimate - *truth);
    }
    return trace;
}

RecoveryTrace recover_gamma(const NoisyOracle& oracle, const ProbeSpec& spec, const std::vector<double>& N_list,
                            std::optional<double> truth)
{
    std::vector<cplx> clean(N_list.size());
    for (size_t i = 0; i < N_list.size(); ++i)
        clean[i] = clean_gamma_value(*oracle.clean, spec, N_list[i]);
    return recover_gamma(oracle, spec, N_list, clean, truth);
}

BoundaryGamma stage_one_gamma(const NoisyOracle& oracle, double theta_anchor, double theta_holder, double N,
                              const std::vector<double>& offsets)
{
    if (offsets.size() < 3)
        throw ConfigError("stage-1 interpolation needs at least three boundary points");
    const DomainGeometry& dom = oracle.clean->domain();
    const double L = dom.length();
    const double s_P = dom.arclength(theta_anchor);
    std::vector<double> est(offsets.size());
    for (size_t i = 0; i < offsets.size(); ++i) {
        const double s = std::fmod(std::fmod(s_P + offsets[i], L) + L, L);
        const BoundaryChart chart = build_chart(dom, dom.theta_at(s));
        const ProbeSpec spec = make_probe_spec(chart, select_xi(chart), theta_holder, ProbeMode::Gamma);
        const RecoveryTrace tr = recover_gamma(oracle, spec, {N});
        est[i] = tr.point_estimate().real();
        if (!(est[i] > 0.0))
            throw ToleranceError("stage-1 estimate of γ is not positive");
    }
    // Least-squares quadratic in the offset.
    Eigen::MatrixXd A(offsets.size(), 3);
    Eigen::VectorXd b(offsets.size());
    for (size_t i = 0; i < offsets.size(); ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = offsets[i];
        A(i, 2) = offsets[i] * offsets[i];
        b(i) = est[i];
    }
    const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
    const auto [lo, hi] = std::minmax_element(offsets.begin(), offsets.end());
    const double d_lo = *lo, d_hi = *hi;
    BoundaryGamma g;
    g.source = "stage1";
    g.value = [c, s_P, L, d_lo, d_hi](double s) {
        double d = std::remainder(s - s_P, L);
        d = std::clamp(d, d_lo, d_hi);
        return c(0) + d * (c(1) + d * c(2));
    };
    return g;
}

// ---------------------------------------------------------------------------
// Planner

long plan_sample_size(double epsilon, double theta, double C, PlanMode mode)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ConfigError("epsilon must lie in (0, 1)");
    if (!(theta > 0.0 && theta < 1.0))
        throw ConfigError("theta must lie in (0, 1)");
    if (!(C > 0.0))
        throw ConfigError("constant C must be positive");
    long double threshold, exponent;
    if (mode == PlanMode::Gamma) {
        threshold = (static_cast<long double>(C) * C / epsilon) * (1.0L + theta) / (1.0L - theta);
        exponent = (1.0L - theta) / (1.0L + theta);
    } else {
        threshold = C / ((1.0L - theta) * epsilon);
        exponent = 1.0L - theta;
    }
    // Smallest n = N₀ - 1 >= 1 with n^e > threshold. Exact ties (n^e equal
    // to the threshold up to round-off) do not satisfy the strict inequality.
    auto satisfies = [&](long double n) {
        return exponent * std::log(n) > std::log(threshold) + 1e-15L * std::max(1.0L, std::abs(std::log(threshold)));
    };
    const long double guess = std::pow(threshold, 1.0L / exponent);
    if (guess > 9e15L)
        throw BudgetError("planned sample size overflows");
    long n = std::max(1L, long(std::floor(guess)) - 2);
    while (n > 1 && satisfies(n - 1))
        --n;
    while (!satisfies(n))
        ++n;
    return n + 1;
}

// ---------------------------------------------------------------------------
// Normal derivative

WindowPolicy WindowPolicy::parse(const std::string& text)
{
    WindowPolicy p;
    if (text == "paper")
        p.kind = Kind::Paper;
    else if (text == "desk" || text.empty())
        p.kind = Kind::Desk;
    else {
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end == text.c_str() || *end != '\0' || !(v >= 1.0))
            throw ConfigError("t-override must be 'paper', 'desk' or a number >= 1, got '" + text + "'");
        p.kind = Kind::Fixed;
        p.fixed = v;
    }
    return p;
}

std::string WindowPolicy::describe() const
{
    switch (kind) {
    case Kind::Paper:
        return "paper";
    case Kind::Desk:
        return "desk";
    case Kind::Fixed: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "fixed:%.17g", fixed);
        return buf;
    }
    }
    return "";
}

Window averaging_window(double N, double theta, const WindowPolicy& policy)
{
    if (!(N >= 1.0))
        throw ConfigError("N must be at least 1");
    Window w;
    w.policy = policy.describe();
    const double paper_T = std::pow(N, 3.0 + 1.5 * theta);
    switch (policy.kind) {
    case WindowPolicy::Kind::Paper:
        w.T = paper_T;
        break;
    case WindowPolicy::Kind::Desk:
        if (N <= 3.0) {
            w.T = paper_T;
        } else {
            w.T = std::pow(N, 1.5);
            w.override_used = true;
        }
        break;
    case WindowPolicy::Kind::Fixed:
        w.T = policy.fixed;
        w.override_used = true;
        break;
    }
    if (w.T < 1.0)
        w.T = 1.0;
    return w;
}

TQuadrature t_quadrature(double T, long Q)
{
    if (!(T >= 1.0))
        throw ConfigError("averaging window T must be at least 1");
    if (Q <= 0)
        Q = std::max(32L, long(std::ceil(8.0 * T)));
    TQuadrature q;
    const double h = T / double(Q);
    q.nodes.resize(Q);
    q.weights.assign(Q, h);
    for (long k = 0; k < Q; ++k)
        q.nodes[k] = T + (double(k) + 0.5) * h;
    return q;
}

namespace {

void check_positive_on_support(const BoundaryFunction& f, const BoundaryFunction& gb)
{
    const auto fs = f.samples();
    const auto gs = gb.samples();
    for (size_t k = 0; k < fs.size(); ++k)
        if (fs[k] != 0.0 && !(gs[k].real() > 0.0))
            throw ConfigError("boundary conductivity must be positive on the probe support");
}

cplx clean_grad_integrand(const CleanOracle& oracle, const ProbeSpec& spec, const BoundaryFunction& f,
                          const BoundaryFunction& fc, const BoundaryFunction& g, double t)
{
    const MeshPtr mesh = probe_mesh(oracle, spec, t * t, t);
    return dn_pair(oracle, f, g, mesh) - harmonic_pair(oracle, f, fc, mesh);
}

} // namespace

GradCleanTable grad_clean_table(const CleanOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                                const Window& window, const GradSettings& settings)
{
    if (spec.mode != ProbeMode::Grad)
        throw ConfigError("recover_grad needs a grad-mode probe");
    if (1.0 / window.T > spec.chart->radius())
        throw GeometryError("probe support 1/T exceeds the chart radius");
    GradCleanTable table;
    table.window = window;
    table.quadrature = t_quadrature(window.T, settings.Q);
    table.extrapolated = settings.extrapolate;
    table.gamma_source = gamma_b.source;
    const double t_max = 2.0 * window.T;
    table.K = settings.clean_only ? 0 : settings.K > 0 ? settings.K : noise_K(spec, t_max * t_max);

    std::unique_ptr<CleanOracle> fine;
    if (settings.extrapolate) {
        MeshPolicy p = oracle.policy();
        p.ppw *= 2.0;
        fine = std::make_unique<CleanOracle>(oracle.domain(), oracle.gamma(), p, oracle.mode(), oracle.settings());
        fine->set_cache_capacity(1);
    }

    const long Q = long(table.quadrature.nodes.size());
    const double L = spec.chart->domain().length();
    table.clean.resize(Q);
    table.f_coefficients.resize(Q);
    table.g_coefficients.resize(Q);
    parallel_for(Q, [&](long k) {
        const double t = table.quadrature.nodes[k];
        const long n_b = grid_for(spec, t * t, std::max(table.K, 1L));
        const BoundaryFunction f = probe_grad(spec, t, n_b);
        const BoundaryFunction fc = f.conj();
        const BoundaryFunction gb = gamma_b.sampled(L, n_b);
        check_positive_on_support(f, gb);
        const BoundaryFunction g = pointwise_div(fc, gb);
        cplx y = clean_grad_integrand(oracle, spec, f, fc, g, t);
        if (fine)
            y = (4.0 * clean_grad_integrand(*fine, spec, f, fc, g, t) - y) / 3.0;
        table.clean[k] = y;
        if (table.K > 0) {
            table.f_coefficients[k] = noise_coefficients(f, table.K);
            table.g_coefficients[k] = noise_coefficients(g, table.K);
        }
    });
    if (table.K == 0)
        return table;

    auto gather = [Q](const std::vector<NoiseCoefficients>& c, std::vector<long>& index, Eigen::MatrixXcd& m) {
        for (const auto& ck : c)
            for (const auto& v : ck.values)
                index.push_back(v.index);
        std::sort(index.begin(), index.end());
        index.erase(std::unique(index.begin(), index.end()), index.end());
        m = Eigen::MatrixXcd::Zero(Q, long(index.size()));
        for (long k = 0; k < Q; ++k)
            for (const auto& v : c[k].values)
                m(k, std::lower_bound(index.begin(), index.end(), v.index) - index.begin()) = v.value;
    };
    Eigen::MatrixXcd A, B;
    gather(table.f_coefficients, table.kernel_rows, A);
    gather(table.g_coefficients, table.kernel_cols, B);
    Eigen::VectorXd w(Q);
    for (long k = 0; k < Q; ++k)
        w[k] = table.quadrature.weights[k] / window.T;
    table.kernel = A.transpose() * w.asDiagonal() * B;
    return table;
}

GradCleanTable grad_clean_table(const CleanOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                                double N, const WindowPolicy& policy, const GradSettings& settings)
{
    GradCleanTable table = grad_clean_table(oracle, spec, gamma_b, averaging_window(N, spec.theta, policy), settings);
    table.N = N;
    return table;
}

GradRecovery recover_grad(const NoisyOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b,
                          const GradCleanTable& table)
{
    GradRecovery r;
    r.N = table.N;
    r.window = table.window;
    r.nodes = table.quadrature.nodes;
    r.weights = table.quadrature.weights;
    r.seed = oracle.noise.seed();
    r.extrapolated = table.extrapolated;
    const long Q = long(r.nodes.size());
    cplx clean = 0.0;
    for (long k = 0; k < Q; ++k)
        clean += r.weights[k] * table.clean[k];
    r.clean_average = clean / table.window.T;
    r.noise_average = 0.0;
    if (!oracle.noise.is_zero()) {
        if (table.K == 0)
            throw ResolutionError("clean-only table cannot evaluate noise");
        if (oracle.noise.K() < table.K)
            throw ResolutionError("noise realization is shorter than the table's truncation");
        const long rows = long(table.kernel_rows.size());
        std::vector<cplx> partial(rows, 0.0);
        parallel_for(rows, [&](long i) {
            cplx acc = 0.0;
            for (long j = 0; j < long(table.kernel_cols.size()); ++j)
                if (table.kernel(i, j) != 0.0)
                    acc += table.kernel(i, j) * oracle.noise(table.kernel_rows[i], table.kernel_cols[j]);
            partial[i] = acc;
        });
        for (const cplx& p : partial)
            r.noise_average += p;
    }
    r.Y = r.clean_average + r.noise_average;
    const DomainGeometry& dom = spec.chart->domain();
    r.gamma_at_P = gamma_b.value(dom.arclength(spec.chart->theta_anchor()));
    return r;
}

GradRecovery recover_grad(const NoisyOracle& oracle, const ProbeSpec& spec, const BoundaryGamma& gamma_b, double N,
                          const WindowPolicy& policy, const GradSettings& settings)
{
    GradSettings s = settings;
    if (s.K <= 0 && !oracle.noise.is_zero())
        s.K = std::max(oracle.noise.K(), 1L);
    const GradCleanTable table = grad_clean_table(*oracle.clean, spec, gamma_b, N, policy, s);
    return recover_grad(oracle, spec, gamma_b, table);
}

void attach_grad_targets(GradRecovery& result, const ConductivityField& gamma, const ProbeSpec& spec)
{
    const Vec2& P = spec.chart->anchor();
    const BoundaryTrace bt = boundary_trace(gamma, P, spec.frame.normal, spec.frame.tangent);
    result.target = cplx(-bt.normal_derivative, bt.tangential_derivative) / bt.value;
    result.stated_target = cplx(bt.normal_derivative, bt.tangential_derivative) / bt.value;
}

// ---------------------------------------------------------------------------
// Filtering moment

namespace {

struct MomentAccumulator {
    std::vector<double> samples;

    void finish(FilteringMoment& out) const
    {
        const double n = double(samples.size());
        const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
        double var = 0.0;
        for (double v : samples)
            var += (v - mean) * (v - mean);
        var = samples.size() > 1 ? var / (n - 1.0) : 0.0;
        out.estimate = mean;
        out.standard_error = std::sqrt(var / n);
        out.seeds = long(samples.size());
    }
};

// Σ_i a_i conj(b_i) over two index-sorted sparse lists.
cplx sparse_dot(const std::vector<SparseCoefficient>& a, const std::vector<SparseCoefficient>& b)
{
    cplx acc = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].index < b[j].index)
            ++i;
        else if (b[j].index < a[i].index)
            ++j;
        else
            acc += a[i++].value * std::conj(b[j++].value);
    }
    return acc;
}

FilteringMoment filtering_fourier(const ProbeSpec& spec, const BoundaryGamma& gamma_b, double T, long n_seeds,
                                  std::uint64_t seed0, bool zero_noise)
{
    const TQuadrature q = t_quadrature(T);
    const long Q = long(q.nodes.size());
    const double L = spec.chart->domain().length();
    const long K = noise_K(spec, 4.0 * T * T);
    std::vector<NoiseCoefficients> a(Q), b(Q);
    parallel_for(Q, [&](long k) {
        const double t = q.nodes[k];
        const long n_b = grid_for(spec, t * t, K);
        const BoundaryFunction f = probe_grad(spec, t, n_b);
        const BoundaryFunction gb = gamma_b.sampled(L, n_b);
        check_positive_on_support(f, gb);
        a[k] = noise_coefficients(f, K);
        b[k] = noise_coefficients(pointwise_div(f.conj(), gb), K);
    });

    FilteringMoment out;
    out.T = T;
    out.route = "fourier";
    long ra = 0, rb = 0;
    for (long k = 0; k < Q; ++k) {
        ra = std::max<long>(ra, long(a[k].values.size()));
        rb = std::max<long>(rb, long(b[k].values.size()));
    }
    out.rank_f = ra;
    out.rank_g = rb;
    if (zero_noise) {
        out.seeds = n_seeds;
        return out;
    }
    double closed = 0.0;
    for (long k = 0; k < Q; ++k)
        for (long l = 0; l < Q; ++l)
            closed += (q.weights[k] * q.weights[l] / (T * T)) *
                      (sparse_dot(a[k].values, a[l].values) * sparse_dot(b[k].values, b[l].values)).real();
    out.closed_form = closed;

    MomentAccumulator acc;
    acc.samples.resize(n_seeds);
    parallel_for(n_seeds, [&](long s) {
        const NoiseRealization X(seed0 + std::uint64_t(s), K);
        cplx A = 0.0;
        for (long k = 0; k < Q; ++k)
            A += q.weights[k] * noise_pair(X, a[k], b[k]);
        acc.samples[s] = std::norm(A / T);
    });
    acc.finish(out);
    return out;
}

// Orthonormal coordinates of the columns of m: returns S V^H truncated to the
// numerical rank, so that coefficient column k holds ((m_k | u_i))_i.
Eigen::MatrixXcd span_coordinates(const Eigen::MatrixXcd& m)
{
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    long r = 0;
    while (r < s.size() && s(r) > 1e-10 * s(0))
        ++r;
    return s.head(r).asDiagonal() * svd.matrixV().leftCols(r).adjoint();
}

FilteringMoment filtering_adapted(const ProbeSpec& spec, const BoundaryGamma& gamma_b, double T, long n_seeds,
                                  std::uint64_t seed0, bool zero_noise)
{
    const TQuadrature q = t_quadrature(T);
    const long Q = long(q.nodes.size());
    const BoundaryChart& chart = *spec.chart;
    const DomainGeometry& dom = chart.domain();
    const double xi = spec.xi_prime();
    // Products f_t conj(f_s) oscillate at |t² - s²||ξ'| <= 3T²|ξ'|; the
    // cutoff envelopes add a bandwidth of a few multiples of M <= 2T.
    const double band = 3.0 * T * T * std::abs(xi) + 80.0 * T;
    const ChartSamples w = chart_window(spec, 1.0 / T, band);
    const long n = long(w.x.size());

    std::vector<double> gamma_at(n), sqrt_w(n);
    for (long j = 0; j < n; ++j) {
        gamma_at[j] = gamma_b.value(dom.arclength(chart.theta_of(w.x[j])));
        sqrt_w[j] = std::sqrt(w.weights[j]);
        if (!(gamma_at[j] > 0.0))
            throw ConfigError("boundary conductivity must be positive on the probe support");
    }
    Eigen::MatrixXcd F(n, Q), G(n, Q);
    for (long k = 0; k < Q; ++k) {
        const double t = q.nodes[k];
        const double amp = probe_grad_amplitude(spec, t);
        for (long j = 0; j < n; ++j) {
            const cplx v = probe_chart_value(spec, t * t, t, amp, w.x[j]);
            F(j, k) = sqrt_w[j] * v;
            G(j, k) = sqrt_w[j] * std::conj(v) / gamma_at[j];
        }
    }
    const Eigen::MatrixXcd alpha = span_coordinates(F);
    const Eigen::MatrixXcd beta = span_coordinates(G);
    Eigen::VectorXd scale(Q);
    for (long k = 0; k < Q; ++k)
        scale(k) = q.weights[k] / T;
    const Eigen::MatrixXcd W = alpha * scale.asDiagonal() * beta.transpose();

    FilteringMoment out;
    out.T = T;
    out.route = "adapted";
    out.rank_f = alpha.rows();
    out.rank_g = beta.rows();
    if (zero_noise) {
        out.seeds = n_seeds;
        return out;
    }
    out.closed_form = W.squaredNorm();

    MomentAccumulator acc;
    acc.samples.resize(n_seeds);
    parallel_for(n_seeds, [&](long s) {
        const std::uint64_t seed = seed0 + std::uint64_t(s);
        cplx A = 0.0;
        for (long i = 0; i < W.rows(); ++i)
            for (long j = 0; j < W.cols(); ++j)
                A += W(i, j) * noise_entry(seed, i, j);
        acc.samples[s] = std::norm(A);
    });
    acc.finish(out);
    return out;
}

} // namespace

FilteringMoment filtering_moment(const ProbeSpec& spec, const BoundaryGamma& gamma_b, double T, long n_seeds,
                                 std::uint64_t seed0, const std::string& route, bool zero_noise)
{
    if (spec.mode != ProbeMode::Grad)
        throw ConfigError("filtering_moment needs a grad-mode probe");
    if (n_seeds < 1)
        throw ConfigError("filtering_moment needs at least one seed");
    if (1.0 / T > spec.chart->radius())
        throw GeometryError("probe support 1/T exceeds the chart radius");
    std::string r = route;
    if (r == "auto")
        r = T <= 4.0 ? "fourier" : "adapted";
    if (r == "fourier")
        return filtering_fourier(spec, gamma_b, T, n_seeds, seed0, zero_noise);
    if (r == "adapted")
        return filtering_adapted(spec, gamma_b, T, n_seeds, seed0, zero_noise);
    throw ConfigError("unknown filtering route '" + route + "'");
}

// ---------------------------------------------------------------------------
// Rates and quantiles

RateFit fit_rate(const std::vector<std::pair<double, double>>& points)
{
    if (points.size() < 4)
        throw ConfigError("fit_rate needs at least four points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [N, err] : points) {
        if (!(N > 0.0) || !(err > 0.0))
            throw ConfigError("fit_rate needs positive N and err");
        sx += std::log(N);
        sy += std::log(err);
    }
    const double n = double(points.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [N, err] : points) {
        const double dx = std::log(N) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(err) - my);
    }
    if (sxx <= 1e-300)
        throw ConfigError("fit_rate is degenerate: all N are equal");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

double calibrate_radius(const std::vector<std::pair<double, double>>& clean_errors, double rate, double margin)
{
    if (clean_errors.empty())
        throw ConfigError("radius calibration needs noise-free errors");
    double c = 0.0;
    for (const auto& [N, err] : clean_errors)
        c = std::max(c, err * std::pow(N, rate));
    return margin * c;
}

double radius_rule(const ProbeSpec& spec, double N, double C)
{
    const double rate = spec.mode == ProbeMode::Gamma ? spec.theta / (1.0 + spec.theta) : spec.theta;
    return C * std::pow(N, -rate);
}

QuantileResult quantile_experiment(const CleanOracle& oracle, const ProbeSpec& spec, double N, long n_seeds,
                                   std::uint64_t seed0, double radius_constant, cplx truth, bool noise_enabled,
                                   const WindowPolicy& policy, const BoundaryGamma* gamma_b)
{
    if (n_seeds < 1)
        throw ConfigError("quantile experiment needs at least one seed");
    QuantileResult out;
    out.total = n_seeds;
    out.radius = radius_rule(spec, N, radius_constant);
    std::vector<char> inside(n_seeds, 0);

    if (spec.mode == ProbeMode::Gamma) {
        const cplx clean = clean_gamma_value(oracle, spec, N);
        const long K = noise_K(spec, N);
        const BoundaryFunction f = probe_gamma(spec, N, grid_for(spec, N, K));
        const NoiseCoefficients a = noise_coefficients(f, K);
        const NoiseCoefficients b = noise_coefficients(f.conj(), K);
        parallel_for(n_seeds, [&](long s) {
            cplx e = clean;
            if (noise_enabled)
                e += noise_pair(NoiseRealization(seed0 + std::uint64_t(s), K), a, b);
            inside[s] = std::abs(e - truth) <= out.radius;
        });
    } else {
        if (!gamma_b)
            throw ConfigError("grad-mode quantile experiment needs a boundary conductivity");
        const GradCleanTable table = grad_clean_table(oracle, spec, *gamma_b, N, policy);
        for (long s = 0; s < n_seeds; ++s) {
            NoisyOracle no{&oracle, noise_enabled ? NoiseRealization(seed0 + std::uint64_t(s), table.K)
                                                  : NoiseRealization::zero(table.K)};
            const GradRecovery r = recover_grad(no, spec, *gamma_b, table);
            inside[s] = std::abs(r.Y - truth) <= out.radius;
        }
    }
    out.inside = std::count(inside.begin(), inside.end(), 1);
    out.fraction = double(out.inside) / double(out.total);
    return out;
}

} // namespace calderon
