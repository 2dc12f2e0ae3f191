#include "calderon/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "calderon/error.hpp"
#include "calderon/probes.hpp"

namespace calderon {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Gradients of the three P1 hat functions on a triangle, and its area.
struct ElementGeometry {
    Eigen::Matrix<double, 2, 3> grad;
    double area;
};

ElementGeometry element_geometry(const TriMesh& mesh, const std::array<int, 3>& tri)
{
    const Vec2& a = mesh.vertices[tri[0]];
    const Vec2& b = mesh.vertices[tri[1]];
    const Vec2& c = mesh.vertices[tri[2]];
    const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    ElementGeometry g;
    g.area = 0.5 * det;
    g.grad.col(0) = Vec2(b.y() - c.y(), c.x() - b.x()) / det;
    g.grad.col(1) = Vec2(c.y() - a.y(), a.x() - c.x()) / det;
    g.grad.col(2) = Vec2(a.y() - b.y(), b.x() - a.x()) / det;
    return g;
}

std::array<Vec2, 3> edge_midpoints(const TriMesh& mesh, const std::array<int, 3>& tri)
{
    const Vec2& a = mesh.vertices[tri[0]];
    const Vec2& b = mesh.vertices[tri[1]];
    const Vec2& c = mesh.vertices[tri[2]];
    return {0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)};
}

} // namespace

struct FemSystem::Factor {
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
    bool iterative = false;
};

FemSystem::FemSystem(MeshPtr mesh, const std::function<double(const Vec2&)>& gamma, SolverSettings settings)
    : mesh_(std::move(mesh)), settings_(settings), factor_(std::make_unique<Factor>())
{
    const TriMesh& m = *mesh_;
    const int nv = int(m.vertices.size());
    interior_of_.assign(nv, 0);
    for (size_t b = 0; b < m.boundary_vertices.size(); ++b)
        interior_of_[m.boundary_vertices[b]] = -1 - int(b);
    boundary_count_ = m.boundary_vertices.size();
    int ni = 0;
    for (int v = 0; v < nv; ++v)
        if (!m.on_boundary[v])
            interior_of_[v] = ni++;

    std::vector<Eigen::Triplet<double>> tf, tii, tib;
    tf.reserve(m.triangles.size() * 9);
    tii.reserve(m.triangles.size() * 9);
    for (const auto& tri : m.triangles) {
        const ElementGeometry g = element_geometry(m, tri);
        const auto mid = edge_midpoints(m, tri);
        const double coef = (gamma(mid[0]) + gamma(mid[1]) + gamma(mid[2])) / 3.0;
        if (!(coef > 0.0))
            throw ToleranceError("conductivity is not positive on the mesh");
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const double k = coef * g.area * g.grad.col(a).dot(g.grad.col(b));
                tf.emplace_back(tri[a], tri[b], k);
                const int ia = interior_of_[tri[a]], ib = interior_of_[tri[b]];
                if (ia < 0)
                    continue;
                if (ib >= 0)
                    tii.emplace_back(ia, ib, k);
                else
                    tib.emplace_back(ia, -1 - ib, k);
            }
    }
    full_.resize(nv, nv);
    full_.setFromTriplets(tf.begin(), tf.end());
    k_ii_.resize(ni, ni);
    k_ii_.setFromTriplets(tii.begin(), tii.end());
    k_ib_.resize(ni, long(boundary_count_));
    k_ib_.setFromTriplets(tib.begin(), tib.end());

    if (ni == 0)
        return;
    if (ni > settings_.direct_limit) {
        factor_->iterative = true;
        factor_->cg.setTolerance(settings_.tolerance);
        factor_->cg.setMaxIterations(20 * ni);
        factor_->cg.compute(k_ii_);
        if (factor_->cg.info() != Eigen::Success)
            throw ToleranceError("incomplete Cholesky preconditioner failed");
    } else {
        factor_->ldlt.compute(k_ii_);
        if (factor_->ldlt.info() != Eigen::Success) {
            throw ToleranceError("stiffness factorization failed: matrix singular or indefinite");
        }
        const auto& d = factor_->ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff(), dmin = d.cwiseAbs().minCoeff();
        if (!(dmin > 1e-14 * dmax)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "stiffness matrix ill-conditioned (pivot ratio estimate %.3g)",
                          dmax / dmin);
            throw ToleranceError(buf);
        }
    }
}

FemSystem::~FemSystem() = default;

Eigen::VectorXcd FemSystem::boundary_values(const BoundaryFunction& f) const
{
    const TriMesh& m = *mesh_;
    Eigen::VectorXcd g(static_cast<long>(boundary_count_));
    if (f.has_exact()) {
        const auto& ev = f.exact();
        for (size_t b = 0; b < boundary_count_; ++b)
            g[long(b)] = ev(m.boundary_arclength[b]);
        return g;
    }
    double min_edge = f.length();
    for (size_t b = 0; b < boundary_count_; ++b) {
        const double next = b + 1 < boundary_count_ ? m.boundary_arclength[b + 1] : m.boundary_arclength[0] + f.length();
        min_edge = std::min(min_edge, next - m.boundary_arclength[b]);
    }
    if (f.spacing() > 0.5 * min_edge)
        throw ResolutionError("boundary samples too coarse to interpolate onto the mesh boundary");
    for (size_t b = 0; b < boundary_count_; ++b)
        g[long(b)] = f.value_at(m.boundary_arclength[b]);
    return g;
}

DiscreteField FemSystem::solve(const BoundaryFunction& f) const
{
    return solve_boundary_values(boundary_values(f));
}

DiscreteField FemSystem::solve_boundary_values(const Eigen::VectorXcd& boundary) const
{
    const TriMesh& m = *mesh_;
    const long ni = k_ii_.rows();
    Eigen::MatrixXd gb(static_cast<long>(boundary_count_), 2);
    gb.col(0) = boundary.real();
    gb.col(1) = boundary.imag();
    Eigen::MatrixXd x(ni, 2);
    if (ni > 0) {
        const Eigen::MatrixXd rhs = -(k_ib_ * gb);
        const double scale = std::max(rhs.norm(), 1e-300);
        if (factor_->iterative) {
            x = factor_->cg.solve(rhs);
        } else {
            x = factor_->ldlt.solve(rhs);
            // A couple of refinement steps if round-off left a large residual.
            for (int it = 0; it < 3; ++it) {
                const Eigen::MatrixXd r = rhs - k_ii_ * x;
                if (r.norm() <= settings_.tolerance * scale)
                    break;
                x += factor_->ldlt.solve(r);
            }
        }
        const double res = (rhs - k_ii_ * x).norm();
        if (res > settings_.tolerance * scale && rhs.norm() > 0.0) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "linear solve residual %.3g exceeds tolerance %.3g", res / scale,
                          settings_.tolerance);
            throw ToleranceError(buf);
        }
    }
    DiscreteField u;
    u.mesh = mesh_;
    u.values.resize(long(m.vertices.size()));
    for (size_t v = 0; v < m.vertices.size(); ++v) {
        const int k = interior_of_[v];
        u.values[long(v)] = k >= 0 ? cplx(x(k, 0), x(k, 1)) : boundary[-1 - k];
    }
    return u;
}

cplx FemSystem::energy(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) const
{
    const Eigen::VectorXd vr = v.real(), vi = v.imag();
    const Eigen::VectorXd kr = full_ * vr, ki = full_ * vi;
    const Eigen::VectorXd ur = u.real(), ui = u.imag();
    return {ur.dot(kr) - ui.dot(ki), ur.dot(ki) + ui.dot(kr)};
}

DiscreteField solve_dirichlet(MeshPtr mesh, const ConductivityField& gamma, const BoundaryFunction& f)
{
    if (!(gamma.lower_bound > 0.0))
        throw ConfigError("conductivity lower bound must be positive");
    FemSystem sys(std::move(mesh), gamma.value);
    return sys.solve(f);
}

// --- oracle ---------------------------------------------------------------

CleanOracle::CleanOracle(DomainGeometry domain, ConductivityField gamma, MeshPolicy policy, OracleMode mode,
                         SolverSettings settings)
    : domain_(std::move(domain)), gamma_(std::move(gamma)), policy_(policy), mode_(mode), settings_(settings)
{
    if (!(gamma_.lower_bound > 0.0))
        throw ConfigError("conductivity lower bound must be positive");
    if (mode_ == OracleMode::AnalyticDisk && domain_.kind() != DomainGeometry::Kind::UnitDisk)
        throw ConfigError("analytic pairing requires the unit disk");
}

MeshPtr CleanOracle::default_mesh() const
{
    std::lock_guard lock(mutex_);
    if (!default_mesh_) {
        MeshRequest req;
        req.h_far = policy_.h_far;
        req.max_triangles = policy_.max_triangles;
        default_mesh_ = std::make_shared<const TriMesh>(generate_mesh(domain_, req));
    }
    return default_mesh_;
}

MeshRequest CleanOracle::probe_request(double theta_anchor, double k, double M) const
{
    const Resolution res = required_resolution(k, 1.0, policy_.ppw, M, policy_.h_far);
    const double collar = policy_.collar < 0.0 ? policy_.h_far : policy_.collar;
    RefineZone z;
    z.theta_anchor = theta_anchor;
    z.h = res.h_near;
    z.r_refine = 2.0 / M + collar;
    z.layer_depth = std::min(z.r_refine, policy_.depth_factor / k);
    MeshRequest req;
    req.h_far = policy_.h_far;
    req.max_triangles = policy_.max_triangles;
    req.zones.push_back(z);
    return req;
}

MeshPtr CleanOracle::make_mesh(const MeshRequest& request) const
{
    return std::make_shared<const TriMesh>(generate_mesh(domain_, request));
}

std::shared_ptr<const FemSystem> CleanOracle::system(const MeshPtr& mesh, bool harmonic) const
{
    const auto key = std::make_pair(mesh->id, harmonic);
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end())
            return it->second;
    }
    // Factor outside the lock; a concurrent duplicate is discarded below.
    std::function<double(const Vec2&)> coef = gamma_.value;
    if (harmonic)
        coef = [](const Vec2&) { return 1.0; };
    auto sys = std::make_shared<const FemSystem>(mesh, coef, settings_);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, sys);
    if (inserted) {
        order_.push_back(key);
        while (order_.size() > capacity_) {
            cache_.erase(order_.front());
            order_.erase(order_.begin());
        }
    }
    return it->second;
}

cplx dn_pair(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g, const MeshPtr& mesh)
{
    const MeshPtr m = mesh ? mesh : oracle.default_mesh();
    const auto sys = oracle.system(m, false);
    const DiscreteField uf = sys->solve(f);
    const DiscreteField ug = sys->solve(g);
    return sys->energy(uf.values, ug.values);
}

cplx harmonic_pair(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                   const MeshPtr& mesh)
{
    if (oracle.mode() == OracleMode::AnalyticDisk) {
        if (oracle.domain().kind() != DomainGeometry::Kind::UnitDisk)
            throw ConfigError("analytic pairing requires the unit disk");
        const long nf = f.size(), ng = g.size();
        const long lo = std::max(-nf / 2, -(ng - ng / 2) + 1);
        const long hi = std::min(nf - nf / 2 - 1, ng / 2);
        cplx acc = 0.0;
        for (long n = lo; n <= hi; ++n)
            if (n != 0)
                acc += double(std::abs(n)) * f.coefficient_of_mode(n) * g.coefficient_of_mode(-n);
        return acc;
    }
    const MeshPtr m = mesh ? mesh : oracle.default_mesh();
    const auto sys = oracle.system(m, true);
    const DiscreteField vf = sys->solve(f);
    const DiscreteField vg = sys->solve(g);
    return sys->energy(vf.values, vg.values);
}

BoundaryFunction gamma_on_boundary(const DomainGeometry& domain, const ConductivityField& gamma, long n_b)
{
    auto eval = [domain, value = gamma.value](double s) -> cplx {
        return value(domain.point(domain.theta_at(s)));
    };
    return BoundaryFunction::from_function(domain.length(), n_b, eval);
}

double identity_residual(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                         const MeshPtr& mesh)
{
    const MeshPtr m = mesh ? mesh : oracle.default_mesh();
    const auto sys_g = oracle.system(m, false);
    const auto sys_1 = oracle.system(m, true);
    const BoundaryFunction gb = gamma_on_boundary(oracle.domain(), oracle.gamma(), g.size());
    const DiscreteField uf = sys_g->solve(f);
    const DiscreteField lift = sys_g->solve(pointwise_div(g, gb));
    const cplx lhs_gamma = sys_g->energy(uf.values, lift.values);
    const DiscreteField vf = sys_1->solve(f);
    const DiscreteField vg = sys_1->solve(g);
    const cplx lhs_laplace = sys_1->energy(vf.values, vg.values);

    const auto& gamma = oracle.gamma();
    cplx volume = 0.0;
    for (const auto& tri : m->triangles) {
        const ElementGeometry eg = element_geometry(*m, tri);
        Eigen::Vector2cd grad_u = Eigen::Vector2cd::Zero();
        for (int a = 0; a < 3; ++a)
            grad_u += uf.values[tri[a]] * eg.grad.col(a).cast<cplx>();
        const auto mid = edge_midpoints(*m, tri);
        for (int q = 0; q < 3; ++q) {
            const Vec2 w = gamma.gradient(mid[q]) / gamma.value(mid[q]);
            const cplx v = 0.5 * (vg.values[tri[q]] + vg.values[tri[(q + 1) % 3]]);
            volume += eg.area / 3.0 * (w.x() * grad_u.x() + w.y() * grad_u.y()) * v;
        }
    }
    return std::abs(lhs_gamma - lhs_laplace + volume);
}

double corrector_norm(const CleanOracle& oracle, const ProbeSpec& spec, double N, CorrectorFamily family,
                      double amplitude)
{
    const double M = spec.M_of(N);
    const double amp = amplitude * (spec.mode == ProbeMode::Gamma ? probe_gamma_amplitude(spec, N)
                                                                   : probe_grad_amplitude(spec, std::sqrt(N)));
    const BoundaryChart& chart = *spec.chart;
    const BoundaryFunction f = probe_trace(spec, N, M, amp);
    const MeshPtr mesh = oracle.make_mesh(oracle.probe_request(chart.theta_anchor(), N * spec.xi_prime_norm(), M));
    const bool harmonic = family == CorrectorFamily::Harmonic;
    const auto sys = oracle.system(mesh, harmonic);
    const DiscreteField u = sys->solve(f);

    const Vec2 xi = spec.frame.xi;
    const Vec2& e1 = chart.axis_tangent();
    const Vec2& e2 = chart.axis_normal();
    // a_{M,N}∘F^{-1} and its global gradient at x.
    auto probe_at = [&](const Vec2& x, cplx* value, Eigen::Vector2cd* grad) {
        *value = 0.0;
        grad->setZero();
        const Vec2 y = chart.to_chart(x);
        if (std::abs(y.x()) * M >= 1.0 || y.y() < -chart.radius() || y.y() > chart.radius())
            return;
        const double phi = chart.phi(y.x());
        const double dphi = chart.phi_prime(y.x());
        const double x1 = y.x(), x2 = y.y() - phi;
        const cplx e = std::exp(N * cplx(-x2, xi.x() * x1 + xi.y() * x2));
        const double cut = eta(M * std::abs(x1));
        const double dcut = M * eta_derivative(M * std::abs(x1)) * (x1 < 0.0 ? -1.0 : 1.0);
        *value = amp * cut * e;
        const cplx d1 = amp * (dcut + cut * N * cplx(0.0, xi.x())) * e; // ∂/∂x̃1
        const cplx d2 = amp * cut * N * cplx(-1.0, xi.y()) * e;         // ∂/∂x̃2
        // x̃ = (y1, y2 - φ(y1)): ∂/∂y1 = ∂1 - φ' ∂2, ∂/∂y2 = ∂2.
        const cplx dy1 = d1 - dphi * d2, dy2 = d2;
        (*grad)(0) = dy1 * e1.x() + dy2 * e2.x();
        (*grad)(1) = dy1 * e1.y() + dy2 * e2.y();
    };

    double acc = 0.0;
    for (const auto& tri : mesh->triangles) {
        const ElementGeometry eg = element_geometry(*mesh, tri);
        Eigen::Vector2cd grad_u = Eigen::Vector2cd::Zero();
        for (int a = 0; a < 3; ++a)
            grad_u += u.values[tri[a]] * eg.grad.col(a).cast<cplx>();
        const auto mid = edge_midpoints(*mesh, tri);
        for (int q = 0; q < 3; ++q) {
            cplx a;
            Eigen::Vector2cd ga;
            probe_at(mid[q], &a, &ga);
            if (harmonic) {
                const cplx uq = 0.5 * (u.values[tri[q]] + u.values[tri[(q + 1) % 3]]);
                acc += eg.area / 3.0 * std::norm(uq - a);
            } else {
                acc += eg.area / 3.0 * (grad_u - ga).squaredNorm();
            }
        }
    }
    return std::sqrt(acc);
}

} // namespace calderon
