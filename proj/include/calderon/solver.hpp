#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "calderon/boundary_functions.hpp"
#include "calderon/conductivity.hpp"
#include "calderon/mesh.hpp"

namespace calderon {

struct ProbeSpec;

using MeshPtr = std::shared_ptr<const TriMesh>;

/// Complex nodal values of a P1 field.
struct DiscreteField {
    MeshPtr mesh;
    Eigen::VectorXcd values;
};

struct SolverSettings {
    double tolerance = 1e-10;
    /// Interior unknown count above which conjugate gradients replace the
    /// direct factorization.
    long direct_limit = 1'500'000;
};

/// P1 stiffness system of ∇·(γ∇u) = 0 on one mesh, factored once.
///
/// The element coefficient is the mean of γ at the three edge midpoints, which
/// integrates quadratic γ exactly against the constant P1 gradients.
class FemSystem {
public:
    FemSystem(MeshPtr mesh, const std::function<double(const Vec2&)>& gamma, SolverSettings settings = {});
    ~FemSystem();
    FemSystem(const FemSystem&) = delete;
    FemSystem& operator=(const FemSystem&) = delete;

    const MeshPtr& mesh() const { return mesh_; }
    long interior_count() const { return long(interior_of_.size()) - long(boundary_count_); }

    /// Nodal boundary values of f: the exact evaluator when present, otherwise
    /// interpolation, which requires the sample spacing to be at most half the
    /// smallest boundary edge (ResolutionError otherwise).
    Eigen::VectorXcd boundary_values(const BoundaryFunction& f) const;
    DiscreteField solve(const BoundaryFunction& f) const;
    DiscreteField solve_boundary_values(const Eigen::VectorXcd& boundary) const;

    /// uᵀ K v, bilinear (no conjugation).
    cplx energy(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) const;
    const Eigen::SparseMatrix<double>& stiffness() const { return full_; }

private:
    struct Factor;

    MeshPtr mesh_;
    SolverSettings settings_;
    std::vector<int> interior_of_; // vertex -> interior index, or -1 - boundary index
    size_t boundary_count_ = 0;
    Eigen::SparseMatrix<double> full_;
    Eigen::SparseMatrix<double> k_ii_;
    Eigen::SparseMatrix<double> k_ib_;
    std::unique_ptr<Factor> factor_;
};

/// Piecewise-linear Galerkin solution with Dirichlet data f.
DiscreteField solve_dirichlet(MeshPtr mesh, const ConductivityField& gamma, const BoundaryFunction& f);

enum class OracleMode { Fem, AnalyticDisk };

/// How the oracle picks meshes for a probe of frequency N|ξ'| and scale M.
struct MeshPolicy {
    double h_far = 0.05;
    double ppw = 10.0;
    double collar = -1.0;       // lateral margin beyond 2/M; negative means h_far
    double depth_factor = 10.0; // fine layer depth in wavelengths / 2π
    long max_triangles = 2'000'000;
};

/// Clean DN pairings of one conductivity on one domain.
///
/// Factorizations are cached by (mesh id, equation) behind a mutex; the most
/// recent `cache_capacity` systems are kept. Pairings themselves are const
/// and may be called concurrently.
class CleanOracle {
public:
    CleanOracle(DomainGeometry domain, ConductivityField gamma, MeshPolicy policy = {},
                OracleMode mode = OracleMode::Fem, SolverSettings settings = {});

    const DomainGeometry& domain() const { return domain_; }
    const ConductivityField& gamma() const { return gamma_; }
    const MeshPolicy& policy() const { return policy_; }
    OracleMode mode() const { return mode_; }
    const SolverSettings& settings() const { return settings_; }
    void set_cache_capacity(size_t n) { capacity_ = n; }

    /// Quasi-uniform mesh at h_far, built once.
    MeshPtr default_mesh() const;
    /// Graded mesh for probes with frequency N|ξ'| and scale M at ϑ_P.
    MeshRequest probe_request(double theta_anchor, double k, double M) const;
    MeshPtr make_mesh(const MeshRequest& request) const;

    std::shared_ptr<const FemSystem> system(const MeshPtr& mesh, bool harmonic) const;

private:
    DomainGeometry domain_;
    ConductivityField gamma_;
    MeshPolicy policy_;
    OracleMode mode_;
    SolverSettings settings_;
    size_t capacity_ = 4;

    mutable std::mutex mutex_;
    mutable MeshPtr default_mesh_;
    mutable std::map<std::pair<std::uint64_t, bool>, std::shared_ptr<const FemSystem>> cache_;
    mutable std::vector<std::pair<std::uint64_t, bool>> order_;
};

/// γ restricted to the boundary on a grid of n_b samples, with an exact evaluator.
BoundaryFunction gamma_on_boundary(const DomainGeometry& domain, const ConductivityField& gamma, long n_b);

/// ∫_D γ ∇u_f · ∇u_g, bilinear; equals ∫_{∂D} Λ_γ f g in the continuum.
/// Uses the oracle's default mesh when mesh is null.
cplx dn_pair(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
             const MeshPtr& mesh = nullptr);

/// dn_pair with γ ≡ 1. In AnalyticDisk mode, Σ |n| a_n b_{-n} over the
/// arclength Fourier coefficients (unit disk only; ConfigError otherwise).
cplx harmonic_pair(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                   const MeshPtr& mesh = nullptr);

/// |∫ Λ_γ f (g/γ) - ∫ Λ f g + ∫_D (∇γ/γ)·∇u_f v_g|, all terms on one mesh.
double identity_residual(const CleanOracle& oracle, const BoundaryFunction& f, const BoundaryFunction& g,
                         const MeshPtr& mesh = nullptr);

enum class CorrectorFamily { Gamma, Harmonic };

/// Distance between the discrete solution with data f_N (the trace of the
/// normalized probe a_{M,N}∘F^{-1}) and a_{M,N}∘F^{-1} itself: the H¹
/// seminorm for the conductivity equation, the L² norm for the Laplace
/// equation. Unweighted norms over the whole domain.
double corrector_norm(const CleanOracle& oracle, const ProbeSpec& spec, double N, CorrectorFamily family,
                      double amplitude = 1.0);

} // namespace calderon
