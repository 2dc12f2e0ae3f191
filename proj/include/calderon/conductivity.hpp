#pragma once

#include <functional>
#include <map>
#include <string>

#include "calderon/geometry.hpp"

namespace calderon {

/// Scalar conductivity on all of R² with an exact gradient and regularity
/// bounds valid on the ball |x| <= kFieldBoundRadius, which contains every
/// supported domain.
struct ConductivityField {
    std::function<double(const Vec2&)> value;
    std::function<Vec2(const Vec2&)> gradient;
    double lower_bound = 0.0;       // γ₀
    double lipschitz_bound = 0.0;   // sup |∇γ|
    double gradient_lipschitz = 0.0; // sup |∇²γ| (C^{1,1} seminorm)
    double sup_bound = 0.0;         // sup γ
    std::string tag;

    double operator()(const Vec2& x) const { return value(x); }
};

inline constexpr double kFieldBoundRadius = 1.5;

using FieldParams = std::map<std::string, double>;

/// Builtin analytic fields:
///   constant      c
///   affine        a + bx*x + by*y
///   exponential   c * exp(ax*x + ay*y)
///   radial_bump   c + amplitude * exp(-|x - (x0,y0)|² / (2 width²))
///   trigonometric c + amplitude * sin(kx*x + ky*y + phase)
/// Missing parameters default to zero except c (1) and width (0.25).
/// Throws ConfigError for unknown names or a nonpositive lower bound.
ConductivityField builtin_field(const std::string& name, const FieldParams& params);

/// Exact boundary data of a field at a boundary point.
struct BoundaryTrace {
    double value = 0.0;
    double normal_derivative = 0.0;     // ∂_ν γ with ν outward
    double tangential_derivative = 0.0; // τ · ∇γ
};

BoundaryTrace boundary_trace(const ConductivityField& field, const Vec2& point,
                             const Vec2& outward_normal, const Vec2& tangent);

} // namespace calderon
