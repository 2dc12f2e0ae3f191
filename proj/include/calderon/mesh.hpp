#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "calderon/geometry.hpp"

namespace calderon {

/// Region near a boundary point that must be meshed at size h: the part of
/// the ball |x - P| <= r_refine within depth layer_depth of the boundary.
struct RefineZone {
    double theta_anchor = 0.0;
    double r_refine = 0.1;
    double layer_depth = 0.0; // <= 0: the whole ball
    double h = 0.1;
};

/// How a mesh was graded; kept with the mesh for reporting.
struct GradingDescriptor {
    double h_far = 0.0;
    std::vector<RefineZone> zones;
    int root_rows = 0;
    int max_level = 0;
};

struct TriMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;
    /// Boundary vertices ordered by increasing ϑ in [0, 2π), with ϑ and arclength.
    std::vector<int> boundary_vertices;
    std::vector<double> boundary_theta;
    std::vector<double> boundary_arclength;
    std::vector<char> on_boundary; // per vertex
    std::vector<double> diameters; // per triangle
    GradingDescriptor grading;
    std::uint64_t id = 0; // unique per generated mesh within a process

    double area(int t) const;
    double min_angle_degrees(int t) const;
    double total_area() const;
    double max_diameter() const;
};

struct MeshRequest {
    double h_far = 0.1;
    std::vector<RefineZone> zones;
    long max_triangles = 2'000'000;
};

/// Graded triangulation of a star-shaped domain.
///
/// Built from a 2:1 balanced quadtree on log-polar coordinates
/// (ϑ, σ = -log(r / R(ϑ))) with 16 root cells around, mapped to the plane and
/// closed by a 16-triangle fan at the center. Leaf squares are cut into
/// right isosceles triangles around their center.
///
/// Throws ConfigError for nonpositive sizes or a zone with h > h_far,
/// BudgetError when the triangle cap would be exceeded.
TriMesh generate_mesh(const DomainGeometry& domain, const MeshRequest& request);

/// Single-zone form: diameters <= h_far everywhere and <= h_near within
/// r_refine of the boundary point at angle theta_anchor.
TriMesh generate_mesh(const DomainGeometry& domain, double h_far, double h_near, double theta_anchor,
                      double r_refine, double layer_depth = 0.0, long max_triangles = 2'000'000);

struct Resolution {
    double h_near = 0.0;
    double r_refine = 0.0;
    double layer_depth = 0.0;
};

/// Mesh resolution for a probe of frequency N|ξ'| and cutoff scale M:
/// h_near = 2π / (N |ξ'| ppw) capped by h_far, r_refine = 2/M + h_far, and a
/// fine layer of depth 10 / (N |ξ'|) (capped at r_refine) below the boundary.
Resolution required_resolution(double N, double xi_prime_norm, double ppw, double M, double h_far);

/// ASCII dump. Lines "v <index> <x> <y> <boundary 0|1>" then
/// "t <index> <v0> <v1> <v2>".
void write_mesh(std::ostream& out, const TriMesh& mesh);

} // namespace calderon
