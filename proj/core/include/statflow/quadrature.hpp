#pragma once

#include "statflow/geometry.hpp"

#include <vector>

namespace statflow {

/// Quadrature rule on a reference element. Weights sum to the reference
/// measure (1 for the interval and the unit square, 1/2 for the unit triangle).
struct QuadratureRule {
    std::vector<Vec2> points;
    std::vector<double> weights;

    int size() const { return static_cast<int>(points.size()); }
};

/// n-point Gauss-Legendre nodes/weights on [0,1]. Exact for degree 2n-1.
void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Gauss rule on the reference interval [0,1] with the given number of points.
QuadratureRule interval_rule(int points);

/// Tensor Gauss rule on the unit square [0,1]^2 exact for (at least) the given
/// total degree.
QuadratureRule quad_rule(int degree);

/// Rule on the unit triangle {x,y >= 0, x+y <= 1} exact for the given total
/// degree. Built by Duffy collapse of a tensor Gauss rule.
QuadratureRule triangle_rule(int degree);

} // namespace statflow
