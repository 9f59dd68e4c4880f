#include "statflow/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace statflow {

void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre_01: need at least one point");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    // Newton iteration on P_n over [-1,1], then map to [0,1].
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
}

QuadratureRule interval_rule(int points) {
    std::vector<double> x, w;
    gauss_legendre_01(points, x, w);
    QuadratureRule rule;
    rule.points.reserve(points);
    rule.weights = w;
    for (int i = 0; i < points; ++i) rule.points.push_back({x[i], 0.0});
    return rule;
}

QuadratureRule quad_rule(int degree) {
    if (degree < 0) throw std::invalid_argument("quad_rule: negative degree");
    const int n = degree / 2 + 1; // 2n-1 >= degree
    std::vector<double> x, w;
    gauss_legendre_01(n, x, w);
    QuadratureRule rule;
    rule.points.reserve(n * n);
    rule.weights.reserve(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            rule.points.push_back({x[i], x[j]});
            rule.weights.push_back(w[i] * w[j]);
        }
    return rule;
}

QuadratureRule triangle_rule(int degree) {
    if (degree < 0) throw std::invalid_argument("triangle_rule: negative degree");
    // Duffy map (u,v) -> (u, v(1-u)) with Jacobian (1-u). A monomial of total
    // degree d becomes degree <= d+1 in u and <= d in v.
    const int n = (degree + 3) / 2; // 2n-1 >= degree+1
    std::vector<double> x, w;
    gauss_legendre_01(n, x, w);
    QuadratureRule rule;
    rule.points.reserve(n * n);
    rule.weights.reserve(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double u = x[i], v = x[j];
            rule.points.push_back({u, v * (1.0 - u)});
            rule.weights.push_back(w[i] * w[j] * (1.0 - u));
        }
    return rule;
}

} // namespace statflow
