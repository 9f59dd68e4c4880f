#pragma once

#include "statflow/mc.hpp"

#include <functional>

namespace statflow {

/// Element-wise constant approximation of a velocity field: per-element mean
/// values via quadrature.
struct ElementAverages {
    const Mesh2D* mesh = nullptr;
    std::vector<Vec2> values;
};

ElementAverages element_average(const FieldCoefficients& velocity);

/// Ensemble mean as a field in the same space (coefficient-wise average).
FieldCoefficients ensemble_mean(const Ensemble& ensemble);
/// Unbiased sample variance M/(M-1) (E[u^2] - E[u]^2), componentwise at the
/// evaluation point. Requires M >= 2.
Vec2 ensemble_variance_at(const Ensemble& ensemble, int element, Vec2 ref);

/// Pointwise vector field over physical coordinates.
using PointField = std::function<Vec2(Vec2)>;

PointField ensemble_mean_field(const Ensemble& ensemble, const PointLocator& locator);
PointField ensemble_variance_field(const Ensemble& ensemble, const PointLocator& locator);

/// || a - b ||_{L2} integrated with the given mesh's quadrature (use the
/// finer mesh when comparing successive resolutions; coarse-mesh fields are
/// prolonged by point evaluation).
double cauchy_error_l2(const PointField& a, const PointField& b, const Mesh2D& quad_mesh,
                       int quad_degree = 6);
/// || f ||_{L2} by quadrature.
double l2_norm(const PointField& f, const Mesh2D& quad_mesh, int quad_degree = 6);

/// Uniform N_x1 x N_x2 cell table over a rectangle; each cell holds the
/// (element id, area, centroid, averaged velocity) tuples of the elements
/// whose centroid hashes into it.
struct HashGrid {
    struct Entry {
        int element;
        double area;
        Vec2 centroid;
        Vec2 velocity;
    };
    Rect domain;
    int nx1 = 0;
    int nx2 = 0;
    std::vector<std::vector<Entry>> cells; ///< cell (i,j) at j*nx1 + i

    const std::vector<Entry>& cell(int i, int j) const { return cells[j * nx1 + i]; }
    int n_entries() const;
    /// Cell indices of a point by the floor formulas; throws if outside.
    std::pair<int, int> cell_of(Vec2 p) const;
};

/// Largest grid size whose cells are at least r wide, floored at 3 so
/// interior cells exist.
int choose_grid_size(double side, double r);

HashGrid make_hash_table(const Rect& domain, const Mesh2D& mesh, int nx1, int nx2);
/// Replaces each tuple's velocity slot with the element average; ids, areas
/// and centroids are untouched.
void update_hash_table(HashGrid& grid, const ElementAverages& averages);

/// Single-sample structure-function accumulation: interior cells only, 3x3
/// neighbor search, centroid box test |dx1| <= r and |dx2| <= r, inner sums
/// weighted by |K'| and normalized, outer weighting by |K|. Returns the
/// un-rooted, un-averaged sum.
double structure_function_of_sample(const HashGrid& grid, double r, int p);

/// Ensemble structure function ((1/M) sum_m S_m)^{1/p}; the root is applied
/// once, after the reduction over members.
double structure_function_ensemble(const Rect& domain, const Mesh2D& mesh, int nx1, int nx2,
                                   std::span<const ElementAverages> members, double r, int p,
                                   int workers = 1);

/// Discrete measure: n atoms in R^dim with nonnegative weights summing to 1.
struct WeightedAtoms {
    int dim = 0;
    std::vector<double> coords; ///< row-major, n x dim
    std::vector<double> weights;

    int size() const { return static_cast<int>(weights.size()); }
    std::span<const double> atom(int i) const {
        return {coords.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

/// Exact p-Wasserstein distance between two discrete measures (successive
/// shortest path transportation solve; reduces to optimal assignment for
/// equal uniform weights). Throws if either weight vector does not sum to 1
/// within 1e-12.
double emd_atoms(const WeightedAtoms& a, const WeightedAtoms& b, int p);

struct WassersteinConfig {
    int eval_grid = 16;       ///< overlay grid for the 1-point quadrature
    int pair_budget = 256;    ///< random centroid pairs for the 2-point term
    std::uint64_t pair_seed = 7777;
    int order = 1;            ///< p; the experiments fix p = 1
    int workers = 1;
};

struct WassersteinResult {
    double w1 = 0.0; ///< 1-point distance integrated over D
    double w2 = 0.0; ///< 2-point distance over sampled pairs of D^2
};

/// W^1 and W^2 between two ensembles over a common rectangular domain. At
/// each evaluation point the member velocities form M uniform atoms in R^2
/// (R^4 for pairs); EMD is integrated with equal-weight quadrature.
WassersteinResult wasserstein_distances(const Ensemble& a, const Ensemble& b, const Rect& domain,
                                        const WassersteinConfig& cfg = {});

} // namespace statflow
