#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lambda1/grid.hpp"
#include "lambda1/spectral.hpp"

namespace lambda1 {

/// Relaxed density over D: phi in [0,1], sum(phi) h^2 pinned to the
/// target volume by the projection.
struct DensityField {
    const GridDomain* domain = nullptr;
    Field phi;
    double target_volume = 0.0;
    double stiffness = 0.0; ///< fictitious-domain reaction coefficient
};

struct HistoryRow {
    int iter = 0;
    double lambda = 0.0;
    double volume = 0.0;
    double objective = 0.0;
};

struct OptimizeResult {
    Support support;
    SpectralResult spectral;
    double lambda_penalty = 0.0; ///< penalty coefficient used/found
    std::vector<HistoryRow> history;
};

struct RelaxOptions {
    int steps = 400;
    std::uint64_t seed = 1;
    double stall_tol = 1e-8;  ///< relative lambda change over 10 steps
    double eig_tol = 1e-10;
};

/// Default fictitious stiffness: 1e4 * lambda_1(D).
double auto_stiffness(const GridDomain& domain);

/// Projected-gradient descent on the penalized eigenvalue
/// (L + c_pen (1-phi)) u = lambda u with exact volume projection.
/// Monotone: only steps that decrease lambda are accepted.
DensityField relaxed_descent(const GridDomain& domain, double a, double c_pen,
                             const RelaxOptions& opts = {});

/// Support {phi >= theta} where theta picks the smallest superlevel set
/// with volume >= target (the closest achievable volume from above).
Support threshold(const DensityField& density);

/// Greedy single-cell flip descent on lambda_1(S) + Lambda |S|.
/// Boundary-adjacent cells are visited in row-major order, strictly
/// improving flips applied immediately; terminates on a sweep with no
/// accepted flip (re-verified with cold deterministic solves) or at
/// sweep_limit.
OptimizeResult penalized_local_search(const GridDomain& domain, double lambda_penalty,
                                      const Support& initial, int sweep_limit);

/// Monotone bisection on the penalty: larger Lambda gives weakly smaller
/// optimal volume. Ends with an exact cell-count repair toward the target
/// (plus a swap polish on desk-size grids). tol_vol <= 0 selects the
/// default h^2 * max(4, boundary_cells/10).
OptimizeResult lambda_volume_search(const GridDomain& domain, double a,
                                    std::pair<double, double> bracket, double tol_vol);

/// Exhaustive minimum of lambda_1 over supports of exactly a_cells cells,
/// eigenvalues from the dense oracle. Ties at relative 1e-12 go to the
/// lexicographically smallest cell-index set.
OptimizeResult brute_force_optimal(const GridDomain& domain, int a_cells,
                                   bool connected_only = false);

/// Number of supports brute_force_optimal would enumerate (saturates at
/// 2^62 to avoid overflow).
std::uint64_t brute_force_count(const GridDomain& domain, int a_cells);

} // namespace lambda1
