#pragma once

#include <cstdint>
#include <vector>

#include "lambda1/grid.hpp"

namespace lambda1 {

/// First eigenpair of the Dirichlet Laplacian on a support.
/// u is stored on the full grid, zero outside the support, normalized so
/// that sum(u^2) h^2 = 1, and nonnegative. For a disconnected support u
/// lives on the component attaining the smallest eigenvalue.
struct SpectralResult {
    double lambda = 0.0;
    Field u;
    double residual = 0.0; ///< |Lu - lambda u| / (lambda |u|), plain 2-norms
    int iterations = 0;
    std::vector<double> per_component; ///< per-component lambda_1, by label; empty if connected
};

/// J(v) = int |grad v|^2 - lambda_ref int v^2 with the grid's discrete forms.
struct EnergyValue {
    double j = 0.0;
    double gradient_part = 0.0;
    double mass_part = 0.0;
};

struct EigOptions {
    double tol = 1e-10;
    int max_iter = 500;        ///< outer inverse-iteration steps
    std::uint64_t seed = 1;    ///< used only for the stagnation restart
    const Field* warm_start = nullptr;
};

/// Raised when the eigensolver fails to converge; carries the best iterate.
class SolveError : public Error {
public:
    SolveError(const std::string& msg, double lambda, double residual, int iterations, Field best)
        : Error(msg), lambda(lambda), residual(residual), iterations(iterations),
          best_iterate(std::move(best)) {}
    double lambda;
    double residual;
    int iterations;
    Field best_iterate;
};

/// 5-point stencil with homogeneous Dirichlet data outside the support:
/// (Lv)_i = (4 v_i - sum of in-support neighbours) / h^2, zero outside.
Field apply_laplacian(const GridDomain& domain, const Support& support, const Field& v);

/// Smallest eigenpair by inverse power iteration (matrix-free CG inner
/// solves, deterministic all-ones start, seeded restart on stagnation).
/// Disconnected supports are solved per component; ties at relative 1e-12
/// go to the smallest component label.
SpectralResult smallest_eigenpair(const GridDomain& domain, const Support& support,
                                  const EigOptions& opts = {});

/// Smallest eigenpair of L + c_pen (1 - phi) over all admissible cells.
SpectralResult penalized_smallest_eigenpair(const GridDomain& domain, const Field& phi,
                                            double c_pen, const EigOptions& opts = {});

/// sum v (Lv) h^2 / sum v^2 h^2 (exact summation by parts).
double rayleigh_quotient(const GridDomain& domain, const Support& support, const Field& v);

/// Discrete J with forward differences and Dirichlet ghost zeros on D.
EnergyValue j_energy(const GridDomain& domain, const Field& v, double lambda_ref);

/// Dense symmetric solve (cyclic Jacobi rotations) for supports of at most
/// 400 cells. Independent of the iterative path.
SpectralResult dense_eigen_oracle(const GridDomain& domain, const Support& support);

/// Smallest eigenvalue over fields supported on `support` cells; used for
/// ball preconditions. Identical to smallest_eigenpair().lambda.
double support_lambda1(const GridDomain& domain, const Support& support, double tol = 1e-10);

} // namespace lambda1
