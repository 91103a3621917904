#pragma once

#include <cstdint>

#include "ctxforge/image.hpp"

namespace ctxforge {

struct SolverOptions {
    /// Bound on the max-norm residual.
    double tolerance = 1e-3;
    /// 0 selects ceil(10 * sqrt(unknowns)).
    int max_iterations = 0;
};

struct SolverStats {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    Index unknowns = 0;
};

struct PoissonSolution {
    /// Full-frame result: solved values on the mask, boundary values elsewhere.
    Plane<double> values;
    SolverStats stats;
};

/// Solves 4 f_p - sum_{q in N4(p)} f_q = 4 g_p - sum_{q in N4(p)} g_q for every set pixel p
/// of `mask`, with f_q = boundary_q wherever q is not in the mask. `guidance` and `boundary`
/// share the mask's size. Conjugate gradients, stopping on the max-norm residual.
/// Throws DataError if the mask is empty or touches the image border.
PoissonSolution solve_poisson(const Plane<double>& guidance, const Plane<double>& boundary,
                              const Mask& mask, const SolverOptions& options = {});

}  // namespace ctxforge
