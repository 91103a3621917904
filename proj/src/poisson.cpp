#include "ctxforge/poisson.hpp"

#include <cmath>
#include <vector>

#include <Eigen/Sparse>

#include "ctxforge/error.hpp"

namespace ctxforge {

namespace {

using Vector = Eigen::VectorXd;

constexpr Index kDy[4] = {-1, 1, 0, 0};
constexpr Index kDx[4] = {0, 0, -1, 1};

}  // namespace

PoissonSolution solve_poisson(const Plane<double>& guidance, const Plane<double>& boundary, const Mask& mask,
                              const SolverOptions& options) {
    const Index rows = mask.rows();
    const Index cols = mask.cols();
    if (guidance.rows() != rows || guidance.cols() != cols || boundary.rows() != rows || boundary.cols() != cols)
        throw DataError("guidance, boundary and mask must share one size");

    Plane<Index> unknown = Plane<Index>::Constant(rows, cols, -1);
    Index n = 0;
    for (Index y = 0; y < rows; ++y) {
        for (Index x = 0; x < cols; ++x) {
            if (!mask(y, x)) continue;
            if (y == 0 || x == 0 || y == rows - 1 || x == cols - 1)
                throw DataError("Poisson mask touches the image border at (" + std::to_string(x) + ", " +
                                std::to_string(y) + ")");
            unknown(y, x) = n++;
        }
    }
    if (n == 0) throw DataError("Poisson mask has no interior pixel");

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(std::size_t(n) * 5);
    Vector rhs(n);
    Vector x(n);
    for (Index y = 0; y < rows; ++y) {
        for (Index xx = 0; xx < cols; ++xx) {
            const Index i = unknown(y, xx);
            if (i < 0) continue;
            triplets.emplace_back(i, i, 4.0);
            double b = 4.0 * guidance(y, xx);
            for (int k = 0; k < 4; ++k) {
                const Index ny = y + kDy[k];
                const Index nx = xx + kDx[k];
                b -= guidance(ny, nx);
                const Index j = unknown(ny, nx);
                if (j >= 0)
                    triplets.emplace_back(i, j, -1.0);
                else
                    b += boundary(ny, nx);
            }
            rhs(i) = b;
            x(i) = guidance(y, xx);
        }
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> system(n, n);
    system.setFromTriplets(triplets.begin(), triplets.end());

    const int max_iterations =
        options.max_iterations > 0 ? options.max_iterations : int(std::ceil(10.0 * std::sqrt(double(n))));

    SolverStats stats;
    stats.unknowns = n;
    Vector r = rhs - system * x;
    double residual = r.lpNorm<Eigen::Infinity>();
    Vector p = r;
    double rr = r.squaredNorm();
    while (residual > options.tolerance && stats.iterations < max_iterations) {
        Vector ap = system * p;
        const double alpha = rr / p.dot(ap);
        x += alpha * p;
        r -= alpha * ap;
        ++stats.iterations;
        residual = r.lpNorm<Eigen::Infinity>();
        if (residual <= options.tolerance) {
            // The recurrence drifts from b - Ax; confirm on the true residual and restart if needed.
            r = rhs - system * x;
            residual = r.lpNorm<Eigen::Infinity>();
            if (residual > options.tolerance) {
                p = r;
                rr = r.squaredNorm();
                continue;
            }
            break;
        }
        const double rr_next = r.squaredNorm();
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    stats.residual = (rhs - system * x).lpNorm<Eigen::Infinity>();
    stats.converged = stats.residual <= options.tolerance;

    PoissonSolution solution{boundary, stats};
    for (Index y = 0; y < rows; ++y)
        for (Index xx = 0; xx < cols; ++xx)
            if (unknown(y, xx) >= 0) solution.values(y, xx) = x(unknown(y, xx));
    return solution;
}

}  // namespace ctxforge
