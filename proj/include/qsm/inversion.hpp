#pragma once

#include <optional>

#include "qsm/dipole.hpp"

namespace qsm {

/// Deterministic stand-ins for the learned proximity operator: identity, or
/// per-voxel soft thresholding with weight lambda, optionally restricted to
/// one channel of the state.
struct ProxOperator {
    enum class Kind { identity, soft_threshold };

    Kind kind = Kind::identity;
    double lambda = 0.0;
    bool on_chi33 = true;
    bool on_db_prime = true;

    static ProxOperator identity() { return {}; }
    static ProxOperator soft(double lambda, bool on_chi33 = true, bool on_db_prime = true);

    void validate() const;
    /// In-place prox with step t: soft thresholding shrinks by t*lambda.
    void apply(ReconState& X, double t) const;
};

struct SolveConfig {
    int iterations = 3;
    /// Empty: constant 1/L from lipschitz_estimate. One entry: constant step.
    /// `iterations` entries: per-iteration steps.
    std::vector<double> step_sizes;
    ProxOperator prox;
    bool record_residuals = true;
    int lipschitz_iterations = 100;

    void validate() const;
};

struct SolveReport {
    ReconState state;
    std::vector<double> residual_history;  // ||A X^k - b||_2 for k = 0..K
    std::vector<double> objective_history; // g(X^k) for k = 0..K
    std::vector<double> steps_used;        // t_k, k = 1..K
    std::optional<double> lipschitz;       // set when the step was automatic
};

/// Thresholded k-space division. The kernel magnitude is clamped at
/// `threshold` (default 0.2): D~ = D where |D| >= threshold, otherwise
/// sign(D)*threshold with sign(0) := +1; the DC sample uses +threshold.
RealVolume tkd_invert(const RealVolume& b, const FieldDirection& H, double threshold = 0.2);

/// Data term g(X) = 1/2 ||A X - b||_2^2.
double objective(const ReconState& X, const RealVolume& b, const KSpaceKernel& D);
double objective(const ReconState& X, const RealVolume& b,
                 const FieldDirection& H = FieldDirection::z());

/// Unrolled proximal gradient descent, X^0 = 0,
/// X^k = prox(X^{k-1} - t_k A^H (A X^{k-1} - b), t_k).
/// Throws numeric_error if the residual grows past 10x its initial value.
SolveReport pgd_solve(const RealVolume& b, const FieldDirection& H, const SolveConfig& cfg);

struct CgResult {
    ReconState state;
    int iterations = 0;
    bool converged = false;
    double relative_residual = 0.0; // ||(A^H A + lambda I) X - A^H b|| / ||A^H b||
};

/// Conjugate gradient on the regularized normal equations
/// (A^H A + lambda I) X = A^H b. Oracle for the data term; lambda > 0 is
/// recommended since A^H A is singular (zero cone and DC).
CgResult cg_least_squares(const RealVolume& b, const FieldDirection& H, int max_iter,
                          double tol, double lambda);

/// Power iteration estimate of the largest eigenvalue of A^H A, from a
/// fixed-seed random state. Rayleigh quotients are appended to `history`
/// when provided (they are monotone nondecreasing).
double lipschitz_estimate(const Grid3& grid, const FieldDirection& H, int iters,
                          std::vector<double>* history = nullptr);

} // namespace qsm
