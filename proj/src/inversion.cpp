#include "qsm/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsm/rng.hpp"

namespace qsm {

ProxOperator ProxOperator::soft(double lambda, bool on_chi33, bool on_db_prime) {
    ProxOperator p;
    p.kind = Kind::soft_threshold;
    p.lambda = lambda;
    p.on_chi33 = on_chi33;
    p.on_db_prime = on_db_prime;
    p.validate();
    return p;
}

void ProxOperator::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw invalid_argument("ProxOperator: lambda must be finite and >= 0");
}

namespace {

void soft_shrink(std::vector<double>& v, double amount) {
    for (double& x : v)
        x = std::copysign(std::max(std::abs(x) - amount, 0.0), x);
}

} // namespace

void ProxOperator::apply(ReconState& X, double t) const {
    if (kind == Kind::identity) return;
    const double amount = t * lambda;
    if (on_chi33) soft_shrink(X.chi33.data, amount);
    if (on_db_prime) soft_shrink(X.db_prime.data, amount);
}

void SolveConfig::validate() const {
    if (iterations < 1)
        throw invalid_argument("SolveConfig: at least one iteration required");
    if (!step_sizes.empty() && step_sizes.size() != 1 &&
        step_sizes.size() != static_cast<std::size_t>(iterations))
        throw invalid_argument("SolveConfig: step list must hold 1 or K entries");
    for (double t : step_sizes)
        if (!(t > 0.0) || !std::isfinite(t))
            throw invalid_argument("SolveConfig: step sizes must be positive");
    if (lipschitz_iterations < 1)
        throw invalid_argument("SolveConfig: lipschitz_iterations must be >= 1");
    prox.validate();
}

RealVolume tkd_invert(const RealVolume& b, const FieldDirection& H, double threshold) {
    if (!(threshold > 0.0) || !(threshold < 2.0 / 3.0))
        throw invalid_argument("tkd_invert: threshold must lie in (0, 2/3)");

    const KSpaceKernel D = dipole_kernel(b.grid, H);
    ComplexVolume spec = fft_of_real(b);
    for (std::size_t i = 0; i < spec.data.size(); ++i) {
        const double d = D.values[i];
        const double clamped =
            (std::abs(d) >= threshold) ? d : (d < 0.0 ? -threshold : threshold);
        spec.data[i] /= clamped;
    }
    // reconstruction can exceed the field magnitude by up to 1/threshold
    return ifft_to_real(spec, Unit::ppm, max_abs(b.data) / threshold);
}

double objective(const ReconState& X, const RealVolume& b, const KSpaceKernel& D) {
    require_same_grid(X.chi33.grid, b.grid, "objective");
    RealVolume r = apply_A(X, D);
    double s = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const double d = r.data[i] - b.data[i];
        s += d * d;
    }
    return 0.5 * s;
}

double objective(const ReconState& X, const RealVolume& b, const FieldDirection& H) {
    return objective(X, b, dipole_kernel(b.grid, H));
}

namespace {

double residual_norm(const ReconState& X, const RealVolume& b, const KSpaceKernel& D) {
    RealVolume r = apply_A(X, D);
    double s = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const double d = r.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

SolveReport pgd_solve(const RealVolume& b, const FieldDirection& H, const SolveConfig& cfg) {
    cfg.validate();
    const KSpaceKernel D = dipole_kernel(b.grid, H);

    SolveReport report;
    report.state = ReconState(b.grid);

    std::vector<double> steps = cfg.step_sizes;
    if (steps.empty()) {
        const double L = lipschitz_estimate(b.grid, H, cfg.lipschitz_iterations);
        report.lipschitz = L;
        steps.assign(1, 1.0 / L);
    }

    const double r0 = residual_norm(report.state, b, D);
    report.residual_history.push_back(r0);
    report.objective_history.push_back(0.5 * r0 * r0);

    for (int k = 0; k < cfg.iterations; ++k) {
        const double t = steps.size() == 1 ? steps[0] : steps[static_cast<std::size_t>(k)];
        report.state = gradient_step(report.state, b, t, D);
        cfg.prox.apply(report.state, t);
        report.steps_used.push_back(t);

        const double r = residual_norm(report.state, b, D);
        report.residual_history.push_back(r);
        report.objective_history.push_back(0.5 * r * r);
        if (r > 10.0 * r0 && r0 > 0.0) {
            std::ostringstream msg;
            msg << "pgd_solve: residual grew from " << r0 << " to " << r
                << " at iteration " << (k + 1) << "; step size " << t << " is too large";
            throw numeric_error(msg.str());
        }
    }

    if (!cfg.record_residuals) {
        report.residual_history.clear();
        report.objective_history.clear();
    }
    return report;
}

CgResult cg_least_squares(const RealVolume& b, const FieldDirection& H, int max_iter,
                          double tol, double lambda) {
    if (!(lambda >= 0.0))
        throw invalid_argument("cg_least_squares: lambda must be >= 0");
    if (max_iter < 1)
        throw invalid_argument("cg_least_squares: max_iter must be >= 1");

    const KSpaceKernel D = dipole_kernel(b.grid, H);
    const auto apply_normal = [&](const ReconState& x) {
        ReconState y = apply_AH(apply_A(x, D), D);
        if (lambda > 0.0) state_axpy(y, lambda, x);
        return y;
    };

    CgResult result;
    result.state = ReconState(b.grid);
    const ReconState rhs = apply_AH(b, D);
    const double rhs_norm = state_norm(rhs);
    if (rhs_norm == 0.0) {
        result.converged = true;
        return result;
    }

    ReconState r = rhs; // residual rhs - M*0
    ReconState p = r;
    double rs = state_dot(r, r);

    for (int it = 0; it < max_iter; ++it) {
        const ReconState mp = apply_normal(p);
        const double p_mp = state_dot(p, mp);
        if (!(p_mp > 0.0)) break; // M is PSD; a nonpositive curvature is numerical noise
        const double alpha = rs / p_mp;
        state_axpy(result.state, alpha, p);
        state_axpy(r, -alpha, mp);
        const double rs_new = state_dot(r, r);
        result.iterations = it + 1;
        if (std::sqrt(rs_new) / rhs_norm <= tol) {
            result.converged = true;
            break;
        }
        const double beta = rs_new / rs;
        rs = rs_new;
        state_scale(p, beta);
        state_axpy(p, 1.0, r);
    }

    // true residual, independent of the recursion
    ReconState true_r = apply_normal(result.state);
    state_axpy(true_r, -1.0, rhs);
    result.relative_residual = state_norm(true_r) / rhs_norm;
    result.converged = result.relative_residual <= tol;
    return result;
}

double lipschitz_estimate(const Grid3& grid, const FieldDirection& H, int iters,
                          std::vector<double>* history) {
    if (iters < 1)
        throw invalid_argument("lipschitz_estimate: iters must be >= 1");

    const KSpaceKernel D = dipole_kernel(grid, H);
    ReconState x(grid);
    RandomStream rng(0x1517ull);
    for (double& v : x.chi33.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : x.db_prime.data) v = rng.uniform(-1.0, 1.0);
    state_scale(x, 1.0 / state_norm(x));

    double rayleigh = 0.0;
    for (int it = 0; it < iters; ++it) {
        ReconState y = apply_AH(apply_A(x, D), D);
        rayleigh = state_dot(x, y); // x is unit norm
        if (history) history->push_back(rayleigh);
        const double n = state_norm(y);
        if (n == 0.0) return 0.0;
        state_scale(y, 1.0 / n);
        x = std::move(y);
    }
    return rayleigh;
}

} // namespace qsm
