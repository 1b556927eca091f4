#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "nptest/eigenbasis.hpp"
#include "nptest/errors.hpp"

namespace nptest {

struct Dataset {
    std::vector<double> x;
    std::vector<double> y;

    int size() const { return static_cast<int>(x.size()); }

    void validate() const {
        if (x.size() != y.size()) throw input_error("Dataset: x and y lengths differ");
        if (x.size() < 2) throw input_error("Dataset: need at least two observations");
        for (double xi : x)
            if (!(xi >= 0.0 && xi <= 1.0)) throw input_error("Dataset: x outside [0,1]");
    }
};

/// Penalized least-squares fit in the truncated eigenbasis. Coefficients are
/// basis coordinates of the fitted function; `basis` is non-owning and must
/// outlive the estimate.
struct SplineEstimate {
    Eigen::VectorXd coefficients;
    FitConfig cfg;
    const EigenSystem* basis = nullptr;
};

struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double operator()(double x) const { return intercept + slope * x; }
};

/// Design matrix Phi with Phi(i, nu) = phi_nu(X_i).
inline Eigen::MatrixXd design_matrix(const std::vector<double>& x, const EigenSystem& sys) {
    const int n = static_cast<int>(x.size());
    const int N = sys.size();
    Eigen::MatrixXd phi(n, N);
    std::vector<double> row(N);
    for (int i = 0; i < n; ++i) {
        sys.eval_all(x[i], row.data());
        for (int nu = 0; nu < N; ++nu) phi(i, nu) = row[nu];
    }
    return phi;
}

/// Factorization of the penalized normal equations for one design and one
/// (lambda, basis) pair. Amortizes the decomposition across repeated fits on
/// the same X: Monte Carlo calibration refits only the right-hand side.
class FitSolver {
public:
    FitSolver(const std::vector<double>& x, const FitConfig& cfg, const EigenSystem& sys)
        : cfg_(cfg), sys_(&sys), phi_(design_matrix(x, sys)) {
        const int n = static_cast<int>(x.size());
        if (n != cfg.n) throw input_error("FitSolver: design size disagrees with cfg.n");
        const int N = sys.size();
        Eigen::MatrixXd normal = phi_.transpose() * phi_ / static_cast<double>(n);
        for (int nu = 0; nu < N; ++nu) normal(nu, nu) += cfg.lambda * sys.eigenvalues[nu];
        ldlt_.compute(normal);
        if (ldlt_.info() != Eigen::Success)
            throw numeric_error("FitSolver: penalized normal matrix is not factorizable");
    }

    const Eigen::MatrixXd& phi() const { return phi_; }
    const FitConfig& cfg() const { return cfg_; }
    const EigenSystem& basis() const { return *sys_; }

    /// Coefficients solving (Phi'Phi/n + lambda diag(rho)) b = Phi'y / n.
    Eigen::VectorXd coefficients(std::span<const double> y) const {
        const Eigen::Map<const Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
        Eigen::VectorXd rhs = phi_.transpose() * ym / static_cast<double>(cfg_.n);
        Eigen::VectorXd b = ldlt_.solve(rhs);
        if (!b.allFinite()) throw numeric_error("FitSolver: ill-posed normal equations");
        return b;
    }

    SplineEstimate fit(std::span<const double> y) const {
        return SplineEstimate{coefficients(y), cfg_, sys_};
    }

private:
    FitConfig cfg_;
    const EigenSystem* sys_;
    Eigen::MatrixXd phi_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

/// Smoothing-spline estimator: minimizes the penalized squared loss
/// (1/2n) sum (Y_i - f(X_i))^2 + (lambda/2) J(f, f) over the truncated span.
inline SplineEstimate fit(const Dataset& data, const FitConfig& cfg, const EigenSystem& sys) {
    data.validate();
    return FitSolver(data.x, cfg, sys).fit(data.y);
}

/// Noiseless variant: same normal equations with the responses replaced by
/// f0 evaluated at the design. Approximates (I - P_lambda) f0.
inline SplineEstimate fit_noiseless(const std::vector<double>& f0_values,
                                    const std::vector<double>& x, const FitConfig& cfg,
                                    const EigenSystem& sys) {
    if (f0_values.size() != x.size()) throw input_error("fit_noiseless: length mismatch");
    return FitSolver(x, cfg, sys).fit(f0_values);
}

/// The penalization operator in eigen-coordinates: (P_lambda g)_nu =
/// (lambda rho_nu / (1 + lambda rho_nu)) g_nu. Satisfies <f, P_lambda g> =
/// lambda J(f, g).
inline Eigen::VectorXd apply_P_lambda(const Eigen::VectorXd& coeffs, const FitConfig& cfg,
                                      const EigenSystem& sys) {
    if (coeffs.size() != sys.size()) throw input_error("apply_P_lambda: coefficient length mismatch");
    Eigen::VectorXd out(coeffs.size());
    for (int nu = 0; nu < coeffs.size(); ++nu) {
        const double lr = cfg.lambda * sys.eigenvalues[nu];
        out(nu) = lr / (1.0 + lr) * coeffs(nu);
    }
    return out;
}

/// RKHS norm sqrt(V + lambda J) of a coefficient vector:
/// sqrt(sum b_nu^2 (1 + lambda rho_nu)).
inline double rkhs_norm(const Eigen::VectorXd& coeffs, const FitConfig& cfg,
                        const EigenSystem& sys) {
    if (coeffs.size() != sys.size()) throw input_error("rkhs_norm: coefficient length mismatch");
    double s = 0.0;
    for (int nu = 0; nu < coeffs.size(); ++nu)
        s += coeffs(nu) * coeffs(nu) * (1.0 + cfg.lambda * sys.eigenvalues[nu]);
    return std::sqrt(s);
}

inline double evaluate(const SplineEstimate& est, double x) {
    const int N = est.basis->size();
    std::vector<double> row(N);
    est.basis->eval_all(x, row.data());
    double v = 0.0;
    for (int nu = 0; nu < N; ++nu) v += est.coefficients(nu) * row[nu];
    return v;
}

/// Least-squares line, the maximum likelihood estimate under the linear null.
inline LinearFit ols_linear_fit(const Dataset& data) {
    data.validate();
    const int n = data.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sx += data.x[i];
        sy += data.y[i];
        sxx += data.x[i] * data.x[i];
        sxy += data.x[i] * data.y[i];
    }
    const double det = n * sxx - sx * sx;
    const double scale = n * sxx + sx * sx;
    if (!(det > 1e-12 * std::max(scale, 1.0)))
        throw degenerate_design_error("ols_linear_fit: design has no two distinct x values");
    const double slope = (n * sxy - sx * sy) / det;
    const double intercept = (sy - slope * sx) / n;
    return LinearFit{intercept, slope};
}

/// Design-weighted least-squares projection of values observed at x onto the
/// truncated basis (minimum-norm solution when the design matrix is rank
/// deficient). This is how fixed null functions enter coefficient space.
inline Eigen::VectorXd project_design_ls(const std::vector<double>& values,
                                         const std::vector<double>& x, const EigenSystem& sys) {
    if (values.size() != x.size()) throw input_error("project_design_ls: length mismatch");
    const Eigen::MatrixXd phi = design_matrix(x, sys);
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi);
    Eigen::VectorXd b = cod.solve(v);
    if (!b.allFinite()) throw numeric_error("project_design_ls: projection failed");
    return b;
}

} // namespace nptest
