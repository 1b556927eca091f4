#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "nptest/bspline.hpp"
#include "nptest/errors.hpp"

namespace nptest {

enum class BasisSource { analytic_trigonometric, empirical_gram };

/// One estimation/testing configuration: smoothness order m, sample size n,
/// penalty lambda, and the transformed bandwidth h = lambda^{1/(2m)}. The
/// (lambda, h) pair is always derived from a single primal value so the two
/// stay consistent; construct through from_lambda or from_h.
struct FitConfig {
    int m;
    int n;
    double lambda;
    double h;

    static FitConfig from_lambda(int m, int n, double lambda) {
        validate(m, n, lambda);
        return FitConfig{m, n, lambda, std::pow(lambda, 1.0 / (2.0 * m))};
    }

    static FitConfig from_h(int m, int n, double h) {
        if (!(h > 0.0)) throw input_error("FitConfig: h must be positive");
        const double lambda = std::pow(h, 2.0 * m);
        validate(m, n, lambda);
        return FitConfig{m, n, lambda, h};
    }

private:
    static void validate(int m, int n, double lambda) {
        if (m < 1) throw input_error("FitConfig: m must be a positive integer");
        if (n < 2) throw input_error("FitConfig: n must be at least 2");
        if (!(lambda > 0.0)) throw input_error("FitConfig: lambda must be positive");
    }
};

/// Simultaneous eigen-system of the design inner product and the m-th
/// derivative penalty form: eigenvalues rho_nu (nondecreasing, rho_1 may be
/// zero) with eigenfunctions phi_nu orthonormal in the design norm.
/// Immutable after construction and safe to share across threads.
struct EigenSystem {
    int m = 2;
    std::vector<double> eigenvalues;
    double c_phi = 1.0; // sup over nu and x of |phi_nu(x)|
    BasisSource source = BasisSource::analytic_trigonometric;

    // Empirical-basis payload: phi_nu(x) = sum_a dict_coef(a, nu) * B_a(x).
    std::shared_ptr<const CubicBSplineBasis> dictionary;
    Eigen::MatrixXd dict_coef;

    int size() const { return static_cast<int>(eigenvalues.size()); }

    /// phi_nu(x) for 0-based index nu (nu = 0 is the first eigenfunction).
    double eigenfunction(int nu, double x) const {
        if (nu < 0 || nu >= size()) throw input_error("EigenSystem: eigenfunction index out of range");
        if (source == BasisSource::analytic_trigonometric) {
            if (nu == 0) return 1.0;
            const int k = (nu + 1) / 2;
            const double arg = 2.0 * std::numbers::pi * k * x;
            const double amp = std::numbers::sqrt2;
            return (nu % 2 == 1) ? amp * std::cos(arg) : amp * std::sin(arg);
        }
        const auto act = dictionary->eval(x);
        double v = 0.0;
        for (int j = 0; j < 4; ++j) v += act.value[j] * dict_coef(act.first + j, nu);
        return v;
    }

    /// All N eigenfunction values at x, written to out[0..N).
    void eval_all(double x, double* out) const {
        const int N = size();
        if (source == BasisSource::analytic_trigonometric) {
            out[0] = 1.0;
            const double arg = 2.0 * std::numbers::pi * x;
            const double amp = std::numbers::sqrt2;
            for (int k = 1; 2 * k - 1 < N; ++k) {
                out[2 * k - 1] = amp * std::cos(arg * k);
                if (2 * k < N) out[2 * k] = amp * std::sin(arg * k);
            }
            return;
        }
        const auto act = dictionary->eval(x);
        for (int nu = 0; nu < N; ++nu) {
            double v = 0.0;
            for (int j = 0; j < 4; ++j) v += act.value[j] * dict_coef(act.first + j, nu);
            out[nu] = v;
        }
    }
};

/// Analytic instantiation on the uniform design: phi_1 = 1,
/// phi_{2k} = sqrt2 cos(2 pi k x), phi_{2k+1} = sqrt2 sin(2 pi k x),
/// rho_1 = 0 and rho_{2k} = rho_{2k+1} = (2 pi k)^{2m}.
inline EigenSystem build_trig_basis(int m, int N) {
    if (N < 3 || N % 2 == 0) throw input_error("build_trig_basis: N must be odd and >= 3");
    if (m < 1) throw input_error("build_trig_basis: m must be positive");
    EigenSystem sys;
    sys.m = m;
    sys.source = BasisSource::analytic_trigonometric;
    sys.c_phi = std::numbers::sqrt2;
    sys.eigenvalues.resize(N);
    sys.eigenvalues[0] = 0.0;
    for (int k = 1; 2 * k - 1 < N; ++k) {
        const double rho = std::pow(2.0 * std::numbers::pi * k, 2.0 * m);
        sys.eigenvalues[2 * k - 1] = rho;
        if (2 * k < N) sys.eigenvalues[2 * k] = rho;
    }
    return sys;
}

namespace detail {

// 3-point Gauss-Legendre on [-1,1]; exact through degree 5, enough for
// products of derivatives of cubics at any penalty order m <= 3.
inline constexpr std::array<double, 3> kGl3Nodes = {-0.7745966692414834, 0.0, 0.7745966692414834};
inline constexpr std::array<double, 3> kGl3Weights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

inline Eigen::MatrixXd bspline_penalty_matrix(const CubicBSplineBasis& dict, int m) {
    const int d = dict.size();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
    const int G = dict.segments();
    const double hseg = 1.0 / G;
    for (int s = 0; s < G; ++s) {
        const double a = s * hseg, b = (s + 1) * hseg;
        for (int q = 0; q < 3; ++q) {
            const double x = 0.5 * (a + b) + 0.5 * (b - a) * kGl3Nodes[q];
            const double w = 0.5 * (b - a) * kGl3Weights[q];
            const auto act = dict.eval(x, m);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    J(act.first + i, act.first + j) += w * act.value[i] * act.value[j];
        }
    }
    return J;
}

} // namespace detail

/// Eigen-system estimated from an observed design: solves the generalized
/// symmetric problem J c = rho V c in a cubic B-spline dictionary, where V is
/// the design-weighted Gram (1/n) sum_i g(X_i) g'(X_i) and J the m-th
/// derivative penalty form (assembled exactly by per-segment quadrature).
/// Eigenfunctions come back with unit design norm and evaluate off-design
/// through the dictionary.
inline EigenSystem build_empirical_basis(const std::vector<double>& design, int m, int N) {
    const int n = static_cast<int>(design.size());
    if (N < 1) throw input_error("build_empirical_basis: N must be positive");
    if (n < N) throw input_error("build_empirical_basis: need at least N design points");
    if (m < 1 || m > 3)
        throw input_error("build_empirical_basis: cubic dictionary supports m in {1,2,3}");
    for (double x : design)
        if (x < 0.0 || x > 1.0) throw input_error("build_empirical_basis: design point outside [0,1]");

    // 4*ceil(sqrt(n)) breakpoints by default, clamped so the dictionary is at
    // least N functions and at most n (V must stay full rank).
    const int breaks = 4 * static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    int segments = std::clamp(breaks - 1, N - 3, n - 3);
    segments = std::max(segments, 1);
    auto dict = std::make_shared<const CubicBSplineBasis>(segments);
    const int d = dict->size();
    if (d < N) throw input_error("build_empirical_basis: dictionary smaller than N");

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, d);
    for (double x : design) {
        const auto act = dict->eval(x);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                V(act.first + i, act.first + j) += act.value[i] * act.value[j];
    }
    V /= static_cast<double>(n);

    Eigen::LLT<Eigen::MatrixXd> llt(V);
    if (llt.info() != Eigen::Success)
        throw degenerate_design_error("build_empirical_basis: design Gram is numerically singular");

    const Eigen::MatrixXd J = detail::bspline_penalty_matrix(*dict, m);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(J, V, Eigen::Ax_lBx | Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw numeric_error("build_empirical_basis: generalized eigensolver failed");

    EigenSystem sys;
    sys.m = m;
    sys.source = BasisSource::empirical_gram;
    sys.dictionary = dict;
    sys.eigenvalues.resize(N);
    sys.dict_coef = solver.eigenvectors().leftCols(N);
    for (int nu = 0; nu < N; ++nu)
        sys.eigenvalues[nu] = std::max(0.0, solver.eigenvalues()(nu)); // clip eigensolver noise

    double sup = 0.0;
    const int grid = 2001;
    std::vector<double> buf(N);
    for (int g = 0; g <= grid; ++g) {
        sys.eval_all(static_cast<double>(g) / grid, buf.data());
        for (int nu = 0; nu < N; ++nu) sup = std::max(sup, std::abs(buf[nu]));
    }
    sys.c_phi = sup;
    return sys;
}

/// Reproducing kernel K(x,y) = sum_nu phi_nu(x) phi_nu(y) / (1 + lambda rho_nu).
inline double kernel_eval(const EigenSystem& sys, const FitConfig& cfg, double x, double y) {
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
        throw input_error("kernel_eval: arguments must lie in [0,1]");
    const int N = sys.size();
    std::vector<double> fx(N), fy(N);
    sys.eval_all(x, fx.data());
    if (x == y) {
        double s = 0.0;
        for (int nu = 0; nu < N; ++nu) s += fx[nu] * fx[nu] / (1.0 + cfg.lambda * sys.eigenvalues[nu]);
        return s;
    }
    sys.eval_all(y, fy.data());
    double s = 0.0;
    for (int nu = 0; nu < N; ++nu) s += fx[nu] * fy[nu] / (1.0 + cfg.lambda * sys.eigenvalues[nu]);
    return s;
}

/// c_K = sup_x sqrt(h K(x,x)), evaluated on an equispaced grid.
inline double c_K(const EigenSystem& sys, const FitConfig& cfg, int grid_size = 1001) {
    if (grid_size < 101) throw input_error("c_K: grid_size must be at least 101");
    const int N = sys.size();
    std::vector<double> buf(N);
    double best = 0.0;
    for (int g = 0; g < grid_size; ++g) {
        const double x = static_cast<double>(g) / (grid_size - 1);
        sys.eval_all(x, buf.data());
        double kxx = 0.0;
        for (int nu = 0; nu < N; ++nu)
            kxx += buf[nu] * buf[nu] / (1.0 + cfg.lambda * sys.eigenvalues[nu]);
        best = std::max(best, kxx);
    }
    return std::sqrt(cfg.h * best);
}

/// rho_K = sqrt(h E[K^2(X_1,X_2)]) = sqrt(h sum_nu (1 + lambda rho_nu)^{-2}).
inline double rho_K(const EigenSystem& sys, const FitConfig& cfg) {
    double s = 0.0;
    for (double rho : sys.eigenvalues) {
        const double t = 1.0 / (1.0 + cfg.lambda * rho);
        s += t * t;
    }
    return std::sqrt(cfg.h * s);
}

/// zeta_K = sup over the penalty unit ball of lambda^{-1} ||P_lambda g||^2.
/// In the eigenbasis this reduces to max_nu lambda rho_nu / (1 + lambda rho_nu)
/// over nu with rho_nu > 0.
inline double zeta_K(const EigenSystem& sys, const FitConfig& cfg) {
    double best = -1.0;
    for (double rho : sys.eigenvalues) {
        if (rho <= 0.0) continue;
        best = std::max(best, cfg.lambda * rho / (1.0 + cfg.lambda * rho));
    }
    if (best < 0.0)
        throw infeasible_error("zeta_K: all eigenvalues vanish, penalty form is degenerate");
    return best;
}

/// sum_nu (1 + lambda rho_nu)^{-1}; divide by n for the trace term of the
/// test statistic's centering constant.
inline double trace_sum(const EigenSystem& sys, double lambda) {
    double s = 0.0;
    for (double rho : sys.eigenvalues) s += 1.0 / (1.0 + lambda * rho);
    return s;
}

/// (1/n) sum_nu (1 + lambda rho_nu)^{-1}, the expectation of
/// ||n^{-1} sum_i eps_i K_{X_i}||^2 under unit-variance noise.
inline double trace_term(const EigenSystem& sys, const FitConfig& cfg) {
    return trace_sum(sys, cfg.lambda) / cfg.n;
}

} // namespace nptest
