#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "nptest/errors.hpp"

namespace nptest {

/// Cubic B-spline basis on a uniform clamped knot vector over [0,1].
/// With G segments there are G+3 basis functions; at any x exactly four are
/// active. Derivatives up to order 3 are available (order 4+ vanish).
class CubicBSplineBasis {
public:
    explicit CubicBSplineBasis(int segments) : segments_(segments) {
        if (segments < 1) throw input_error("CubicBSplineBasis: need at least one segment");
        // clamped: four copies of each endpoint
        knots_.resize(static_cast<std::size_t>(segments) + 7);
        for (int i = 0; i < 4; ++i) knots_[i] = 0.0;
        for (int i = 1; i < segments; ++i)
            knots_[static_cast<std::size_t>(i) + 3] = static_cast<double>(i) / segments;
        for (int i = 0; i < 4; ++i) knots_[knots_.size() - 1 - i] = 1.0;
    }

    int size() const { return segments_ + 3; }
    int segments() const { return segments_; }

    struct Active {
        int first;                    // index of the first active basis function
        std::array<double, 4> value;  // values (or derivatives) of the four active ones
    };

    /// Values of the four active basis functions at x, or their deriv-th derivative.
    Active eval(double x, int deriv = 0) const {
        if (x < 0.0 || x > 1.0) throw input_error("CubicBSplineBasis: x outside [0,1]");
        if (deriv < 0 || deriv > 3) throw input_error("CubicBSplineBasis: derivative order must be 0..3");
        const int seg = std::min(static_cast<int>(x * segments_), segments_ - 1);
        const int span = seg + 3; // knot span index: knots_[span] <= x < knots_[span+1]

        // Cox-de Boor triangle with knot differences kept for the derivative pass
        // (the "ders basis funs" scheme).
        constexpr int p = 3;
        double ndu[p + 1][p + 1];
        double left[p + 1], right[p + 1];
        ndu[0][0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[j] = x - knots_[span + 1 - j];
            right[j] = knots_[span + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                ndu[j][r] = right[r + 1] + left[j - r];
                const double temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        Active out;
        out.first = span - p;
        if (deriv == 0) {
            for (int j = 0; j <= p; ++j) out.value[j] = ndu[j][p];
            return out;
        }

        double a[2][p + 1];
        for (int r = 0; r <= p; ++r) {
            int s1 = 0, s2 = 1;
            a[0][0] = 1.0;
            double d = 0.0;
            for (int k = 1; k <= deriv; ++k) {
                d = 0.0;
                const int rk = r - k, pk = p - k;
                if (r >= k) {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                const int j1 = rk >= -1 ? 1 : -rk;
                const int j2 = r - 1 <= pk ? k - 1 : p - r;
                for (int j = j1; j <= j2; ++j) {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                    d += a[s2][j] * ndu[rk + j][pk];
                }
                if (r <= pk) {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                std::swap(s1, s2);
            }
            out.value[r] = d;
        }
        double factor = p;
        for (int k = 2; k <= deriv; ++k) factor *= (p - k + 1);
        for (int j = 0; j <= p; ++j) out.value[j] *= factor;
        return out;
    }

    double eval_one(int basis_index, double x, int deriv = 0) const {
        const Active act = eval(x, deriv);
        const int offset = basis_index - act.first;
        return (offset >= 0 && offset < 4) ? act.value[offset] : 0.0;
    }

private:
    int segments_;
    std::vector<double> knots_;
};

} // namespace nptest
