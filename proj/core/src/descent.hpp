#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ppower/error.hpp"

namespace ppower::detail {

struct DescentResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
};

/// Gradient descent with Barzilai-Borwein step guesses and Armijo backtracking.
/// Near the optimum the objective stops resolving decreases, so a step that keeps the value
/// flat to rounding and shrinks the gradient is accepted as well.
template <class Fun, class Grad>
DescentResult bb_minimize(Fun&& fun, Grad&& grad, Eigen::VectorXd x, double grad_tol, int max_iter,
                          const char* what) {
    Eigen::VectorXd g = grad(x);
    double J = fun(x);
    double step = 1.0;
    Eigen::VectorXd x_prev, g_prev;
    for (int it = 0; it < max_iter; ++it) {
        const double gn = g.norm();
        if (!std::isfinite(gn)) break;
        if (gn <= grad_tol) return {x, J, it};
        if (it > 0) {
            const Eigen::VectorXd s = x - x_prev;
            const Eigen::VectorXd y = g - g_prev;
            const double sy = s.dot(y);
            if (sy > 0) step = s.squaredNorm() / sy;
        }
        x_prev = x;
        g_prev = g;
        bool accepted = false;
        for (int back = 0; back < 80; ++back) {
            const Eigen::VectorXd xn = x - step * g;
            const double Jn = fun(xn);
            if (Jn <= J - 1e-4 * step * gn * gn) {
                x = xn;
                J = Jn;
                accepted = true;
                break;
            }
            if (std::abs(Jn - J) <= 1e-13 * (1.0 + std::abs(J))) {
                const Eigen::VectorXd gnew = grad(xn);
                if (gnew.norm() < gn) {
                    x = xn;
                    J = Jn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) break;
        g = grad(x);
    }
    fail(ErrorKind::NoConvergence, std::string(what) + " did not reach the gradient tolerance");
}

}  // namespace ppower::detail
