#include "ppower/presets.hpp"

#include <cmath>

#include "ppower/error.hpp"

namespace ppower {

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

}  // namespace

LTVSystem double_integrator(int T) {
    Mat A(2, 2), B(2, 1);
    A << 1.0, 0.1, 0.0, 1.0;
    B << 0.0, 0.1;
    const Mat Q = Mat::Identity(2, 2);
    const Mat R = m1(1.0);
    return LTVSystem::time_invariant(A, B, Q, R, dare_fixed_point(A, B, Q, R), Vec::Zero(2), T);
}

LTVSystem scalar_unit(int T) {
    return LTVSystem::time_invariant(m1(1), m1(1), m1(1), m1(1), m1(0.5 * (1.0 + std::sqrt(5.0))), Vec::Zero(1), T);
}

LTVSystem binary_example(int T) {
    return LTVSystem::time_invariant(m1(0), m1(1), m1(1), m1(0), m1(1), Vec::Zero(1), T);
}

LTVSystem scalar_contractive(int T) {
    return LTVSystem::time_invariant(m1(0.5), m1(1), m1(1), m1(1), m1(1), Vec::Zero(1), T);
}

Mat skewed_theta() {
    Mat th(2, 2);
    th << 1.0, 0.99, 0.0, 0.141;
    return th;
}

const std::vector<PresetInfo>& preset_catalog() {
    static const std::vector<PresetInfo> c{
        {"double-integrator", "A=[[1,0.1],[0,1]], B=[0;0.1], Q=I, R=1, P_T=stationary Riccati; used with "
                              "affine Gaussian predictors, theta=I or [[1,0.99],[0,0.141]]"},
        {"scalar-unit", "A=B=Q=R=1, P_T=(1+sqrt5)/2; multi-step predictor pair with equal power, unequal MSE"},
        {"binary-example", "A=0, B=1, Q=1, R=0, P_T=1, W_t uniform on {-1,1} revealed exactly; power equals T"},
        {"scalar-contractive", "A=0.5, B=1, Q=R=1, P_T=1; satisfies l_A < 1 for the general-cost lower bound"},
    };
    return c;
}

LTVSystem system_preset(const std::string& name, int T) {
    if (T <= 0) fail(ErrorKind::ConfigError, "T must be positive");
    if (name == "double-integrator") return double_integrator(T);
    if (name == "scalar-unit") return scalar_unit(T);
    if (name == "binary-example") return binary_example(T);
    if (name == "scalar-contractive") return scalar_contractive(T);
    fail(ErrorKind::ConfigError, "unknown preset '" + name + "'");
}

}  // namespace ppower
