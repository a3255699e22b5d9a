#pragma once

#include <string>
#include <vector>

#include "ppower/lqr.hpp"

namespace ppower {

/// A = [[1, 0.1], [0, 1]], B = [0; 0.1], Q = I, R = 1, P_T = stationary Riccati solution
LTVSystem double_integrator(int T);
/// A = B = Q = R = 1, P_T = (1 + sqrt 5) / 2
LTVSystem scalar_unit(int T);
/// A = 0, B = 1, Q = 1, R = 0, P_T = 1: each step's input can cancel the disturbance exactly
LTVSystem binary_example(int T);
/// A = 0.5, B = 1, Q = R = 1, P_T = 1: contractive scalar system for the general-cost bound
LTVSystem scalar_contractive(int T);

/// theta = [[1, 0.99], [0, 0.141]]; same column norms as I up to 1.2e-4
Mat skewed_theta();

struct PresetInfo {
    std::string name;
    std::string description;
};

const std::vector<PresetInfo>& preset_catalog();
/// Throws ConfigError naming the unknown preset.
LTVSystem system_preset(const std::string& name, int T);

}  // namespace ppower
