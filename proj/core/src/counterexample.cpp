#include <algorithm>

#include <boost/rational.hpp>

#include "ppower/error.hpp"
#include "ppower/rollout.hpp"

namespace ppower {

namespace {

using Q = boost::rational<long long>;

Fraction to_fraction(const Q& q) { return Fraction{q.numerator(), q.denominator()}; }

// argmin of a u^2 + b u over u <= ub, a > 0
Q argmin_capped(const Q& a, const Q& b, const Q& ub) { return std::min(Q(-b) / (2 * a), ub); }

}  // namespace

MpcCounterexample mpc_counterexample(long long p_num, long long p_den) {
    if (p_den <= 0 || p_num <= 0 || p_num >= p_den) fail(ErrorKind::InvalidModel, "p must lie strictly in (0, 1)");
    const Q p(p_num, p_den);
    const Q one(1);

    // Time 0, W_1 unknown. With s = u0 + u1 the split minimising 2u0^2 + u1^2 is u0 = s/3, u1 = 2s/3,
    // leaving f(s) = 2s^2/3 + (1-p) s^2 + p (s+1)^2 and feasibility s + 1 <= 0 on the W_1 = 1 branch.
    const Q a = Q(2, 3) + (one - p) + p;
    const Q b = 2 * p;
    const Q s = argmin_capped(a, b, Q(-1));
    const Q u0 = s / 3;
    const Q x1 = u0;

    // Time 1, W_1 revealed: minimise x1^2 + u^2 + (x1 + u + w)^2 with x1 + u + w <= 0.
    auto replan = [&](const Q& w) {
        const Q c = x1 + w;
        const Q u = argmin_capped(Q(2), 2 * c, -c);
        const Q x2 = c + u;
        return x1 * x1 + u * u + x2 * x2;
    };
    const Q mpc = u0 * u0 + (one - p) * replan(Q(0)) + p * replan(one);
    // u0 = 0, then u1 = -W_1
    const Q alt = p;

    MpcCounterexample r;
    r.p = to_fraction(p);
    r.u0 = to_fraction(u0);
    r.mpc_cost = to_fraction(mpc);
    r.alternative_cost = to_fraction(alt);
    r.threshold = to_fraction(Q(2, 9));
    r.mpc_suboptimal = alt < mpc;
    return r;
}

}  // namespace ppower
