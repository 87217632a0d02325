#pragma once

#include <functional>

#include "ghyena/params.hpp"

namespace ghyena {

// Builds a scalar loss from leased parameters; called with a recording lease
// for the analytic pass and with inference leases for the probes.
using LossFn = std::function<Value(Lease&)>;

// Max over parameter elements of |analytic - central difference| /
// (|central difference| + 1e-12), central differences with step eps.
double finite_diff_check(const LossFn& f, ParamStore& params, double eps);

}  // namespace ghyena
