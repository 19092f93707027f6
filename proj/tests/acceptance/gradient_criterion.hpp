#pragma once

// Bridge to the double-precision gradient suite; deliberately free of lnca
// headers so it can be included from the single-precision build.

#include <string>

namespace acceptance {

struct GradientSummary {
    int ops = 0;
    int min_trials = 0;
    double worst_error = 0;
    std::string worst_op;
    double adjoint_error = 0;
    double seconds = 0;
};

GradientSummary run_gradient_criterion(int trials);

}  // namespace acceptance
