#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "codecomp/autodiff.hpp"

CODECOMP_NN_BEGIN

struct GradCheckReport {
    real max_relative_error = 0;
    std::size_t coordinates_checked = 0;
    std::string worst_location;
    bool passed = true;
};

struct GradCheckOptions {
    real epsilon = real(1e-6);
    real tolerance = real(1e-4);
    /// Denominator floor: relative error is |a − n| / max(|a|, |n|, floor).
    real floor = real(1e-3);
    /// Coordinates sampled per tensor; 0 checks every coordinate.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 1;
};

/// Compares backward() against central differences for f at `point`.
GradCheckReport grad_check(const std::function<Var(const Var&)>& f, const Tensor& point,
                           const GradCheckOptions& options = {});

/// Same comparison over a set of parameter leaves feeding `loss`. Parameter
/// values are restored afterwards.
GradCheckReport grad_check_parameters(const std::function<Var()>& loss,
                                      const std::vector<std::pair<std::string, Var>>& params,
                                      const GradCheckOptions& options = {});

CODECOMP_NN_END
