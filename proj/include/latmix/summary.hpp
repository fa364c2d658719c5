#pragma once

#include <string>
#include <vector>

#include "latmix/io.hpp"
#include "latmix/postfit.hpp"

namespace latmix {


/// Report: data counts, convergence, goodness of fit, estimates with
/// Wald tests, random-effect covariance, class sizes.
std::string summary_text(const FittedModel& fm, const ConvergenceSettings& conv);

/// One row per archive: G, loglik, parameters, BIC, class proportions.
/// Warnings about mismatched datasets are appended to `warnings`.
std::string summarytable_text(const std::vector<json>& archives, const std::vector<std::string>& labels,
                              std::vector<std::string>* warnings = nullptr);

}  // namespace latmix
