#pragma once

#include <functional>

#include <Eigen/Dense>

namespace hsbnn {

/// Unnormalised log density with gradient: returns log p(theta) and writes
/// d log p / d theta into `grad` (resized by the callee). Implementations must
/// be safe to call concurrently from different threads.
using LogDensity = std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd& grad)>;

/// Value-only variant.
using LogDensityValue = std::function<double(const Eigen::VectorXd& theta)>;

}  // namespace hsbnn
