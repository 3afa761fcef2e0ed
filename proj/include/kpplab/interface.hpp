#pragma once

#include <optional>

#include "kpplab/discretization.hpp"

namespace kpplab {

/// Rightmost downcrossing of u/reference through `level`, linearly
/// interpolated between cells. Empty when the ratio never crosses.
std::optional<double> interface_location(const Field& u, const Field& reference, double level = 0.5);
std::optional<double> interface_location(const Field& u, double reference, double level = 0.5);

/// Diameter of {x : lo <= u/reference <= hi}, or 0 when the set is empty.
double interface_width(const Field& u, const Field& reference, double lo, double hi);

}  // namespace kpplab
