#include "kpplab/interface.hpp"

#include <algorithm>
#include <vector>

#include "kpplab/errors.hpp"

namespace kpplab {

namespace {

std::optional<double> crossing(const Field& u, const std::vector<double>& ratio, double level) {
    for (int i = u.grid.n - 2; i >= 0; --i) {
        const double a = ratio[static_cast<std::size_t>(i)];
        const double b = ratio[static_cast<std::size_t>(i + 1)];
        if (a >= level && b < level) {
            const double s = (a - level) / (a - b);
            return u.grid.x(i) + s * u.grid.dx;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<double> interface_location(const Field& u, const Field& reference, double level) {
    if (u.grid.n != reference.grid.n) throw ConfigError("interface: field and reference grids differ");
    std::vector<double> r(u.values.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double ref = reference.values[i];
        r[i] = ref > 0.0 ? u.values[i] / ref : 0.0;
    }
    return crossing(u, r, level);
}

std::optional<double> interface_location(const Field& u, double reference, double level) {
    if (!(reference > 0.0)) throw ConfigError("interface: reference level must be positive");
    std::vector<double> r(u.values.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = u.values[i] / reference;
    return crossing(u, r, level);
}

double interface_width(const Field& u, const Field& reference, double lo, double hi) {
    double first = 0.0, last = 0.0;
    bool any = false;
    for (int i = 0; i < u.grid.n; ++i) {
        const double ref = reference.values[static_cast<std::size_t>(i)];
        const double r = ref > 0.0 ? u.values[static_cast<std::size_t>(i)] / ref : 0.0;
        if (r >= lo && r <= hi) {
            if (!any) first = u.grid.x(i);
            last = u.grid.x(i);
            any = true;
        }
    }
    return any ? last - first : 0.0;
}

}  // namespace kpplab
