#include "kpplab/discretization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kpplab/errors.hpp"

namespace kpplab {

void Grid::validate() const {
    if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("grid spacing must be positive");
    if (n < 3) throw ConfigError("grid needs at least 3 cells");
    if (!std::isfinite(x_min)) throw ConfigError("grid origin must be finite");
}

bool Grid::same_geometry(const Grid& other) const {
    return n == other.n && dx == other.dx && x_min == other.x_min && periodic == other.periodic &&
           window_shift == other.window_shift;
}

Grid Grid::ring(double length, int cells) {
    Grid g;
    g.x_min = 0.0;
    g.dx = length / cells;
    g.n = cells;
    g.periodic = true;
    g.validate();
    return g;
}

Grid Grid::window(double x_min, double dx, int cells) {
    Grid g;
    g.x_min = x_min;
    g.dx = dx;
    g.n = cells;
    g.validate();
    return g;
}

Field Field::constant(const Grid& grid, double value, double t) {
    grid.validate();
    return Field{grid, std::vector<double>(static_cast<std::size_t>(grid.n), value), t};
}

Field Field::sample(const Grid& grid, const std::function<double(double)>& fn, double t) {
    grid.validate();
    Field f{grid, std::vector<double>(static_cast<std::size_t>(grid.n)), t};
    for (int i = 0; i < grid.n; ++i) f.values[static_cast<std::size_t>(i)] = fn(grid.x(i));
    return f;
}

double Field::min() const { return *std::min_element(values.begin(), values.end()); }
double Field::max() const { return *std::max_element(values.begin(), values.end()); }

double Field::sup_norm() const {
    double s = 0.0;
    for (double v : values) s = std::max(s, std::abs(v));
    return s;
}

void Field::validate() const {
    grid.validate();
    if (static_cast<int>(values.size()) != grid.n) throw ConfigError("field length does not match grid");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("field contains non-finite values");
}

void Trajectory::push(Field f) {
    if (!snapshots.empty() && !(f.t > snapshots.back().t))
        throw InvariantError("trajectory timestamps must increase strictly");
    snapshots.push_back(std::move(f));
}

Kernel Kernel::uniform(double r0) {
    if (!(r0 > 0.0)) throw ConfigError("kernel radius must be positive");
    // One-sided limit at the support edge so the trapezoid rule integrates the
    // step exactly.
    return Kernel{r0, [r0](double z) { return std::abs(z) <= r0 ? 0.5 / r0 : 0.0; }, "uniform"};
}

Kernel Kernel::cosine_bump(double r0) {
    if (!(r0 > 0.0)) throw ConfigError("kernel radius must be positive");
    return Kernel{r0,
                  [r0](double z) {
                      return std::abs(z) < r0 ? (1.0 + std::cos(std::numbers::pi * z / r0)) / (2.0 * r0)
                                              : 0.0;
                  },
                  "cosine-bump"};
}

Kernel Kernel::from_table(std::vector<double> z, std::vector<double> k, std::string name) {
    if (z.size() != k.size() || z.size() < 3) throw ConfigError("kernel table needs >= 3 (z, kappa) rows");
    std::vector<std::size_t> idx(z.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return z[a] < z[b]; });
    std::vector<double> zs, ks;
    double kmax = 0.0;
    for (auto i : idx) {
        if (!(k[i] >= 0.0) || !std::isfinite(z[i])) throw ConfigError("kernel table must be finite and nonnegative");
        zs.push_back(z[i]);
        ks.push_back(k[i]);
        kmax = std::max(kmax, k[i]);
    }
    const double r0 = std::max(std::abs(zs.front()), std::abs(zs.back()));
    if (!(r0 > 0.0) || !(kmax > 0.0)) throw ConfigError("kernel table is degenerate");
    auto interp = [zs, ks](double x) {
        if (x < zs.front() || x > zs.back()) return 0.0;
        auto it = std::upper_bound(zs.begin(), zs.end(), x);
        if (it == zs.end()) return ks.back();
        const auto j = static_cast<std::size_t>(it - zs.begin());
        if (j == 0) return ks.front();
        const double s = (x - zs[j - 1]) / (zs[j] - zs[j - 1]);
        return ks[j - 1] + s * (ks[j] - ks[j - 1]);
    };
    for (double x : zs)
        if (std::abs(interp(x) - interp(-x)) > 1e-9 * kmax) throw ConfigError("kernel table is not even");
    return Kernel{r0, interp, std::move(name)};
}

Kernel Kernel::from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open kernel file " + path.string());
    std::vector<double> z, k;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a = 0, b = 0;
        if (!(ss >> a >> b)) continue;  // header
        z.push_back(a);
        k.push_back(b);
    }
    return from_table(std::move(z), std::move(k), path.filename().string());
}

int kernel_half_width(double r0, double dx) {
    // Cells whose footprint [z - dx/2, z + dx/2] meets the open support.
    return std::max(1, static_cast<int>(std::ceil(r0 / dx - 0.5 - 1e-9)));
}

KernelWeights discretize(const Kernel& k, double dx) {
    if (!(dx > 0.0)) throw ConfigError("kernel quadrature spacing must be positive");
    if (k.r0 < 2.0 * dx * (1.0 - 1e-12))
        throw ConfigError("kernel unresolved: r0 must span at least two cells");
    KernelWeights kw;
    kw.dx = dx;
    kw.half_width = kernel_half_width(k.r0, dx);
    const int J = kw.half_width;
    const bool edge_on_node = std::abs(J * dx - k.r0) <= 1e-9 * k.r0;
    // Off-node edges: the boundary cell keeps only its inside fraction, sampled
    // at the midpoint of that part.
    const double frac = edge_on_node ? 0.5 : (k.r0 - (J - 0.5) * dx) / dx;
    const double z_edge = edge_on_node ? J * dx : (J - 0.5) * dx + 0.5 * frac * dx;
    kw.w.assign(static_cast<std::size_t>(2 * J + 1), 0.0);
    double mass = 0.0;
    for (int j = -J; j <= J; ++j) {
        double wj = 0.0;
        if (std::abs(j) == J) wj = k.density(j < 0 ? -z_edge : z_edge) * dx * frac;
        else wj = k.density(j * dx) * dx;
        if (!(wj >= 0.0)) throw ConfigError("kernel density must be nonnegative");
        kw.w[static_cast<std::size_t>(j + J)] = wj;
        mass += wj;
    }
    if (!(mass > 0.0)) throw ConfigError("kernel has zero discrete mass");
    kw.raw_mass = mass;
    for (double& w : kw.w) w /= mass;
    return kw;
}

double kernel_laplace(const Kernel& k, double mu, double dx) {
    if (std::abs(mu) * k.r0 > kTiltGuard) throw NumericError("tilt too strong for kernel support");
    const auto kw = discretize(k, dx);
    double s = 0.0;
    for (int j = -kw.half_width; j <= kw.half_width; ++j) s += kw.at(j) * std::exp(mu * j * dx);
    return s;
}

DispersalOperator DispersalOperator::random() { return DispersalOperator{}; }

DispersalOperator DispersalOperator::nonlocal(Kernel kernel) {
    DispersalOperator op;
    op.kind_ = DispersalKind::Nonlocal;
    op.kernel_ = std::move(kernel);
    return op;
}

const Kernel& DispersalOperator::kernel() const {
    if (!kernel_) throw ConfigError("random dispersal has no kernel");
    return *kernel_;
}

int DispersalOperator::halo(double dx) const {
    if (is_random()) return 1;
    return kernel_half_width(kernel_->r0, dx);
}

std::string DispersalOperator::describe() const {
    if (is_random()) return "random";
    std::ostringstream s;
    s << "nonlocal(" << kernel_->name << ", r0=" << kernel_->r0 << ")";
    return s.str();
}

double ExtensionRule::value(int k) const {
    if (base == 0.0 || ratio == 1.0) return base;
    return base * std::pow(ratio, k);
}

ExtensionRule extend_policy(const Field& u, Side side) {
    const auto& v = u.values;
    if (side == Side::Left) return ExtensionRule{Side::Left, v.front(), 1.0};
    const double last = v[v.size() - 1];
    const double prev = v[v.size() - 2];
    if (!(last > 0.0) || !(prev > 0.0)) return ExtensionRule{Side::Right, 0.0, 1.0};
    return ExtensionRule{Side::Right, last, std::clamp(last / prev, 0.0, 1.0)};
}

Stencil Stencil::build(const DispersalOperator& op, double dx, double mu, TiltForm form) {
    Stencil s;
    if (op.is_random()) {
        s.half_width = 1;
        const double h2 = 1.0 / (dx * dx);
        if (mu == 0.0) {
            s.coeff = {h2, 0.0, h2};
            s.center = 0.0;
            s.difference_form = true;
        } else if (form == TiltForm::Continuum) {
            s.coeff = {h2 + mu / dx, 0.0, h2 - mu / dx};
            s.center = -2.0 * h2 + mu * mu;
            s.difference_form = false;
        } else {
            s.coeff = {h2 * std::exp(mu * dx), 0.0, h2 * std::exp(-mu * dx)};
            s.center = -2.0 * h2;
            s.difference_form = false;
        }
        return s;
    }
    const Kernel& k = op.kernel();
    if (std::abs(mu) * k.r0 > kTiltGuard) throw NumericError("tilt too strong for kernel support");
    const auto kw = discretize(k, dx);
    s.half_width = kw.half_width;
    s.coeff.assign(kw.w.size(), 0.0);
    if (mu == 0.0) {
        // Difference form: the center weight is folded into u_i so constants
        // are annihilated without relying on sum w_j == 1 in floating point.
        for (int j = -kw.half_width; j <= kw.half_width; ++j)
            if (j != 0) s.coeff[static_cast<std::size_t>(j + kw.half_width)] = kw.at(j);
        s.center = 0.0;
        s.difference_form = true;
    } else {
        for (int j = -kw.half_width; j <= kw.half_width; ++j)
            s.coeff[static_cast<std::size_t>(j + kw.half_width)] = kw.at(j) * std::exp(-mu * j * dx);
        s.center = -1.0;
        s.difference_form = false;
    }
    return s;
}

void Stencil::apply(std::span<const double> padded, std::span<double> out) const {
    const int h = half_width;
    const std::size_t n = out.size();
    const double* c = coeff.data() + h;
    if (difference_form) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = padded.data() + i + static_cast<std::size_t>(h);
            const double ui = *p;
            double acc = 0.0;
            for (int j = -h; j <= h; ++j)
                if (j != 0) acc += c[j] * (p[j] - ui);
            out[i] = acc + center * ui;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = padded.data() + i + static_cast<std::size_t>(h);
            double acc = 0.0;
            for (int j = -h; j <= h; ++j)
                if (j != 0) acc += c[j] * p[j];
            out[i] = acc + (center + c[0]) * p[0];
        }
    }
}

double Stencil::row_sum() const {
    if (difference_form) return center;
    double s = center;
    for (double c : coeff) s += c;
    return s;
}

void pad(const Field& u, int halo, const Boundary& boundary, std::vector<double>& out) {
    const int n = u.grid.n;
    out.resize(static_cast<std::size_t>(n + 2 * halo));
    std::copy(u.values.begin(), u.values.end(), out.begin() + halo);
    if (u.grid.periodic) {
        if (halo > n) throw ConfigError("stencil wider than periodic ring");
        for (int k = 1; k <= halo; ++k) {
            out[static_cast<std::size_t>(halo - k)] = u.values[static_cast<std::size_t>(n - k)];
            out[static_cast<std::size_t>(halo + n - 1 + k)] = u.values[static_cast<std::size_t>(k - 1)];
        }
        return;
    }
    if (boundary.left_value) {
        for (int k = 1; k <= halo; ++k) out[static_cast<std::size_t>(halo - k)] = boundary.left_value(u.grid, u.t, k);
    } else if (boundary.left_guide) {
        const double first = u.values.front();
        for (int k = 1; k <= halo; ++k)
            out[static_cast<std::size_t>(halo - k)] = first * boundary.left_guide(u.grid, u.t, k);
    } else {
        const auto left = extend_policy(u, Side::Left);
        for (int k = 1; k <= halo; ++k) out[static_cast<std::size_t>(halo - k)] = left.value(k);
    }
    if (boundary.right_value) {
        for (int k = 1; k <= halo; ++k)
            out[static_cast<std::size_t>(halo + n - 1 + k)] = boundary.right_value(u.grid, u.t, k);
    } else if (boundary.right_guide) {
        const double last = u.values.back();
        for (int k = 1; k <= halo; ++k)
            out[static_cast<std::size_t>(halo + n - 1 + k)] = last * boundary.right_guide(u.grid, u.t, k);
    } else {
        const auto right = extend_policy(u, Side::Right);
        for (int k = 1; k <= halo; ++k) out[static_cast<std::size_t>(halo + n - 1 + k)] = right.value(k);
    }
}

namespace {

void require_resolved(const DispersalOperator& op, const Field& u) {
    if (u.grid.n < 3) throw ConfigError("field needs at least 3 cells");
    if (!op.is_random() && op.kernel().r0 < 2.0 * u.grid.dx * (1.0 - 1e-12))
        throw ConfigError("kernel unresolved: r0 < 2 dx");
}

Field run_stencil(const Stencil& s, const Field& u, const Boundary& boundary) {
    std::vector<double> padded;
    pad(u, s.half_width, boundary, padded);
    Field out{u.grid, std::vector<double>(u.values.size()), u.t};
    s.apply(padded, out.values);
    return out;
}

}  // namespace

Field apply(const DispersalOperator& op, const Field& u, const Boundary& boundary) {
    require_resolved(op, u);
    u.validate();
    return run_stencil(Stencil::build(op, u.grid.dx), u, boundary);
}

Field tilted_apply(const DispersalOperator& op, double mu, const Field& w, TiltForm form,
                   const Boundary& boundary) {
    if (!std::isfinite(mu)) throw NumericError("tilt must be finite");
    if (mu == 0.0) return apply(op, w, boundary);
    require_resolved(op, w);
    w.validate();
    return run_stencil(Stencil::build(op, w.grid.dx, mu, form), w, boundary);
}

Field shift_window(const Field& u, int k, const Boundary& boundary) {
    const int n = u.grid.n;
    if (std::abs(k) >= n) throw ConfigError("frame jump too large");
    if (k == 0) return u;
    if (u.grid.periodic) throw ConfigError("periodic rings do not move");
    Field out = u;
    out.grid.window_shift += k;
    if (k > 0) {
        std::copy(u.values.begin() + k, u.values.end(), out.values.begin());
        if (boundary.right_value) {
            for (int j = 1; j <= k; ++j)
                out.values[static_cast<std::size_t>(n - k - 1 + j)] = boundary.right_value(u.grid, u.t, j);
        } else if (boundary.right_guide) {
            const double last = u.values.back();
            for (int j = 1; j <= k; ++j)
                out.values[static_cast<std::size_t>(n - k - 1 + j)] = last * boundary.right_guide(u.grid, u.t, j);
        } else {
            const auto rule = extend_policy(u, Side::Right);
            for (int j = 1; j <= k; ++j) out.values[static_cast<std::size_t>(n - k - 1 + j)] = rule.value(j);
        }
    } else {
        const int m = -k;
        std::copy(u.values.begin(), u.values.end() - m, out.values.begin() + m);
        if (boundary.left_value) {
            for (int j = 1; j <= m; ++j)
                out.values[static_cast<std::size_t>(m - j)] = boundary.left_value(u.grid, u.t, j);
        } else if (boundary.left_guide) {
            const double first = u.values.front();
            for (int j = 1; j <= m; ++j)
                out.values[static_cast<std::size_t>(m - j)] = first * boundary.left_guide(u.grid, u.t, j);
        } else {
            const auto rule = extend_policy(u, Side::Left);
            for (int j = 1; j <= m; ++j) out.values[static_cast<std::size_t>(m - j)] = rule.value(j);
        }
    }
    return out;
}

}  // namespace kpplab
