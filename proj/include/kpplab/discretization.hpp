#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kpplab {

/// Uniform 1-D grid. Cell i sits at x_min + (window_shift + i) * dx; a moving
/// frame changes window_shift only, so physical coordinates stay on one lattice.
struct Grid {
    double x_min = 0.0;
    double dx = 0.1;
    int n = 3;
    long window_shift = 0;
    bool periodic = false;

    double x(int i) const { return x_min + static_cast<double>(window_shift + i) * dx; }
    double length() const { return dx * n; }
    void validate() const;
    bool same_geometry(const Grid& other) const;

    static Grid ring(double length, int cells);
    static Grid window(double x_min, double dx, int cells);
};

struct Field {
    Grid grid;
    std::vector<double> values;
    double t = 0.0;

    static Field constant(const Grid& grid, double value, double t = 0.0);
    static Field sample(const Grid& grid, const std::function<double(double)>& fn, double t = 0.0);

    int size() const { return static_cast<int>(values.size()); }
    double min() const;
    double max() const;
    double sup_norm() const;
    void validate() const;
};

struct Trajectory {
    std::vector<Field> snapshots;
    double record_stride = 0.0;

    void push(Field f);
    const Field& back() const { return snapshots.back(); }
};

/// Dispersal kernel: even, nonnegative, supported on [-r0, r0].
struct Kernel {
    double r0 = 1.0;
    std::function<double(double)> density;
    std::string name;

    static Kernel uniform(double r0);
    static Kernel cosine_bump(double r0);
    static Kernel from_table(std::vector<double> z, std::vector<double> k, std::string name = "table");
    /// Two-column CSV (z, kappa(z)); '#' lines and a non-numeric header are skipped.
    static Kernel from_csv(const std::filesystem::path& path);
};

/// Trapezoid quadrature of a kernel on the lattice z_j = j*dx, |j| <= half_width,
/// renormalized to unit mass. A support edge between nodes contributes the
/// inside fraction of its boundary cell.
struct KernelWeights {
    double dx = 0.0;
    int half_width = 0;
    std::vector<double> w;  // w[j + half_width]
    double raw_mass = 0.0;

    double at(int j) const { return w[static_cast<std::size_t>(j + half_width)]; }
};

KernelWeights discretize(const Kernel& k, double dx);
int kernel_half_width(double r0, double dx);

/// Quadrature of the two-sided Laplace moment  sum_j w_j e^{mu z_j}.
double kernel_laplace(const Kernel& k, double mu, double dx);

enum class DispersalKind { Random, Nonlocal };

class DispersalOperator {
public:
    static DispersalOperator random();
    static DispersalOperator nonlocal(Kernel kernel);

    DispersalKind kind() const { return kind_; }
    bool is_random() const { return kind_ == DispersalKind::Random; }
    const Kernel& kernel() const;
    /// Ghost cells needed on each side at spacing dx.
    int halo(double dx) const;
    std::string describe() const;

private:
    DispersalKind kind_ = DispersalKind::Random;
    std::optional<Kernel> kernel_;
};

/// How the mu-tilted random operator is discretized. Continuum is the centered
/// difference of w_xx - 2 mu w_x + mu^2 w; Conjugate is e^{mu x} Delta_h e^{-mu x}
/// exactly, which keeps tilted eigen-solutions exact solutions of the untilted
/// scheme. Nonlocal tilts are identical under both forms.
enum class TiltForm { Continuum, Conjugate };

enum class Side { Left, Right };

/// Ghost value k >= 1 cells beyond an edge is base * ratio^k.
struct ExtensionRule {
    Side side = Side::Right;
    double base = 0.0;
    double ratio = 1.0;

    double value(int k) const;
};

ExtensionRule extend_policy(const Field& u, Side side);

/// Replaces the fitted right tail: ghost_k = u_last * ratio(grid, t, k).
using TailGuide = std::function<double(const Grid& grid, double t, int k)>;

struct Boundary {
    TailGuide right_guide;
    TailGuide left_guide;  // ghost_k = u_first * ratio(grid, t, k), k cells left of the window
    // Prescribed ghost values; they take precedence over the ratio guides.
    TailGuide right_value;
    TailGuide left_value;
};

/// Linear stencil c_{-h..h} applied to a halo-padded array.
struct Stencil {
    int half_width = 1;
    std::vector<double> coeff;  // coeff[j + half_width], j != 0 used in difference form
    double center = 0.0;
    bool difference_form = true;  // out = sum_{j!=0} c_j (u_{i+j} - u_i) + center*u_i

    static Stencil build(const DispersalOperator& op, double dx, double mu = 0.0,
                         TiltForm form = TiltForm::Continuum);
    void apply(std::span<const double> padded, std::span<double> out) const;
    /// Sum of coefficients acting on a constant field.
    double row_sum() const;
};

/// Copies u into a buffer with `halo` ghost cells per side (periodic wrap or extension).
void pad(const Field& u, int halo, const Boundary& boundary, std::vector<double>& out);

Field apply(const DispersalOperator& op, const Field& u, const Boundary& boundary = {});
Field tilted_apply(const DispersalOperator& op, double mu, const Field& w,
                   TiltForm form = TiltForm::Continuum, const Boundary& boundary = {});

/// Moves the frame by k cells (k > 0 follows a front to the right). Overlapping
/// cells are copied verbatim; exposed cells come from the extension rules.
Field shift_window(const Field& u, int k, const Boundary& boundary = {});

constexpr double kTiltGuard = 50.0;

}  // namespace kpplab
