// grid.hpp
// Structured cell-centred grids, grid functions and the discrete operators
// used by the Cahn-Hilliard solvers.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlch {

enum class Boundary { NoFlux, Periodic };

/// Raised by the H^-1 machinery when the input carries mass.
struct NonZeroMean : std::domain_error {
    using std::domain_error::domain_error;
};

/// Uniform tensor-product box split into cells. Values live at cell centres.
/// NoFlux faces use even reflection of the first interior cell, so the
/// discrete normal derivative of every field (and of its Laplacian) vanishes.
class Domain {
public:
    Domain() = default;

    Domain(int dim, std::array<int, 3> cells, std::array<double, 3> lengths, Boundary bc)
        : dim_(dim), cells_(cells), lengths_(lengths), bc_(bc)
    {
        if (dim < 1 || dim > 3)
            throw std::invalid_argument("Domain: dim must be 1, 2 or 3");
        for (int d = 0; d < 3; ++d) {
            if (d >= dim) {
                cells_[d] = 1;
                lengths_[d] = 1.0;
                continue;
            }
            if (cells_[d] < 4)
                throw std::invalid_argument("Domain: at least 4 cells per axis required");
            if (!(lengths_[d] > 0.0) || !std::isfinite(lengths_[d]))
                throw std::invalid_argument("Domain: lengths must be positive and finite");
        }
        for (int d = 0; d < 3; ++d)
            spacing_[d] = lengths_[d] / cells_[d];
        strides_[2] = 1;
        strides_[1] = static_cast<std::size_t>(cells_[2]);
        strides_[0] = strides_[1] * static_cast<std::size_t>(cells_[1]);
    }

    static Domain line(int n, double length = 1.0, Boundary bc = Boundary::NoFlux)
    {
        return Domain(1, {n, 1, 1}, {length, 1.0, 1.0}, bc);
    }

    static Domain square(int n, double length = 1.0, Boundary bc = Boundary::NoFlux)
    {
        return Domain(2, {n, n, 1}, {length, length, 1.0}, bc);
    }

    static Domain cube(int n, double length = 1.0, Boundary bc = Boundary::NoFlux)
    {
        return Domain(3, {n, n, n}, {length, length, length}, bc);
    }

    int dim() const { return dim_; }
    Boundary bc() const { return bc_; }
    int cells(int axis) const { return cells_[axis]; }
    double length(int axis) const { return lengths_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    const std::array<int, 3>& cells() const { return cells_; }
    const std::array<double, 3>& lengths() const { return lengths_; }
    std::size_t stride(int axis) const { return strides_[axis]; }

    std::size_t size() const
    {
        return static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2];
    }

    double cell_volume() const
    {
        double v = 1.0;
        for (int d = 0; d < dim_; ++d)
            v *= spacing_[d];
        return v;
    }

    double volume() const
    {
        double v = 1.0;
        for (int d = 0; d < dim_; ++d)
            v *= lengths_[d];
        return v;
    }

    double min_spacing() const
    {
        double h = spacing_[0];
        for (int d = 1; d < dim_; ++d)
            h = std::min(h, spacing_[d]);
        return h;
    }

    /// Cell-centre coordinate along an axis.
    double centre(int axis, int i) const { return (i + 0.5) * spacing_[axis]; }

    std::array<int, 3> unflatten(std::size_t n) const
    {
        std::array<int, 3> idx{};
        idx[0] = static_cast<int>(n / strides_[0]);
        n %= strides_[0];
        idx[1] = static_cast<int>(n / strides_[1]);
        idx[2] = static_cast<int>(n % strides_[1]);
        return idx;
    }

    /// Linear index of the neighbour at offset `shift` along `axis`, with
    /// mirror ghosts (NoFlux) or wrap-around (Periodic).
    std::size_t neighbour(std::size_t n, int i, int axis, int shift) const
    {
        const int m = cells_[axis];
        int j = i + shift;
        if (bc_ == Boundary::Periodic) {
            j = ((j % m) + m) % m;
        } else {
            // even reflection about the face: ghost -1 -> 0, -2 -> 1, m -> m-1
            while (j < 0 || j >= m) {
                if (j < 0)
                    j = -1 - j;
                if (j >= m)
                    j = 2 * m - 1 - j;
            }
        }
        return n + static_cast<std::size_t>(j - i) * strides_[axis];
    }

    bool operator==(const Domain& o) const
    {
        return dim_ == o.dim_ && cells_ == o.cells_ && lengths_ == o.lengths_ && bc_ == o.bc_;
    }
    bool operator!=(const Domain& o) const { return !(*this == o); }

private:
    int dim_ = 1;
    std::array<int, 3> cells_{4, 1, 1};
    std::array<double, 3> lengths_{1.0, 1.0, 1.0};
    std::array<double, 3> spacing_{0.25, 1.0, 1.0};
    std::array<std::size_t, 3> strides_{1, 1, 1};
    Boundary bc_ = Boundary::NoFlux;
};

/// Scalar grid function, one value per cell, row-major (axis 0 slowest).
class Field {
public:
    Field() = default;
    explicit Field(const Domain& domain, double value = 0.0)
        : domain_(domain), values_(domain.size(), value)
    {
    }
    Field(const Domain& domain, std::vector<double> values)
        : domain_(domain), values_(std::move(values))
    {
        if (values_.size() != domain_.size())
            throw std::invalid_argument("Field: value count does not match domain");
    }

    /// Samples fn(x, y, z) at cell centres.
    template <class Fn>
    static Field from_function(const Domain& domain, Fn&& fn)
    {
        Field f(domain);
        for (std::size_t n = 0; n < f.size(); ++n) {
            const auto idx = domain.unflatten(n);
            f[n] = fn(domain.centre(0, idx[0]), domain.centre(1, idx[1]), domain.centre(2, idx[2]));
        }
        return f;
    }

    const Domain& domain() const { return domain_; }
    std::size_t size() const { return values_.size(); }
    double& operator[](std::size_t n) { return values_[n]; }
    double operator[](std::size_t n) const { return values_[n]; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool all_finite() const
    {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    template <class Fn>
    Field map(Fn&& fn) const
    {
        Field out(domain_);
        for (std::size_t n = 0; n < size(); ++n)
            out[n] = fn(values_[n]);
        return out;
    }

    Field& operator+=(const Field& o)
    {
        check_same(o);
        for (std::size_t n = 0; n < size(); ++n)
            values_[n] += o.values_[n];
        return *this;
    }
    Field& operator-=(const Field& o)
    {
        check_same(o);
        for (std::size_t n = 0; n < size(); ++n)
            values_[n] -= o.values_[n];
        return *this;
    }
    Field& operator*=(double s)
    {
        for (double& v : values_)
            v *= s;
        return *this;
    }
    Field& operator+=(double s)
    {
        for (double& v : values_)
            v += s;
        return *this;
    }

    /// this += s * o
    Field& axpy(double s, const Field& o)
    {
        check_same(o);
        for (std::size_t n = 0; n < size(); ++n)
            values_[n] += s * o.values_[n];
        return *this;
    }

    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double s, Field a) { return a *= s; }
    friend Field operator*(Field a, double s) { return a *= s; }

    /// Pointwise product.
    friend Field operator*(const Field& a, const Field& b)
    {
        a.check_same(b);
        Field out(a.domain_);
        for (std::size_t n = 0; n < a.size(); ++n)
            out[n] = a[n] * b[n];
        return out;
    }

private:
    void check_same(const Field& o) const
    {
        if (o.domain_ != domain_)
            throw std::invalid_argument("Field: operands live on different domains");
    }

    Domain domain_;
    std::vector<double> values_;
};

namespace detail {

/// Visits every cell with its per-axis index.
template <class Fn>
void for_each_cell(const Domain& dom, Fn&& fn)
{
    std::size_t n = 0;
    for (int i = 0; i < dom.cells(0); ++i)
        for (int j = 0; j < dom.cells(1); ++j)
            for (int k = 0; k < dom.cells(2); ++k, ++n)
                fn(n, std::array<int, 3>{i, j, k});
}

} // namespace detail

/// Returns Delta f with the compact 3/5/7-point stencil.
inline Field laplacian(const Field& f)
{
    const Domain& dom = f.domain();
    Field out(dom);
    detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
        double acc = 0.0;
        for (int d = 0; d < dom.dim(); ++d) {
            const double ih2 = 1.0 / (dom.spacing(d) * dom.spacing(d));
            const double lo = f[dom.neighbour(n, idx[d], d, -1)];
            const double hi = f[dom.neighbour(n, idx[d], d, +1)];
            acc += (lo - 2.0 * f[n] + hi) * ih2;
        }
        out[n] = acc;
    });
    return out;
}

/// Delta^2 f. The intermediate Laplacian is mirrored as well, which is the
/// discrete form of d_n(Delta u) = 0.
inline Field biharmonic(const Field& f)
{
    return laplacian(laplacian(f));
}

/// Centred partial derivative along one axis.
inline Field partial(const Field& f, int axis)
{
    const Domain& dom = f.domain();
    Field out(dom);
    const double inv = 0.5 / dom.spacing(axis);
    detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
        out[n] = (f[dom.neighbour(n, idx[axis], axis, +1)] - f[dom.neighbour(n, idx[axis], axis, -1)]) * inv;
    });
    return out;
}

/// Sum over axes of the squared centred derivative.
inline Field grad_sq(const Field& f)
{
    const Domain& dom = f.domain();
    Field out(dom);
    for (int d = 0; d < dom.dim(); ++d) {
        const Field p = partial(f, d);
        for (std::size_t n = 0; n < out.size(); ++n)
            out[n] += p[n] * p[n];
    }
    return out;
}

/// Second partial derivative d^2 f / dx_a dx_b. Diagonal entries use the
/// compact stencil (they add up to laplacian()); mixed ones are centred.
inline Field second_partial(const Field& f, int a, int b)
{
    const Domain& dom = f.domain();
    Field out(dom);
    if (a == b) {
        const double ih2 = 1.0 / (dom.spacing(a) * dom.spacing(a));
        detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
            out[n] = (f[dom.neighbour(n, idx[a], a, -1)] - 2.0 * f[n] + f[dom.neighbour(n, idx[a], a, +1)]) * ih2;
        });
        return out;
    }
    const double scale = 0.25 / (dom.spacing(a) * dom.spacing(b));
    detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
        double acc = 0.0;
        for (int sa : {-1, 1}) {
            const std::size_t na = dom.neighbour(n, idx[a], a, sa);
            for (int sb : {-1, 1})
                acc += sa * sb * f[dom.neighbour(na, idx[b], b, sb)];
        }
        out[n] = acc * scale;
    });
    return out;
}

/// Midpoint quadrature.
inline double integrate(const Field& f)
{
    double s = 0.0;
    for (double v : f.values())
        s += v;
    return s * f.domain().cell_volume();
}

inline double mean(const Field& f)
{
    return integrate(f) / f.domain().volume();
}

inline double inner(const Field& f, const Field& g)
{
    double s = 0.0;
    for (std::size_t n = 0; n < f.size(); ++n)
        s += f[n] * g[n];
    return s * f.domain().cell_volume();
}

inline double norm_l2(const Field& f)
{
    return std::sqrt(inner(f, f));
}

/// Sum of squared face differences; equals -<f, laplacian(f)> exactly.
inline double face_gradient_energy(const Field& f)
{
    const Domain& dom = f.domain();
    double s = 0.0;
    detail::for_each_cell(dom, [&](std::size_t n, const std::array<int, 3>& idx) {
        for (int d = 0; d < dom.dim(); ++d) {
            // NoFlux: the last face on each axis is the mirrored one (zero jump)
            if (dom.bc() == Boundary::NoFlux && idx[d] == dom.cells(d) - 1)
                continue;
            const double diff = (f[dom.neighbour(n, idx[d], d, +1)] - f[n]) / dom.spacing(d);
            s += diff * diff;
        }
    });
    return s * dom.cell_volume();
}

/// Discrete H^1 seminorm ||grad f|| built from face differences.
inline double seminorm_h1(const Field& f)
{
    return std::sqrt(face_gradient_energy(f));
}

} // namespace nlch
