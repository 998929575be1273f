// spectral.hpp
// Exact diagonalisation of the discrete Laplacian: DCT-II for NoFlux grids,
// separable real (halfcomplex) DFT for periodic ones. Used for the inverse
// Laplacian, the elliptic smoothing of initial data and preconditioning.

#pragma once

#include "nlch/grid.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace nlch {

namespace detail {

inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_real(n)), size(n)
    {
        if (!ptr)
            throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;

    double* ptr;
    std::size_t size;
};

} // namespace detail

/// Eigen-decomposition of -laplacian() on one Domain. Plans are created once
/// and shared; execution is reentrant.
class SpectralBasis {
public:
    explicit SpectralBasis(const Domain& dom) : dom_(dom), eig_(dom.size())
    {
        const int rank = dom.dim();
        int n[3];
        fftw_r2r_kind fwd[3], bwd[3];
        scale_ = 1.0;
        for (int d = 0; d < rank; ++d) {
            n[d] = dom.cells(d);
            if (dom.bc() == Boundary::NoFlux) {
                fwd[d] = FFTW_REDFT10;
                bwd[d] = FFTW_REDFT01;
                scale_ *= 2.0 * n[d];
            } else {
                fwd[d] = FFTW_R2HC;
                bwd[d] = FFTW_HC2R;
                scale_ *= n[d];
            }
        }
        detail::FftwBuffer a(dom.size()), b(dom.size());
        {
            std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
            forward_ = fftw_plan_r2r(rank, n, a.ptr, b.ptr, fwd, FFTW_ESTIMATE);
            backward_ = fftw_plan_r2r(rank, n, a.ptr, b.ptr, bwd, FFTW_ESTIMATE);
        }
        if (!forward_ || !backward_)
            throw std::runtime_error("SpectralBasis: FFTW planning failed");

        std::array<std::vector<double>, 3> axis_eig;
        for (int d = 0; d < 3; ++d) {
            const int m = dom.cells(d);
            axis_eig[d].assign(m, 0.0);
            if (d >= rank)
                continue;
            const double h = dom.spacing(d);
            for (int k = 0; k < m; ++k) {
                double arg;
                if (dom.bc() == Boundary::NoFlux) {
                    arg = M_PI * k / (2.0 * m);
                } else {
                    const int freq = (k <= m / 2) ? k : m - k;
                    arg = M_PI * freq / m;
                }
                const double s = std::sin(arg);
                axis_eig[d][k] = 4.0 * s * s / (h * h);
            }
        }
        detail::for_each_cell(dom, [&](std::size_t idx, const std::array<int, 3>& ijk) {
            eig_[idx] = axis_eig[0][ijk[0]] + axis_eig[1][ijk[1]] + axis_eig[2][ijk[2]];
        });
    }

    ~SpectralBasis()
    {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    SpectralBasis(const SpectralBasis&) = delete;
    SpectralBasis& operator=(const SpectralBasis&) = delete;

    /// Shared instance for a domain.
    static std::shared_ptr<const SpectralBasis> of(const Domain& dom)
    {
        using Key = std::tuple<int, std::array<int, 3>, std::array<double, 3>, int>;
        static std::mutex m;
        static std::map<Key, std::shared_ptr<const SpectralBasis>> cache;
        const Key key{dom.dim(), dom.cells(), dom.lengths(), static_cast<int>(dom.bc())};
        std::lock_guard<std::mutex> lock(m);
        auto it = cache.find(key);
        if (it != cache.end())
            return it->second;
        auto basis = std::make_shared<const SpectralBasis>(dom);
        cache.emplace(key, basis);
        return basis;
    }

    const Domain& domain() const { return dom_; }

    /// Eigenvalues of -laplacian(), one per coefficient; entry 0 is the mean mode.
    const std::vector<double>& eigenvalues() const { return eig_; }

    /// Coefficients in the (unnormalised) transform basis.
    std::vector<double> forward(const Field& f) const
    {
        detail::FftwBuffer in(f.size()), out(f.size());
        std::copy(f.values().begin(), f.values().end(), in.ptr);
        fftw_execute_r2r(forward_, in.ptr, out.ptr);
        return std::vector<double>(out.ptr, out.ptr + f.size());
    }

    /// Inverse of forward(), including normalisation.
    Field backward(const std::vector<double>& coeffs) const
    {
        detail::FftwBuffer in(coeffs.size()), out(coeffs.size());
        std::copy(coeffs.begin(), coeffs.end(), in.ptr);
        fftw_execute_r2r(backward_, in.ptr, out.ptr);
        Field f(dom_);
        const double inv = 1.0 / scale_;
        for (std::size_t n = 0; n < f.size(); ++n)
            f[n] = out.ptr[n] * inv;
        return f;
    }

    /// Applies the operator with symbol `mult(mu)`, mu the -laplacian eigenvalue.
    template <class Mult>
    Field apply(const Field& f, Mult&& mult) const
    {
        auto c = forward(f);
        for (std::size_t n = 0; n < c.size(); ++n)
            c[n] *= mult(eig_[n], n);
        return backward(c);
    }

private:
    Domain dom_;
    std::vector<double> eig_;
    double scale_ = 1.0;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

inline void require_mean_zero(const Field& f, const char* who)
{
    const double m = mean(f);
    if (std::abs(m) > 1e-12 * f.max_abs())
        throw NonZeroMean(std::string(who) + ": input has non-zero mean " + std::to_string(m));
}

/// Mean-zero v with -laplacian(v) = f.
inline Field inv_laplacian_meanzero(const Field& f)
{
    require_mean_zero(f, "inv_laplacian_meanzero");
    auto basis = SpectralBasis::of(f.domain());
    return basis->apply(f, [](double mu, std::size_t n) { return n == 0 ? 0.0 : 1.0 / mu; });
}

/// Dual norm sqrt(<f, (-Delta)^-1 f>) on mean-zero data.
inline double norm_hm1(const Field& f)
{
    require_mean_zero(f, "norm_hm1");
    const Field v = inv_laplacian_meanzero(f);
    return std::sqrt(std::max(0.0, inner(f, v)));
}

} // namespace nlch
