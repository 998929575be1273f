// records.hpp
// Per-time observables recorded along a trajectory.

#pragma once

#include "nlch/model.hpp"

#include <cstdio>
#include <optional>
#include <ostream>

namespace nlch {

struct DiagnosticsRecord {
    double t = 0.0;
    double energy = 0.0;
    double mass = 0.0;       // mean of u
    double grad_w_sq = 0.0;  // ||grad w||^2
    double ut_sq = 0.0;      // ||u_t||^2, backward difference (0 at the first record)
    double sup_u = 0.0;
    double overshoot = 0.0;  // max(|u| - 1, 0)
    double z_h2_proxy = 0.0; // ||Delta phi(u)||^2
    int newton_iters = 0;
    double tau = 0.0;
    double w_sq = 0.0;       // ||w||^2, enters the phase-field energy balance
};

struct DiagnosticsSeries {
    std::vector<DiagnosticsRecord> records;
    double mobility = 1.0;
    double viscosity = 0.0;
    double sigma_pf = 0.0;
};

inline DiagnosticsRecord make_record(const SimState& s, const Field* u_prev, double tau_used, const ModelParams& p,
                                     const PotentialSpec& pot, int newton_iters)
{
    DiagnosticsRecord r;
    r.t = s.t;
    r.energy = energy(s.u, p.delta, pot, p.coefficient);
    r.mass = mean(s.u);
    r.grad_w_sq = face_gradient_energy(s.w);
    if (u_prev && tau_used > 0.0) {
        Field ut = s.u - *u_prev;
        ut *= 1.0 / tau_used;
        r.ut_sq = inner(ut, ut);
    }
    r.sup_u = s.u.max_abs();
    r.overshoot = std::max(r.sup_u - 1.0, 0.0);
    const Field lapz = laplacian(phi_field(s.u, p.coefficient));
    r.z_h2_proxy = inner(lapz, lapz);
    r.newton_iters = newton_iters;
    r.tau = tau_used;
    r.w_sq = inner(s.w, s.w);
    return r;
}

/// Column order of diagnostics.csv.
inline constexpr const char* diagnostics_csv_header =
    "t,energy,mass,grad_w_sq,ut_sq,sup_u,overshoot,z_h2_proxy,newton_iters,tau";

inline void write_diagnostics_csv(std::ostream& os, const DiagnosticsSeries& series)
{
    os << diagnostics_csv_header << '\n';
    char buf[512];
    for (const auto& r : series.records) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", r.t, r.energy,
                      r.mass, r.grad_w_sq, r.ut_sq, r.sup_u, r.overshoot, r.z_h2_proxy, r.newton_iters, r.tau);
        os << buf;
    }
}

} // namespace nlch
