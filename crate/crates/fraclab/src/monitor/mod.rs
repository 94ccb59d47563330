//! Monotone quantities, differential-inequality audits, barrier bounds and
//! empirical constant sweeps, reported as [`crate::AuditReport`]s.
//!
//! Geometric conventions, recorded here once: parabolic cylinders use the
//! product form `P_r^+ = {|x - x0|_inf < r} x (0, r) x {|t - t0| < r^2}` on
//! every audit, and half balls `B_r^+` use the same product form without
//! the time factor. Spatial and vertical cell clipping against these boxes
//! is exact (per-axis closed form), so constants integrate exactly.
//! Gaussian weights are periodised over the torus images within the
//! truncation radius of the core module.

pub mod appendix;
pub mod barriers;
pub mod parabolic;
pub mod stationary;

pub use appendix::{harnack_constant_sweep, trace_inequality_audit, HarnackInstance};
pub use barriers::{barrier_eta_audit, barrier_h_audit};
pub use parabolic::{
    clearing_out_experiment, eps_regularity_experiment, local_energy_bound_audit, phi,
    phi_monotonicity_audit, potential_bound_audit, remainder_identity_audit,
    time_derivative_bound_audit,
};
pub use stationary::{fhm_eps_regularity_experiment, fhm_residual, psi};

use crate::grid::{ExtendedField, ThinGrid, Trajectory};
use crate::params::{FracParam, GaussianCenter};
use crate::special::{gamma_pos, gaussian_truncation_radius};
use crate::{Error, Result};

/// Per-axis image sum of the Gaussian factor `exp(-(dx + kL)^2 / 4 tau)`
/// within the truncation radius.
pub(crate) fn axis_image_sum(dx: f64, length: f64, tau: f64) -> f64 {
    let radius = gaussian_truncation_radius(tau);
    let k_lo = ((-radius - dx) / length).floor() as isize;
    let k_hi = ((radius - dx) / length).ceil() as isize;
    let mut acc = 0.0;
    for k in k_lo..=k_hi {
        let r = dx + k as f64 * length;
        acc += (-r * r / (4.0 * tau)).exp();
    }
    acc
}

/// Backwards fundamental solution periodised over the thin torus, evaluated
/// at displacement `dx = x - x0` (raw, per axis), height `z` and lag `tau`.
pub(crate) fn periodized_gaussian(
    p: &FracParam,
    m: usize,
    thin: &ThinGrid,
    dx: &[f64],
    z: f64,
    tau: f64,
) -> f64 {
    let pref = 1.0 / (gamma_pos(p.s()) * (4.0 * std::f64::consts::PI).powf(m as f64 / 2.0));
    let mut acc = pref * tau.powf(-(m as f64) / 2.0 - 1.0 + p.s()) * (-z * z / (4.0 * tau)).exp();
    for d in dx.iter().take(m) {
        acc *= axis_image_sum(*d, thin.length(), tau);
    }
    acc
}

/// Exact per-site overlap measure of lattice cells with the periodic box
/// `{|x - x0|_inf < r}`; the product of per-axis clipped lengths.
pub(crate) fn spatial_clip_weights(thin: &ThinGrid, x0: &[f64], r: f64) -> Result<Vec<f64>> {
    if !(2.0 * r <= thin.length()) {
        return Err(Error::Range(format!(
            "box radius {r} exceeds half the period {}",
            thin.length() / 2.0
        )));
    }
    let h = thin.h();
    let mut out = vec![0.0; thin.sites()];
    for (site, w) in out.iter_mut().enumerate() {
        let x = thin.coord(site);
        let d = thin.min_image(&x, x0);
        let mut acc = 1.0;
        for di in &d {
            let lo = (di - 0.5 * h).max(-r);
            let hi = (di + 0.5 * h).min(r);
            acc *= (hi - lo).max(0.0);
        }
        *w = acc;
    }
    Ok(out)
}

/// Length of `[t - dt/2, t + dt/2]` clipped to `(lo, hi)`.
pub(crate) fn time_clip(t: f64, dt: f64, lo: f64, hi: f64) -> f64 {
    let a = (t - 0.5 * dt).max(lo);
    let b = (t + 0.5 * dt).min(hi);
    (b - a).max(0.0)
}

/// Frames whose clipped cells intersect `(lo, hi)`, with their weights.
pub(crate) fn slab_frames(traj: &Trajectory, lo: f64, hi: f64) -> Vec<(usize, f64)> {
    (0..traj.frames.len())
        .filter_map(|k| {
            let w = time_clip(traj.time(k), traj.dt, lo, hi);
            (w > 0.0).then_some((k, w))
        })
        .collect()
}

/// Spatial and vertical clip weights of the cylinder `P_r^+` around `x0`.
pub(crate) struct CylinderClip {
    pub site_weights: Vec<f64>,
    /// `int z^a dz` of each vertical cell clipped to `z < r`, index `[j-1]`.
    pub z_masses: Vec<f64>,
}

pub(crate) fn cylinder_clip(
    field_grid: &crate::grid::ExtendedGrid,
    x0: &[f64],
    r: f64,
) -> Result<CylinderClip> {
    let site_weights = spatial_clip_weights(&field_grid.thin, x0, r)?;
    let z_masses: Vec<f64> = (1..=field_grid.nz())
        .map(|j| field_grid.cell_mass_below(j, r))
        .collect();
    Ok(CylinderClip {
        site_weights,
        z_masses,
    })
}

/// Gradient components of an extended field: `m` horizontal centered
/// derivatives plus the graded vertical derivative, each with `ell`
/// components, on layers `1..=nz`.
pub(crate) fn gradient_components(u: &ExtendedField) -> Vec<ExtendedField> {
    let grid = &u.grid;
    let sites = grid.thin.sites();
    let m = grid.thin.m();
    let inv2h = 1.0 / (2.0 * grid.thin.h());
    let mut out: Vec<ExtendedField> = (0..=m).map(|_| ExtendedField::zeros(grid, u.ell)).collect();
    for j in 1..=grid.nz() {
        for site in 0..sites {
            for axis in 0..m {
                let fwd = u.get(j, grid.thin.shift(site, axis, 1));
                let bwd = u.get(j, grid.thin.shift(site, axis, -1));
                let i = out[axis].idx(j, site);
                for c in 0..u.ell {
                    out[axis].values[i + c] = (fwd[c] - bwd[c]) * inv2h;
                }
            }
        }
    }
    // Vertical via graded centered differences, chain rule at cell centers.
    let s = grid.s();
    let nz = grid.nz();
    for j in 1..=nz {
        let z = grid.z_center(j);
        let chain = 2.0 * s * z.powf(2.0 * s - 1.0);
        let (lo, hi, gap) = if j == 1 {
            (0usize, 2, grid.zeta_center(2))
        } else if j == nz {
            (nz - 1, nz, grid.zeta_center(nz) - grid.zeta_center(nz - 1))
        } else {
            (j - 1, j + 1, grid.zeta_center(j + 1) - grid.zeta_center(j - 1))
        };
        for site in 0..sites {
            let a = u.get(lo, site);
            let b = u.get(hi, site);
            let i = out[m].idx(j, site);
            for c in 0..u.ell {
                out[m].values[i + c] = chain * (b[c] - a[c]) / gap;
            }
        }
    }
    out
}

/// Ginzburg-Landau potential density `W(u) = (1 - |u|^2)^2 / (4 eps^{2s})`
/// of the trace of a frame.
pub(crate) fn potential_density(frame: &ExtendedField, p: &FracParam) -> Vec<f64> {
    let trace = frame.trace();
    let sites = frame.grid.thin.sites();
    let inv = 1.0 / (4.0 * p.eps_2s());
    (0..sites)
        .map(|site| {
            let usq: f64 = trace.get(site).iter().map(|v| v * v).sum();
            let w = 1.0 - usq;
            w * w * inv
        })
        .collect()
}

/// Checks that a Gaussian center is admissible for a slab audit.
pub(crate) fn check_slab(traj: &Trajectory, center: &GaussianCenter, r: f64) -> Result<()> {
    let lo = center.t0 - 4.0 * r * r;
    let hi = center.t0 - r * r;
    if lo < traj.t_start - 0.5 * traj.dt || hi > traj.t_end() + 0.5 * traj.dt {
        return Err(Error::Range(format!(
            "slab ({lo:.4}, {hi:.4}) outside trajectory ({:.4}, {:.4})",
            traj.t_start,
            traj.t_end()
        )));
    }
    if !(2.0 * r < center.t0.sqrt()) {
        return Err(Error::Range(format!(
            "need 2R < sqrt(t0): R = {r}, t0 = {}",
            center.t0
        )));
    }
    Ok(())
}
