//! Empirical constant sweeps: the integral-to-pointwise bound for
//! nonnegative subsolutions of the weighted heat operator with a linear
//! boundary gain, and the weighted trace inequality.

use super::cylinder_clip;
use crate::extension::CapCondition;
use crate::flow::{step_with_reaction, FlowConfig};
use crate::grid::{full_gradient_sq, ExtendedField, ExtendedGrid, ThinGrid, Trajectory};
use crate::params::FracParam;
use crate::report::{AuditReport, ToleranceProvenance};
use crate::{Error, Result};

/// One catalog member: nonnegative initial data plus a boundary gain.
#[derive(Debug, Clone)]
pub struct HarnackInstance {
    /// Bump amplitude, width and offset of the initial profile
    /// `base + amp exp(-d^2 / width^2)` around the cylinder center.
    pub amp: f64,
    pub width: f64,
    pub offset: f64,
    pub base: f64,
    /// Linear boundary gain `C0` in `-d_z^a f = C0 f`.
    pub c0: f64,
}

impl HarnackInstance {
    pub fn catalog() -> Vec<Self> {
        let mut out = Vec::new();
        for (amp, width, offset, base) in [
            (0.0, 1.0, 0.0, 1.0),
            (1.0, 0.6, 0.0, 0.1),
            (1.0, 0.3, 0.0, 0.1),
            (1.0, 0.12, 0.0, 0.05),
            (2.0, 0.12, 0.0, 0.0),
            (1.0, 0.4, 0.5, 0.2),
            (1.0, 0.2, -0.8, 0.3),
        ] {
            out.push(Self {
                amp,
                width,
                offset,
                base,
                c0: 0.0,
            });
        }
        for (amp, width, c0) in [(1.0, 0.4, 1.0), (1.0, 0.15, 1.0), (0.5, 0.25, 2.0)] {
            out.push(Self {
                amp,
                width,
                offset: 0.0,
                base: 0.1,
                c0,
            });
        }
        out
    }
}

/// Runs the linear weighted heat flow with boundary gain `c0` from the
/// instance data over `t` in `(-1, 1)` and measures
/// `C_emp = f(0, 0) / int_{P_1^+} z^a f`.
pub fn harnack_constant(
    instance: &HarnackInstance,
    p: &FracParam,
    n: usize,
    nz: usize,
    dt: f64,
) -> Result<f64> {
    let length = 4.0;
    let thin = ThinGrid::new(1, n, length)?;
    let grid = ExtendedGrid::new(thin.clone(), nz, 1.0, p)?;
    let x_center = 0.5 * length;
    let f0 = ExtendedField::from_fn(&grid, 1, |x, _z| {
        let d = {
            let mut d = (x[0] - x_center - instance.offset) % length;
            if d < -0.5 * length {
                d += length;
            }
            if d >= 0.5 * length {
                d -= length;
            }
            d
        };
        vec![instance.base + instance.amp * (-d * d / (instance.width * instance.width)).exp()]
    });
    let steps = (2.0 / dt).round() as usize;
    let cfg = FlowConfig {
        p: *p,
        dt,
        t_final: 2.0,
        theta: 1.0,
        cap: CapCondition::Neumann,
    };
    let c0 = instance.c0;
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(f0.clone());
    let mut current = f0;
    for _ in 0..steps {
        current = step_with_reaction(&current, &cfg, |trace, ell, out| {
            for (i, t) in trace.iter().enumerate() {
                let _ = ell;
                out[i] = c0 * t;
            }
        })?;
        frames.push(current.clone());
    }
    let traj = Trajectory::new(frames, dt, -1.0)?;

    // Pointwise value at the space-time center: site n/2 sits at x = L/2
    // exactly, and t = 0 is frame steps/2.
    let center_site = n / 2;
    let center_frame = steps / 2;
    let f_center = traj.frames[center_frame].get(0, center_site)[0];

    // Weighted cylinder integral with exact cell clipping.
    let clip = cylinder_clip(&grid, &[x_center], 1.0)?;
    let mut integral = 0.0;
    for (k, w_t) in super::slab_frames(&traj, -1.0, 1.0) {
        let frame = &traj.frames[k];
        for j in 1..=grid.nz() {
            let zm = clip.z_masses[j - 1];
            if zm == 0.0 {
                continue;
            }
            for site in 0..thin.sites() {
                let sw = clip.site_weights[site];
                if sw > 0.0 {
                    integral += w_t * frame.get(j, site)[0] * sw * zm;
                }
            }
        }
    }
    if integral <= 0.0 {
        return Err(Error::Domain("subsolution has nonpositive cylinder mass".into()));
    }
    Ok(f_center / integral)
}

/// Sweep of the empirical integral-to-pointwise constant over a catalog of
/// discrete subsolutions, per `s`; passes when the maximum is below one cap
/// across the whole sweep.
#[allow(clippy::too_many_arguments)]
pub fn harnack_constant_sweep(
    s_values: &[f64],
    s0: f64,
    catalog: &[HarnackInstance],
    n: usize,
    nz: usize,
    dt: f64,
    cap: f64,
    config_hash: &str,
) -> Result<AuditReport> {
    let mut per_s = Vec::new();
    let mut overall = 0.0f64;
    for &s in s_values {
        let p = FracParam::new(s, 1.0, s0)?;
        let mut worst = 0.0f64;
        for instance in catalog {
            worst = worst.max(harnack_constant(instance, &p, n, nz, dt)?);
        }
        overall = overall.max(worst);
        per_s.push((s, worst));
    }
    Ok(AuditReport::new(
        "harnack-sweep",
        overall,
        cap,
        overall,
        cap,
        ToleranceProvenance::Analytic,
        config_hash,
    )
    .with_per_s(per_s)
    .with_note(format!("catalog size {}", catalog.len())))
}

/// Minimal constant making
/// `int_{B_R} w^2 <= C eps R^{2s} int z^a |grad w|^2
///  + C eps^{-1} R^{-2(1-s)} int z^a w^2`
/// hold for one sample field.
pub fn trace_constant(
    field: &ExtendedField,
    x0: &[f64],
    r: f64,
    eps_param: f64,
    p: &FracParam,
) -> Result<f64> {
    let grid = &field.grid;
    let clip = cylinder_clip(grid, x0, r)?;
    let trace = field.trace();
    let mut thin_sq = 0.0;
    for site in 0..grid.thin.sites() {
        let sw = clip.site_weights[site];
        if sw > 0.0 {
            let w2: f64 = trace.get(site).iter().map(|v| v * v).sum();
            thin_sq += w2 * sw;
        }
    }
    let grad_sq = full_gradient_sq(field);
    let mut grad_term = 0.0;
    let mut mass_term = 0.0;
    for j in 1..=grid.nz() {
        let zm = clip.z_masses[j - 1];
        if zm == 0.0 {
            continue;
        }
        for site in 0..grid.thin.sites() {
            let sw = clip.site_weights[site];
            if sw > 0.0 {
                grad_term += grad_sq.get(j, site)[0] * sw * zm;
                let w2: f64 = field.get(j, site).iter().map(|v| v * v).sum();
                mass_term += w2 * sw * zm;
            }
        }
    }
    let s = p.s();
    let denom = eps_param * r.powf(2.0 * s) * grad_term
        + r.powf(-2.0 * (1.0 - s)) / eps_param * mass_term;
    if denom <= 0.0 {
        return Err(Error::Domain("degenerate trace-inequality sample".into()));
    }
    Ok(thin_sq / denom)
}

/// Sweep of the minimal trace-inequality constant over sample fields and
/// the `s` grid; passes when the maximum stays under one cap.
#[allow(clippy::too_many_arguments)]
pub fn trace_inequality_audit(
    s_values: &[f64],
    s0: f64,
    eps_param: f64,
    r: f64,
    n: usize,
    nz: usize,
    cap: f64,
    config_hash: &str,
) -> Result<AuditReport> {
    let length = 4.0;
    let x0 = [0.5 * length];
    let mut per_s = Vec::new();
    let mut overall = 0.0f64;
    for &s in s_values {
        let p = FracParam::new(s, 1.0, s0)?;
        let thin = ThinGrid::new(1, n, length)?;
        let grid = ExtendedGrid::new(thin.clone(), nz, 1.0, &p)?;
        let samples: Vec<ExtendedField> = vec![
            ExtendedField::constant(&grid, &[1.0]),
            // Boundary-concentrated graded profile.
            ExtendedField::from_fn(&grid, 1, |_, z| vec![1.0 - z.powf(2.0 * s).min(1.0)]),
            ExtendedField::from_fn(&grid, 1, |x, z| {
                vec![((x[0] - x0[0]) * 1.5).cos() * (-2.0 * z).exp()]
            }),
            ExtendedField::from_fn(&grid, 1, |x, z| {
                let d = x[0] - x0[0];
                vec![(-d * d / 0.09).exp() * (1.0 - z).max(0.0)]
            }),
        ];
        let mut worst = 0.0f64;
        for w in &samples {
            worst = worst.max(trace_constant(w, &x0, r, eps_param, &p)?);
        }
        overall = overall.max(worst);
        per_s.push((s, worst));
    }
    Ok(AuditReport::new(
        "trace-inequality",
        overall,
        cap,
        overall,
        cap,
        ToleranceProvenance::Analytic,
        config_hash,
    )
    .with_per_s(per_s))
}
