//! Scale-normalised energy of stationary fields, residuals of the
//! sphere-valued boundary-reaction system, and the stationary small-energy
//! experiment.

use super::cylinder_clip;
use crate::extension::{d2n_normalized, BulkOperator};
use crate::grid::{full_gradient_sq, thin_gradient_sq, ExtendedField};
use crate::nonlocal::{frac_gradient_sq_with, ThinKernel};
use crate::params::FracParam;
use crate::report::{AuditReport, ToleranceProvenance};
use crate::{Error, Result};

/// Scale-normalised half-cylinder energy
/// `r^{2s-m} int_{B_r^+(x0)} z^a |grad U|^2`.
///
/// The normalisation `r^{2s-m}` is the scale-invariant one: the integral of
/// a 0-homogeneous field grows like `r^{m-2s}`, so this exponent makes the
/// quantity constant across radii. The transposed-exponent variant is
/// available behind `paper_literal` for comparison.
pub fn psi(
    field: &ExtendedField,
    x0: &[f64],
    r: f64,
    p: &FracParam,
    paper_literal: bool,
) -> Result<f64> {
    let grid = &field.grid;
    if r > grid.zmax() {
        return Err(Error::Range(format!(
            "half-cylinder height {r} exceeds Zmax = {}",
            grid.zmax()
        )));
    }
    let clip = cylinder_clip(grid, x0, r)?;
    let grad_sq = full_gradient_sq(field);
    let mut acc = 0.0;
    for j in 1..=grid.nz() {
        let zmass = clip.z_masses[j - 1];
        if zmass == 0.0 {
            continue;
        }
        for site in 0..grid.thin.sites() {
            let sw = clip.site_weights[site];
            if sw > 0.0 {
                acc += grad_sq.get(j, site)[0] * sw * zmass;
            }
        }
    }
    let m = grid.thin.m() as f64;
    let expo = if paper_literal { m - 2.0 * p.s() } else { 2.0 * p.s() - m };
    Ok(r.powf(expo) * acc)
}

/// Residuals certifying a candidate stationary sphere-valued field:
/// interior residual of `div(z^a grad U) = 0`, boundary residual of
/// `delta_s d2n(U) = |d_s u|^2 u`, and the constraint defect `max ||u|-1|`.
pub struct StationaryResiduals {
    pub bulk: f64,
    pub boundary: f64,
    pub constraint: f64,
}

pub fn fhm_residual(field: &ExtendedField, p: &FracParam) -> Result<StationaryResiduals> {
    field.assert_finite()?;
    let grid = &field.grid;
    let sites = grid.thin.sites();
    let nz = grid.nz();
    let hm = grid.thin.cell_volume();

    // Interior divergence residual: apply the homogeneous operator rows on
    // cells away from both vertical boundaries, normalised per unit mass.
    let op = BulkOperator::new(grid, false, false, 0.0, 1.0);
    let mut cells = vec![0.0; op.len()];
    let mut out = vec![0.0; op.len()];
    let mut bulk_sq = 0.0;
    for comp in 0..field.ell {
        for j in 1..=nz {
            for site in 0..sites {
                cells[op.idx(j, site)] = field.get(j, site)[comp];
            }
        }
        op.apply(&cells, &mut out);
        for j in 2..nz {
            let mj = grid.cell_mass(j);
            for site in 0..sites {
                let r = out[op.idx(j, site)] / mj;
                bulk_sq += r * r * mj * hm;
            }
        }
    }
    let bulk = bulk_sq.sqrt();

    // Boundary residual against the kernel-sum gradient density.
    let trace = field.trace();
    let kernel = ThinKernel::new(&grid.thin, p);
    let dsu = frac_gradient_sq_with(&kernel, &trace);
    let flux = d2n_normalized(field, p);
    let mut boundary_sq = 0.0;
    let mut constraint = 0.0f64;
    for site in 0..sites {
        let u = trace.get(site);
        let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        constraint = constraint.max((norm - 1.0).abs());
        for c in 0..field.ell {
            let r = flux.values[site * field.ell + c] - dsu.values[site] * u[c];
            boundary_sq += r * r * hm;
        }
    }
    Ok(StationaryResiduals {
        bulk,
        boundary: boundary_sq.sqrt(),
        constraint,
    })
}

/// Stationary small-energy experiment: given `psi(r) <= eps1`, the scaled
/// trace gradient `delta^2 r^2 sup_{B_{delta r}} |grad u|^2 / psi` must stay
/// below the configured cap.
#[allow(clippy::too_many_arguments)]
pub fn fhm_eps_regularity_experiment(
    field: &ExtendedField,
    x0: &[f64],
    r: f64,
    delta: f64,
    eps1: f64,
    p: &FracParam,
    cap: f64,
    config_hash: &str,
) -> Result<AuditReport> {
    let psi_val = psi(field, x0, r, p, false)?;
    let grid = &field.grid;
    let weights = super::spatial_clip_weights(&grid.thin, x0, delta * r)?;
    let grad = thin_gradient_sq(&field.trace());
    let mut sup = 0.0f64;
    for site in 0..grid.thin.sites() {
        if weights[site] > 0.0 {
            sup = sup.max(grad.values[site]);
        }
    }
    let premise = psi_val <= eps1;
    let c_measured = if psi_val > 0.0 {
        delta * delta * r * r * sup / psi_val
    } else {
        0.0
    };
    let residual = if premise { c_measured } else { f64::INFINITY };
    Ok(AuditReport::new(
        "fhm-eps-regularity",
        c_measured,
        cap,
        residual,
        cap,
        ToleranceProvenance::Analytic,
        config_hash,
    )
    .with_note(format!(
        "psi(r) = {psi_val:.6e} (threshold {eps1}), premise satisfied: {premise}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExtendedGrid, ThinField, ThinGrid};

    fn p(s: f64) -> FracParam {
        FracParam::new(s, 0.5, 0.3f64.min(s)).unwrap()
    }

    #[test]
    fn psi_zero_for_constants_and_quadratic_scaling() {
        let pp = p(0.7);
        let thin = ThinGrid::new(1, 16, 4.0).unwrap();
        let grid = ExtendedGrid::new(thin, 16, 1.0, &pp).unwrap();
        let c = ExtendedField::constant(&grid, &[0.3, 0.4]);
        assert_eq!(psi(&c, &[2.0], 0.5, &pp, false).unwrap(), 0.0);
        let f = ExtendedField::from_fn(&grid, 1, |x, z| {
            vec![((x[0] - 2.0) * 0.8).sin() + 0.5 * z]
        });
        let a = psi(&f, &[2.0], 0.5, &pp, false).unwrap();
        let b = psi(&f.scaled(3.0), &[2.0], 0.5, &pp, false).unwrap();
        assert!((b - 9.0 * a).abs() < 1e-10 * b);
        assert!(psi(&f, &[2.0], 1.5, &pp, false).is_err(), "taller than Zmax");
    }

    #[test]
    fn psi_scale_invariant_on_homogeneous_fields() {
        // 0-homogeneous field about the center: psi must be r-independent.
        // The local energy of such fields is finite only for s < 1/2 at
        // m = 1 (the weight exponent a must be positive), so the check runs
        // there; the masked construction lives in the harmonic module.
        let pp = p(0.4);
        let thin = ThinGrid::new(1, 256, 4.0).unwrap();
        let grid = ExtendedGrid::new(thin, 128, 2.0, &pp).unwrap();
        let x0 = 2.0;
        let f = ExtendedField::from_fn(&grid, 1, |x, z| {
            let theta = z.atan2(x[0] - x0);
            vec![(2.0 * theta).cos()]
        });
        let vals: Vec<f64> = [0.4, 0.8, 1.6]
            .iter()
            .map(|&r| psi(&f, &[x0], r, &pp, false).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(
                ((w[1] - w[0]) / w[0]).abs() < 0.02,
                "psi not scale-invariant: {vals:?}"
            );
        }
        // The transposed-exponent variant differs by r^{2(m-2s)}.
        let lit = psi(&f, &[x0], 0.4, &pp, true).unwrap();
        let expect = vals[0] * 0.4f64.powf(2.0 * (1.0 - 2.0 * pp.s()));
        assert!((lit - expect).abs() < 1e-10 * lit.abs().max(1.0));
    }

    #[test]
    fn fhm_residual_vanishes_on_constants() {
        let pp = p(0.5);
        let thin = ThinGrid::new(1, 16, 1.0).unwrap();
        let grid = ExtendedGrid::new(thin, 12, 1.0, &pp).unwrap();
        let c = ExtendedField::constant(&grid, &[0.6, 0.8]);
        let res = fhm_residual(&c, &pp).unwrap();
        assert!(res.bulk < 1e-12);
        assert!(res.boundary < 1e-12);
        assert!(res.constraint < 1e-12);
    }

    #[test]
    fn winding_map_is_nearly_critical_and_random_map_is_not() {
        // The degree-one winding map is a stationary sphere-valued state of
        // the periodic problem: its boundary residual must be far below a
        // generic smooth competitor's.
        let pp = p(0.5);
        let thin = ThinGrid::new(1, 64, 1.0).unwrap();
        let grid = ExtendedGrid::new_graded(thin.clone(), 64, 1.0, &pp, 3.0).unwrap();
        let winding = ThinField::from_fn(&thin, 2, |x| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            vec![t.cos(), t.sin()]
        });
        let ext = crate::extension::solve_extension(&winding, &grid, &pp).unwrap();
        let res = fhm_residual(&ext, &pp).unwrap();
        assert!(res.constraint < 1e-12);
        // Non-critical control: same norm structure, skewed phase.
        let skew = ThinField::from_fn(&thin, 2, |x| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            let phase = t + 0.8 * (2.0 * t).sin();
            vec![phase.cos(), phase.sin()]
        });
        let ext2 = crate::extension::solve_extension(&skew, &grid, &pp).unwrap();
        let res2 = fhm_residual(&ext2, &pp).unwrap();
        assert!(
            res.boundary < 0.1 * res2.boundary,
            "winding {} vs skew {}",
            res.boundary,
            res2.boundary
        );
        // The winding residual shrinks under refinement.
        let thin_f = ThinGrid::new(1, 128, 1.0).unwrap();
        let grid_f = ExtendedGrid::new_graded(thin_f.clone(), 128, 1.0, &pp, 3.0).unwrap();
        let winding_f = ThinField::from_fn(&thin_f, 2, |x| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            vec![t.cos(), t.sin()]
        });
        let ext_f = crate::extension::solve_extension(&winding_f, &grid_f, &pp).unwrap();
        let res_f = fhm_residual(&ext_f, &pp).unwrap();
        assert!(
            res_f.boundary < res.boundary,
            "coarse {} fine {}",
            res.boundary,
            res_f.boundary
        );
    }
}
