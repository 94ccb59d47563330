//! Degenerate-weight extension problem: solve `div(z^a grad U) = 0` with a
//! prescribed trace, extract the weighted Dirichlet-to-Neumann map, and
//! cross-check against the exact per-mode vertical profiles.
//!
//! In the graded coordinate the vertical part of the operator is a plain
//! uniform second difference scaled by `2s`, and the conormal flux
//! `z^a dU/dz` is the regular one-sided derivative `2s dU/dzeta` at the
//! face. The discrete system is the exact gradient of the quadratic form
//! in [`discrete_dirichlet_energy`], so solved fields are energy minimisers
//! among all fields with the same trace, up to the solver tolerance.

use crate::grid::{ExtendedField, ExtendedGrid, ThinField};
use crate::linalg::cg_solve;
use crate::params::FracParam;
use crate::special::{bessel_k, delta_s, gamma_pos};
use crate::{Error, Result};

/// Top boundary condition at `z = Zmax`.
#[derive(Debug, Clone, PartialEq)]
pub enum CapCondition {
    /// Insulated cap: zero conormal flux through the top.
    Neumann,
    /// Pinned cap value per component.
    Dirichlet(Vec<f64>),
}

/// Matrix-free apply of `mass/dt . I + theta . (-div z^a grad)` on the cell
/// unknowns (vertical layers `1..=nz`, one component at a time).
pub(crate) struct BulkOperator {
    pub sites: usize,
    pub nz: usize,
    pub m: usize,
    inv_h2: f64,
    /// Vertical transmissibility per edge `0..=nz` (0 = face, nz = cap).
    t_edge: Vec<f64>,
    mass: Vec<f64>,
    /// True when the bottom face is a Dirichlet trace; false when the flux
    /// through the face is given (reaction flows).
    pub bottom_dirichlet: bool,
    pub top_dirichlet: bool,
    /// Zero for steady problems, `1/dt` for implicit steps.
    pub mass_over_dt: f64,
    pub theta: f64,
    thin: crate::grid::ThinGrid,
}

impl BulkOperator {
    pub fn new(
        grid: &ExtendedGrid,
        bottom_dirichlet: bool,
        top_dirichlet: bool,
        mass_over_dt: f64,
        theta: f64,
    ) -> Self {
        let h = grid.thin.h();
        let mass: Vec<f64> = (1..=grid.nz()).map(|j| grid.cell_mass(j)).collect();
        let t_edge: Vec<f64> = (0..=grid.nz()).map(|e| grid.t_edge(e)).collect();
        Self {
            sites: grid.thin.sites(),
            nz: grid.nz(),
            m: grid.thin.m(),
            inv_h2: 1.0 / (h * h),
            t_edge,
            mass,
            bottom_dirichlet,
            top_dirichlet,
            mass_over_dt,
            theta,
            thin: grid.thin.clone(),
        }
    }

    #[inline]
    pub fn idx(&self, j: usize, site: usize) -> usize {
        (j - 1) * self.sites + site
    }

    pub fn len(&self) -> usize {
        self.sites * self.nz
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let th = self.theta;
        for j in 1..=self.nz {
            let mj = self.mass[j - 1];
            for site in 0..self.sites {
                let i = self.idx(j, site);
                let mut acc = self.mass_over_dt * mj * v[i];
                // Horizontal: m_j (2 v - vE - vW) / h^2 per axis.
                let mut hsum = 0.0;
                for axis in 0..self.m {
                    let e = v[self.idx(j, self.thin.shift(site, axis, 1))];
                    let w = v[self.idx(j, self.thin.shift(site, axis, -1))];
                    hsum += 2.0 * v[i] - e - w;
                }
                acc += th * mj * hsum * self.inv_h2;
                // Vertical edges.
                if j > 1 {
                    acc += th * self.t_edge[j - 1] * (v[i] - v[self.idx(j - 1, site)]);
                } else if self.bottom_dirichlet {
                    acc += th * self.t_edge[0] * v[i];
                }
                if j < self.nz {
                    acc += th * self.t_edge[j] * (v[i] - v[self.idx(j + 1, site)]);
                } else if self.top_dirichlet {
                    acc += th * self.t_edge[self.nz] * v[i];
                }
                out[i] = acc;
            }
        }
    }

    /// Reciprocal diagonal for Jacobi preconditioning.
    pub fn inv_diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        for j in 1..=self.nz {
            let mj = self.mass[j - 1];
            let mut diag =
                self.mass_over_dt * mj + self.theta * mj * 2.0 * self.m as f64 * self.inv_h2;
            if j > 1 {
                diag += self.theta * self.t_edge[j - 1];
            } else if self.bottom_dirichlet {
                diag += self.theta * self.t_edge[0];
            }
            if j < self.nz {
                diag += self.theta * self.t_edge[j];
            } else if self.top_dirichlet {
                diag += self.theta * self.t_edge[self.nz];
            }
            for site in 0..self.sites {
                d[self.idx(j, site)] = 1.0 / diag;
            }
        }
        d
    }

    pub fn t_face(&self) -> f64 {
        self.t_edge[0]
    }

    pub fn t_cap(&self) -> f64 {
        self.t_edge[self.nz]
    }
}

/// Solves the weighted extension problem with Dirichlet trace `u` and a
/// Dirichlet cap at the mean of `u` (the only non-decaying mode).
pub fn solve_extension(u: &ThinField, grid: &ExtendedGrid, p: &FracParam) -> Result<ExtendedField> {
    u.assert_finite()?;
    if u.grid != grid.thin {
        return Err(Error::Config("trace grid does not match extended grid".into()));
    }
    let _ = p;
    let cap = u.mean();
    let op = BulkOperator::new(grid, true, true, 0.0, 1.0);
    let inv_diag = op.inv_diag();
    let sites = grid.thin.sites();
    let ell = u.ell;
    let mut field = ExtendedField::zeros(grid, ell);
    field.set_trace(u);
    let mut unknowns = vec![0.0; op.len()];
    let mut rhs = vec![0.0; op.len()];
    for comp in 0..ell {
        for site in 0..sites {
            let uv = u.get(site)[comp];
            // Warm start from the trace column; boundary data enters
            // through the half-edge transmissibilities.
            for j in 1..=grid.nz() {
                unknowns[op.idx(j, site)] = uv;
            }
            rhs[op.idx(1, site)] = op.t_face() * uv;
        }
        for site in 0..sites {
            rhs[op.idx(grid.nz(), site)] += op.t_cap() * cap[comp];
        }
        cg_solve(
            |v, out| op.apply(v, out),
            &rhs,
            &mut unknowns,
            Some(&inv_diag),
            1e-10,
            20_000,
        )?;
        for j in 1..=grid.nz() {
            for site in 0..sites {
                let i = field.idx(j, site) + comp;
                field.values[i] = unknowns[op.idx(j, site)];
            }
        }
        rhs.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(field)
}

/// Raw weighted conormal derivative `-lim_{z->0} z^a dU/dz`, computed as
/// the regular graded difference `-2s (U_1 - u) / zeta_{1/2}`: the flux the
/// finite-volume scheme balances through the face. On mesh-graded grids
/// (`gamma = 3`) this is uniformly accurate over the whole s window.
pub fn d2n(field: &ExtendedField, p: &FracParam) -> ThinField {
    let grid = &field.grid;
    let s = p.s();
    let zeta_half = grid.zeta_center(1);
    let sites = grid.thin.sites();
    let mut out = ThinField::zeros(&grid.thin, field.ell);
    for site in 0..sites {
        let face = field.get(0, site);
        let first = field.get(1, site);
        for c in 0..field.ell {
            out.values[site * field.ell + c] = -2.0 * s * (first[c] - face[c]) / zeta_half;
        }
    }
    out
}

/// `delta_s` times the raw conormal: the normalisation that matches the
/// Fourier symbol of the fractional Laplacian. Both conventions are
/// exported because the energy normalisation carries `delta_s` while the
/// boundary-operator shorthand does not.
pub fn d2n_normalized(field: &ExtendedField, p: &FracParam) -> ThinField {
    let mut out = d2n(field, p);
    let ds = delta_s(p);
    out.values.iter_mut().for_each(|v| *v *= ds);
    out
}

/// Exact vertical profile of a Fourier mode: the decaying solution of
/// `phi'' + (a/z) phi' = lambda^2 phi`, `phi(0) = 1`, namely
/// `(lambda z)^s K_s(lambda z) / (2^{s-1} Gamma(s))`.
pub fn mode_profile(p: &FracParam, lambda: f64, z: f64) -> f64 {
    let s = p.s();
    if lambda == 0.0 || z == 0.0 {
        return 1.0;
    }
    let x = lambda * z;
    if x > 690.0 {
        return 0.0;
    }
    x.powf(s) * bessel_k(s, x) / (2f64.powf(s - 1.0) * gamma_pos(s))
}

/// Spectral reference solution: per-mode multiplication of the trace by the
/// exact vertical profile at height `z`. Serves as the oracle for
/// [`solve_extension`]. 1-d thin grids only.
pub fn spectral_extension(u: &ThinField, p: &FracParam, z: f64) -> Result<ThinField> {
    if u.grid.m() != 1 {
        return Err(Error::UnsupportedRange(
            "spectral reference implemented for m = 1".into(),
        ));
    }
    let n = u.grid.n();
    let length = u.grid.length();
    let mut out = ThinField::zeros(&u.grid, u.ell);
    let max_k = n / 2;
    let profiles: Vec<f64> = (0..=max_k)
        .map(|k| {
            let lambda = 2.0 * std::f64::consts::PI * k as f64 / length;
            mode_profile(p, lambda, z)
        })
        .collect();
    let two_pi_over_n = 2.0 * std::f64::consts::PI / n as f64;
    for comp in 0..u.ell {
        for k in 0..=max_k {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..n {
                let angle = two_pi_over_n * (j * k % n) as f64;
                let v = u.values[j * u.ell + comp];
                a += v * angle.cos();
                b += v * angle.sin();
            }
            let norm = if k == 0 || (2 * k == n) {
                1.0 / n as f64
            } else {
                2.0 / n as f64
            };
            a *= norm;
            b *= norm;
            let phi = profiles[k];
            for j in 0..n {
                let angle = two_pi_over_n * (j * k % n) as f64;
                out.values[j * u.ell + comp] += phi * (a * angle.cos() + b * angle.sin());
            }
        }
    }
    Ok(out)
}

/// The exact quadratic form minimised by [`solve_extension`]: weighted
/// Dirichlet energy with edge-based differences, half-edges to the trace
/// and, for a Dirichlet cap, to the cap value.
pub fn discrete_dirichlet_energy(field: &ExtendedField, cap: &CapCondition) -> f64 {
    let grid = &field.grid;
    let hm = grid.thin.cell_volume();
    let inv_h2 = 1.0 / (grid.thin.h() * grid.thin.h());
    let sites = grid.thin.sites();
    let mut acc = 0.0;
    for j in 1..=grid.nz() {
        let mj = grid.cell_mass(j);
        for site in 0..sites {
            let v = field.get(j, site);
            for axis in 0..grid.thin.m() {
                let e = field.get(j, grid.thin.shift(site, axis, 1));
                for c in 0..field.ell {
                    let d = e[c] - v[c];
                    acc += mj * d * d * inv_h2 * hm;
                }
            }
            if j < grid.nz() {
                let up = field.get(j + 1, site);
                for c in 0..field.ell {
                    let d = up[c] - v[c];
                    acc += grid.t_edge(j) * d * d * hm;
                }
            }
            if j == 1 {
                let face = field.get(0, site);
                for c in 0..field.ell {
                    let d = v[c] - face[c];
                    acc += grid.t_edge(0) * d * d * hm;
                }
            }
            if j == grid.nz() {
                if let CapCondition::Dirichlet(capv) = cap {
                    for c in 0..field.ell {
                        let d = capv[c] - v[c];
                        acc += grid.t_edge(grid.nz()) * d * d * hm;
                    }
                }
            }
        }
    }
    0.5 * acc
}
