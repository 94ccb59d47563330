//! Discretization of the periodic thin torus and the weighted half space.
//!
//! Vertical layers live at cell centers of a uniform grid in the graded
//! coordinate `zeta = z^{2s}`. In that coordinate the conormal flux
//! `z^a dU/dz` equals `2s dU/dzeta`, a regular one-sided derivative, and
//! extension solutions (which behave like `u + c z^{2s}` near the boundary)
//! are smooth. Cell masses `int_cell z^a dz` are closed-form, so the total
//! weighted measure of `(0, Zmax)` is reproduced exactly.

use crate::params::FracParam;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Periodic lattice on the thin space, `m in {1, 2}` axes of `n` points
/// with period `length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinGrid {
    m: usize,
    n: usize,
    length: f64,
}

impl ThinGrid {
    pub fn new(m: usize, n: usize, length: f64) -> Result<Self> {
        if !(m == 1 || m == 2) {
            return Err(Error::Config(format!("thin grid supports m in {{1,2}}, got {m}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::Config(format!("need even n >= 8, got {n}")));
        }
        if !(length > 0.0) {
            return Err(Error::Config(format!("need positive period, got {length}")));
        }
        Ok(Self { m, n, length })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    /// Cell volume `h^m`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.m as i32)
    }

    /// Coordinates of a site; sites sit at `x_i = i h` per axis.
    pub fn coord(&self, site: usize) -> Vec<f64> {
        let h = self.h();
        match self.m {
            1 => vec![site as f64 * h],
            _ => vec![(site % self.n) as f64 * h, (site / self.n) as f64 * h],
        }
    }

    #[inline]
    pub fn site_index(&self, ix: &[usize]) -> usize {
        match self.m {
            1 => ix[0] % self.n,
            _ => (ix[0] % self.n) + self.n * (ix[1] % self.n),
        }
    }

    /// Site shifted by `delta` lattice steps along `axis` (periodic).
    #[inline]
    pub fn shift(&self, site: usize, axis: usize, delta: isize) -> usize {
        let n = self.n as isize;
        match self.m {
            1 => ((site as isize + delta).rem_euclid(n)) as usize,
            _ => {
                let (ix, iy) = ((site % self.n) as isize, (site / self.n) as isize);
                if axis == 0 {
                    ((ix + delta).rem_euclid(n)) as usize + self.n * iy as usize
                } else {
                    ix as usize + self.n * ((iy + delta).rem_euclid(n)) as usize
                }
            }
        }
    }

    /// Minimum-image displacement `x - x0` per axis, each in `[-L/2, L/2)`.
    pub fn min_image(&self, x: &[f64], x0: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let mut d = (x[i] - x0[i]) % self.length;
                if d < -0.5 * self.length {
                    d += self.length;
                }
                if d >= 0.5 * self.length {
                    d -= self.length;
                }
                d
            })
            .collect()
    }
}

/// Vector-valued samples on a thin grid, `ell` components per site.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinField {
    pub grid: ThinGrid,
    pub ell: usize,
    pub values: Vec<f64>,
}

impl ThinField {
    pub fn zeros(grid: &ThinGrid, ell: usize) -> Self {
        Self {
            grid: grid.clone(),
            ell,
            values: vec![0.0; grid.sites() * ell],
        }
    }

    pub fn from_fn(grid: &ThinGrid, ell: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, ell);
        for site in 0..grid.sites() {
            let v = f(&grid.coord(site));
            debug_assert_eq!(v.len(), ell);
            out.values[site * ell..(site + 1) * ell].copy_from_slice(&v);
        }
        out
    }

    #[inline]
    pub fn get(&self, site: usize) -> &[f64] {
        &self.values[site * self.ell..(site + 1) * self.ell]
    }

    #[inline]
    pub fn set(&mut self, site: usize, v: &[f64]) {
        self.values[site * self.ell..(site + 1) * self.ell].copy_from_slice(v);
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("thin field contains non-finite entries".into()))
        }
    }

    /// Mean per component over all sites, summed in a canonical order so
    /// the result is invariant under lattice translations of the data.
    pub fn mean(&self) -> Vec<f64> {
        let sites = self.grid.sites();
        let mut scratch = Vec::with_capacity(sites);
        (0..self.ell)
            .map(|c| {
                scratch.clear();
                scratch.extend((0..sites).map(|site| self.values[site * self.ell + c]));
                scratch.sort_unstable_by(f64::total_cmp);
                scratch.iter().sum::<f64>() / sites as f64
            })
            .collect()
    }

    /// Mean of `|u|^2` over sites, order-invariant like [`Self::mean`].
    pub fn mean_sq(&self) -> f64 {
        let sites = self.grid.sites();
        let mut scratch: Vec<f64> = (0..sites)
            .map(|site| self.get(site).iter().map(|v| v * v).sum())
            .collect();
        scratch.sort_unstable_by(f64::total_cmp);
        scratch.iter().sum::<f64>() / sites as f64
    }

    /// Field shifted by one lattice step along `axis`.
    pub fn translated(&self, axis: usize, delta: isize) -> Self {
        let mut out = Self::zeros(&self.grid, self.ell);
        for site in 0..self.grid.sites() {
            let src = self.grid.shift(site, axis, -delta);
            let v: Vec<f64> = self.get(src).to_vec();
            out.set(site, &v);
        }
        out
    }
}

/// Graded vertical discretization of `(0, Zmax)` glued onto a thin grid.
///
/// Cells are cut in the graded coordinate `zeta = z^{2s}`. The default
/// layout (`gamma = 1`) uses uniform zeta cells, `zeta_j = (j - 1/2)
/// Zmax^{2s}/nz`. A grading exponent `gamma > 1` concentrates cells near
/// the face as `zeta_k = Zmax^{2s} (k/nz)^gamma`, which resolves both the
/// `z^{2s}` and the regular `z^2` component of extension solutions
/// uniformly in `s`; the extension solver uses `gamma = 3` grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedGrid {
    pub thin: ThinGrid,
    nz: usize,
    zmax: f64,
    s: f64,
    gamma: f64,
    zeta_faces: Vec<f64>,
    zeta_centers: Vec<f64>,
    z_centers: Vec<f64>,
    /// Closed-form weighted mass `int_cell z^a dz` per vertical cell.
    cell_mass: Vec<f64>,
}

impl ExtendedGrid {
    pub fn new(thin: ThinGrid, nz: usize, zmax: f64, p: &FracParam) -> Result<Self> {
        Self::new_graded(thin, nz, zmax, p, 1.0)
    }

    pub fn new_graded(
        thin: ThinGrid,
        nz: usize,
        zmax: f64,
        p: &FracParam,
        gamma: f64,
    ) -> Result<Self> {
        if nz < 3 {
            return Err(Error::Config(format!("need nz >= 3, got {nz}")));
        }
        if !(zmax > 0.0) {
            return Err(Error::Config(format!("need Zmax > 0, got {zmax}")));
        }
        if !(1.0..=8.0).contains(&gamma) {
            return Err(Error::Config(format!("need grading in [1, 8], got {gamma}")));
        }
        let s = p.s();
        let zeta_max = zmax.powf(2.0 * s);
        let zeta_faces: Vec<f64> = (0..=nz)
            .map(|k| zeta_max * (k as f64 / nz as f64).powf(gamma))
            .collect();
        let mut zeta_centers = Vec::with_capacity(nz);
        let mut z_centers = Vec::with_capacity(nz);
        let mut cell_mass = Vec::with_capacity(nz);
        // z^{a+1}/(a+1) = zeta^{(1-s)/s} / (2 - 2s): cell masses telescope to
        // the exact weighted measure of (0, Zmax).
        let expo = (1.0 - s) / s;
        for j in 0..nz {
            let zeta_lo = zeta_faces[j];
            let zeta_hi = zeta_faces[j + 1];
            let zeta_c = 0.5 * (zeta_lo + zeta_hi);
            zeta_centers.push(zeta_c);
            z_centers.push(zeta_c.powf(1.0 / (2.0 * s)));
            cell_mass.push((zeta_hi.powf(expo) - zeta_lo.powf(expo)) / (2.0 - 2.0 * s));
        }
        Ok(Self {
            thin,
            nz,
            zmax,
            s,
            gamma,
            zeta_faces,
            zeta_centers,
            z_centers,
            cell_mass,
        })
    }

    #[inline]
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn zmax(&self) -> f64 {
        self.zmax
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Mean zeta cell width; the exact width for ungraded grids.
    #[inline]
    pub fn dzeta(&self) -> f64 {
        self.zeta_faces[self.nz] / self.nz as f64
    }

    /// Graded coordinate of layer `j` (1-based; layer 0 is the boundary face).
    #[inline]
    pub fn zeta_center(&self, j: usize) -> f64 {
        self.zeta_centers[j - 1]
    }

    #[inline]
    pub fn zeta_face(&self, k: usize) -> f64 {
        self.zeta_faces[k]
    }

    #[inline]
    pub fn z_center(&self, j: usize) -> f64 {
        self.z_centers[j - 1]
    }

    /// Vertical transmissibility `2s / gap` of edge `e` in `0..=nz`:
    /// edge 0 joins the face to cell 1, edge `nz` joins cell `nz` to the cap.
    pub fn t_edge(&self, e: usize) -> f64 {
        let two_s = 2.0 * self.s;
        if e == 0 {
            two_s / self.zeta_centers[0]
        } else if e < self.nz {
            two_s / (self.zeta_centers[e] - self.zeta_centers[e - 1])
        } else {
            two_s / (self.zeta_faces[self.nz] - self.zeta_centers[self.nz - 1])
        }
    }

    /// Weighted mass `int z^a dz` of vertical cell `j` (1-based).
    #[inline]
    pub fn cell_mass(&self, j: usize) -> f64 {
        self.cell_mass[j - 1]
    }

    /// Weighted mass of cell `j` clipped to `z < cap`, closed form.
    pub fn cell_mass_below(&self, j: usize, cap: f64) -> f64 {
        let s = self.s;
        let zeta_lo = self.zeta_faces[j - 1];
        let zeta_hi = self.zeta_faces[j];
        let z_lo = zeta_lo.powf(1.0 / (2.0 * s));
        let z_hi = zeta_hi.powf(1.0 / (2.0 * s)).min(cap);
        if z_hi <= z_lo {
            return 0.0;
        }
        let e = 2.0 - 2.0 * s;
        (z_hi.powf(e) - z_lo.powf(e)) / e
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }
}

/// Samples on an extended grid: layer 0 is the boundary face (the trace),
/// layers `1..=nz` are vertical cell centers.
///
/// Layout is layer-major: `values[(layer * sites + site) * ell + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    pub grid: ExtendedGrid,
    pub ell: usize,
    pub values: Vec<f64>,
}

impl ExtendedField {
    pub fn zeros(grid: &ExtendedGrid, ell: usize) -> Self {
        let n = grid.thin.sites() * (grid.nz + 1) * ell;
        Self {
            grid: grid.clone(),
            ell,
            values: vec![0.0; n],
        }
    }

    /// Constant field `q` everywhere including the face.
    pub fn constant(grid: &ExtendedGrid, q: &[f64]) -> Self {
        let mut out = Self::zeros(grid, q.len());
        let sites = grid.thin.sites();
        for layer in 0..=grid.nz {
            for site in 0..sites {
                out.set(layer, site, q);
            }
        }
        out
    }

    /// Builds a field from `f(x, z)`; the face layer gets `z = 0`.
    pub fn from_fn(grid: &ExtendedGrid, ell: usize, f: impl Fn(&[f64], f64) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, ell);
        let sites = grid.thin.sites();
        for layer in 0..=grid.nz {
            let z = if layer == 0 { 0.0 } else { grid.z_center(layer) };
            for site in 0..sites {
                let v = f(&grid.thin.coord(site), z);
                debug_assert_eq!(v.len(), ell);
                out.set(layer, site, &v);
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, layer: usize, site: usize) -> usize {
        (layer * self.grid.thin.sites() + site) * self.ell
    }

    #[inline]
    pub fn get(&self, layer: usize, site: usize) -> &[f64] {
        let i = self.idx(layer, site);
        &self.values[i..i + self.ell]
    }

    #[inline]
    pub fn set(&mut self, layer: usize, site: usize, v: &[f64]) {
        let i = self.idx(layer, site);
        self.values[i..i + self.ell].copy_from_slice(v);
    }

    /// The boundary trace as a thin field (layer 0).
    pub fn trace(&self) -> ThinField {
        let sites = self.grid.thin.sites();
        ThinField {
            grid: self.grid.thin.clone(),
            ell: self.ell,
            values: self.values[..sites * self.ell].to_vec(),
        }
    }

    pub fn set_trace(&mut self, u: &ThinField) {
        debug_assert_eq!(u.ell, self.ell);
        let sites = self.grid.thin.sites();
        self.values[..sites * self.ell].copy_from_slice(&u.values);
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("extended field contains non-finite entries".into()))
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= lambda);
        out
    }

    /// Field translated by one lattice step along a thin axis.
    pub fn translated(&self, axis: usize, delta: isize) -> Self {
        let mut out = Self::zeros(&self.grid, self.ell);
        let sites = self.grid.thin.sites();
        for layer in 0..=self.grid.nz() {
            for site in 0..sites {
                let src = self.grid.thin.shift(site, axis, -delta);
                let v: Vec<f64> = self.get(layer, src).to_vec();
                out.set(layer, site, &v);
            }
        }
        out
    }
}

/// A time-ordered sequence of extended fields with uniform step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<ExtendedField>,
    pub dt: f64,
    pub t_start: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<ExtendedField>, dt: f64, t_start: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Config("trajectory needs at least two frames".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("need dt > 0, got {dt}")));
        }
        let g0 = &frames[0].grid;
        if !frames.iter().all(|f| &f.grid == g0) {
            return Err(Error::Config("trajectory frames must share one grid".into()));
        }
        Ok(Self { frames, dt, t_start })
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    #[inline]
    pub fn t_end(&self) -> f64 {
        self.time(self.frames.len() - 1)
    }

    pub fn grid(&self) -> &ExtendedGrid {
        &self.frames[0].grid
    }
}

/// Weighted integral `int f z^a dX` of a scalar extended field over the
/// bulk: exact for fields constant in `z` on each cell.
pub fn weighted_integral(f: &ExtendedField) -> f64 {
    debug_assert_eq!(f.ell, 1);
    let hm = f.grid.thin.cell_volume();
    let sites = f.grid.thin.sites();
    let mut total = 0.0;
    for j in 1..=f.grid.nz() {
        let mass = f.grid.cell_mass(j) * hm;
        let mut layer_sum = 0.0;
        for site in 0..sites {
            layer_sum += f.get(j, site)[0];
        }
        total += mass * layer_sum;
    }
    total
}

/// Squared horizontal gradient by centered second-order periodic
/// differences, summed over components; computed on every layer including
/// the face.
pub fn horizontal_gradient_sq(u: &ExtendedField) -> ExtendedField {
    let grid = &u.grid;
    let mut out = ExtendedField::zeros(grid, 1);
    let inv2h = 1.0 / (2.0 * grid.thin.h());
    let sites = grid.thin.sites();
    for layer in 0..=grid.nz() {
        for site in 0..sites {
            let mut acc = 0.0;
            for axis in 0..grid.thin.m() {
                let fwd = u.get(layer, grid.thin.shift(site, axis, 1));
                let bwd = u.get(layer, grid.thin.shift(site, axis, -1));
                for c in 0..u.ell {
                    let g = (fwd[c] - bwd[c]) * inv2h;
                    acc += g * g;
                }
            }
            out.set(layer, site, &[acc]);
        }
    }
    out
}

/// Squared vertical derivative at cell centers via graded-coordinate
/// differences: `dU/dz = 2s z^{2s-1} dU/dzeta`.
///
/// Interior layers use centered differences in `zeta`; layer 1 differences
/// against the face, layer `nz` one-sided. The face layer carries no
/// vertical term (it has zero bulk measure).
pub fn vertical_gradient_sq(u: &ExtendedField) -> ExtendedField {
    let grid = &u.grid;
    let s = grid.s();
    let nz = grid.nz();
    let mut out = ExtendedField::zeros(grid, 1);
    let sites = grid.thin.sites();
    for j in 1..=nz {
        let z = grid.z_center(j);
        let chain = 2.0 * s * z.powf(2.0 * s - 1.0);
        let (lo, hi, gap) = if j == 1 {
            // face (zeta = 0) to layer 2
            (0usize, 2, grid.zeta_center(2))
        } else if j == nz {
            (nz - 1, nz, grid.zeta_center(nz) - grid.zeta_center(nz - 1))
        } else {
            (j - 1, j + 1, grid.zeta_center(j + 1) - grid.zeta_center(j - 1))
        };
        for site in 0..sites {
            let a = u.get(lo, site);
            let b = u.get(hi, site);
            let mut acc = 0.0;
            for c in 0..u.ell {
                let g = chain * (b[c] - a[c]) / gap;
                acc += g * g;
            }
            out.set(j, site, &[acc]);
        }
    }
    out
}

/// Full squared gradient: horizontal plus vertical, pointwise.
pub fn full_gradient_sq(u: &ExtendedField) -> ExtendedField {
    let mut h = horizontal_gradient_sq(u);
    let v = vertical_gradient_sq(u);
    for (a, b) in h.values.iter_mut().zip(v.values.iter()) {
        *a += b;
    }
    h
}

/// Squared horizontal gradient of a thin field (used for boundary energy
/// densities).
pub fn thin_gradient_sq(u: &ThinField) -> ThinField {
    let grid = &u.grid;
    let mut out = ThinField::zeros(grid, 1);
    let inv2h = 1.0 / (2.0 * grid.h());
    for site in 0..grid.sites() {
        let mut acc = 0.0;
        for axis in 0..grid.m() {
            let fwd = u.get(grid.shift(site, axis, 1));
            let bwd = u.get(grid.shift(site, axis, -1));
            for c in 0..u.ell {
                let g = (fwd[c] - bwd[c]) * inv2h;
                acc += g * g;
            }
        }
        out.values[site] = acc;
    }
    out
}
