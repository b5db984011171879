// SPDX-License-Identifier: Apache-2.0

//! Electrostatic density in the placement cuboid: charge splatting, a
//! spectral Poisson solve with Neumann boundaries, fields, node forces and
//! the overflow statistic.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Die, PlacementState};
use crate::spectral::{LineOp, Transform3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    /// Planar resolution from the movable node count; `nz` layers in depth.
    pub fn for_movable(count: usize, nz: usize) -> Self {
        let side = ((count as f64).sqrt().ceil() as usize).next_power_of_two().clamp(32, 1024);
        Self { nx: side, ny: side, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bin overlaps of an interval along one axis.
#[derive(Clone, Debug, Default)]
struct Cover {
    first: usize,
    len: Vec<f64>,
}

fn cover(lo: f64, size: f64, bin: f64, n: usize, stretch: bool, out: &mut Cover) -> f64 {
    let extent = bin * n as f64;
    let mut eff = size;
    let mut start = lo;
    if stretch && size < bin {
        eff = bin.min(extent);
        start = (lo + 0.5 * size - 0.5 * eff).clamp(0.0, extent - eff);
    }
    let end = start + eff;
    let b0 = ((start / bin).floor().max(0.0) as usize).min(n - 1);
    let b1 = ((end / bin).ceil() as usize).clamp(b0 + 1, n);
    out.first = b0;
    out.len.clear();
    for b in b0..b1 {
        let ov = end.min((b + 1) as f64 * bin) - start.max(b as f64 * bin);
        out.len.push(ov.max(0.0));
    }
    if eff > 0.0 {
        size / eff
    } else {
        1.0
    }
}

/// Bin grid with charge density, potential, field and spectral coefficients.
#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub dims: GridDims,
    pub extent: [f64; 3],
    pub bin: [f64; 3],
    /// Splatted volume per bin, DC removed.
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub ez: Vec<f64>,
    /// Cosine-series coefficients of `rho`.
    pub coef: Vec<f64>,
    /// Exact-footprint volume of non-filler nodes per bin.
    pub cells: Vec<f64>,
    pub cell_volume: f64,
    /// Average volume per bin removed from `rho`.
    pub mean: f64,
    /// Skip the potential in `solve` when only forces are needed.
    pub want_potential: bool,
    transform: Transform3,
    covers: [Cover; 3],
}

impl DensityGrid {
    pub fn new(dims: GridDims, extent: [f64; 3]) -> Self {
        let n = dims.len();
        let bin = [
            extent[0] / dims.nx as f64,
            extent[1] / dims.ny as f64,
            extent[2] / dims.nz as f64,
        ];
        Self {
            dims,
            extent,
            bin,
            rho: vec![0.0; n],
            phi: vec![0.0; n],
            ex: vec![0.0; n],
            ey: vec![0.0; n],
            ez: vec![0.0; n],
            coef: vec![0.0; n],
            cells: vec![0.0; n],
            cell_volume: 0.0,
            mean: 0.0,
            want_potential: true,
            transform: Transform3::new([dims.nx, dims.ny, dims.nz]),
            covers: Default::default(),
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims.ny + iy) * self.dims.nz + iz
    }

    pub fn bin_volume(&self) -> f64 {
        self.bin[0] * self.bin[1] * self.bin[2]
    }

    fn node_box(state: &PlacementState, i: usize) -> [(f64, f64); 3] {
        [(state.x[i], state.width[i]), (state.y[i], state.height[i]), (state.z[i], state.depth())]
    }

    fn check_inside(&self, state: &PlacementState, i: usize) -> Result<()> {
        for (axis, (lo, size)) in Self::node_box(state, i).into_iter().enumerate() {
            let tol = 1e-9 * self.extent[axis].max(1.0);
            if !(lo >= -tol && lo + size <= self.extent[axis] + tol) {
                return Err(Error::Domain(format!(
                    "node #{i} spans [{lo}, {}] outside [0, {}] on axis {axis}",
                    lo + size,
                    self.extent[axis]
                )));
            }
        }
        Ok(())
    }

    fn set_covers(&mut self, state: &PlacementState, i: usize, stretch: bool) -> f64 {
        let n = [self.dims.nx, self.dims.ny, self.dims.nz];
        let mut scale = 1.0;
        for (axis, (lo, size)) in Self::node_box(state, i).into_iter().enumerate() {
            scale *= cover(lo, size, self.bin[axis], n[axis], stretch, &mut self.covers[axis]);
        }
        scale
    }

    fn splat(&mut self, scale: f64, to_cells: bool) {
        let [cx, cy, cz] = &self.covers;
        for (a, &lx) in cx.len.iter().enumerate() {
            for (b, &ly) in cy.len.iter().enumerate() {
                let base = self.index(cx.first + a, cy.first + b, cz.first);
                let w = lx * ly * scale;
                let target = if to_cells { &mut self.cells } else { &mut self.rho };
                for (c, &lz) in cz.len.iter().enumerate() {
                    target[base + c] += w * lz;
                }
            }
        }
    }

    /// Splats every node (small nodes stretched to the bin scale with
    /// density scaled down) and removes the mean.
    pub fn build(&mut self, state: &PlacementState) -> Result<()> {
        self.rho.fill(0.0);
        self.cells.fill(0.0);
        self.cell_volume = 0.0;
        for i in 0..state.len() {
            self.check_inside(state, i)?;
            let scale = self.set_covers(state, i, true);
            self.splat(scale, false);
            if !state.is_filler(i) {
                self.set_covers(state, i, false);
                self.splat(1.0, true);
                self.cell_volume += state.charge(i);
            }
        }
        self.mean = self.rho.iter().sum::<f64>() / self.rho.len() as f64;
        for v in &mut self.rho {
            *v -= self.mean;
        }
        Ok(())
    }

    fn omega(&self, axis: usize, j: usize) -> f64 {
        j as f64 * PI / self.extent[axis]
    }

    /// Fills `coef`, `phi` (unless disabled) and the three field components.
    pub fn solve(&mut self) {
        let GridDims { nx, ny, nz } = self.dims;
        let n = self.dims.len() as f64;
        self.coef.copy_from_slice(&self.rho);
        self.transform.apply_all(&mut self.coef, [LineOp::Dct2; 3]);
        let wx: Vec<f64> = (0..nx).map(|j| self.omega(0, j)).collect();
        let wy: Vec<f64> = (0..ny).map(|k| self.omega(1, k)).collect();
        let wz: Vec<f64> = (0..nz).map(|l| self.omega(2, l)).collect();
        let weight = |j: usize| if j == 0 { 1.0 } else { 2.0 };
        for j in 0..nx {
            for k in 0..ny {
                let base = self.index(j, k, 0);
                let w = weight(j) * weight(k) / n;
                for l in 0..nz {
                    self.coef[base + l] *= w * weight(l);
                }
            }
        }
        self.coef[0] = 0.0;
        let coef = &self.coef;
        let fill = |out: &mut Vec<f64>, f: &dyn Fn(usize, usize, usize) -> f64| {
            for j in 0..nx {
                for k in 0..ny {
                    let base = (j * ny + k) * nz;
                    for l in 0..nz {
                        out[base + l] = if j + k + l == 0 { 0.0 } else { coef[base + l] * f(j, k, l) };
                    }
                }
            }
        };
        let w2 = |j: usize, k: usize, l: usize| wx[j] * wx[j] + wy[k] * wy[k] + wz[l] * wz[l];
        let mut ex = std::mem::take(&mut self.ex);
        let mut ey = std::mem::take(&mut self.ey);
        let mut ez = std::mem::take(&mut self.ez);
        let mut phi = std::mem::take(&mut self.phi);
        fill(&mut ex, &|j, k, l| wx[j] / w2(j, k, l));
        fill(&mut ey, &|j, k, l| wy[k] / w2(j, k, l));
        fill(&mut ez, &|j, k, l| wz[l] / w2(j, k, l));
        if self.want_potential {
            fill(&mut phi, &|j, k, l| 1.0 / w2(j, k, l));
        }
        let tr = &mut self.transform;
        tr.apply_all(&mut ex, [LineOp::SinSum, LineOp::CosSum, LineOp::CosSum]);
        tr.apply_all(&mut ey, [LineOp::CosSum, LineOp::SinSum, LineOp::CosSum]);
        tr.apply_all(&mut ez, [LineOp::CosSum, LineOp::CosSum, LineOp::SinSum]);
        if self.want_potential {
            tr.apply_all(&mut phi, [LineOp::CosSum; 3]);
        } else {
            phi.fill(0.0);
        }
        self.ex = ex;
        self.ey = ey;
        self.ez = ez;
        self.phi = phi;
    }

    /// Field at an arbitrary point by direct series summation.
    pub fn field_at(&self, p: [f64; 3]) -> [f64; 3] {
        let GridDims { nx, ny, nz } = self.dims;
        let mut e = [0.0; 3];
        for j in 0..nx {
            let (wj, cj, sj) = (self.omega(0, j), (self.omega(0, j) * p[0]).cos(), (self.omega(0, j) * p[0]).sin());
            for k in 0..ny {
                let wk = self.omega(1, k);
                let (ck, sk) = ((wk * p[1]).cos(), (wk * p[1]).sin());
                for l in 0..nz {
                    if j + k + l == 0 {
                        continue;
                    }
                    let wl = self.omega(2, l);
                    let (cl, sl) = ((wl * p[2]).cos(), (wl * p[2]).sin());
                    let a = self.coef[self.index(j, k, l)] / (wj * wj + wk * wk + wl * wl);
                    e[0] += a * wj * sj * ck * cl;
                    e[1] += a * wk * cj * sk * cl;
                    e[2] += a * wl * cj * ck * sl;
                }
            }
        }
        e
    }

    /// Force on every node: overlap-weighted sum of the field over the
    /// bins it covers, so its magnitude scales with the node's charge.
    pub fn forces(&mut self, state: &PlacementState, fx: &mut [f64], fy: &mut [f64], fz: &mut [f64]) {
        for i in 0..state.len() {
            let scale = self.set_covers(state, i, true);
            let [cx, cy, cz] = &self.covers;
            let mut f = [0.0; 3];
            for (a, &lx) in cx.len.iter().enumerate() {
                for (b, &ly) in cy.len.iter().enumerate() {
                    let base = self.index(cx.first + a, cy.first + b, cz.first);
                    let w = lx * ly * scale;
                    for (c, &lz) in cz.len.iter().enumerate() {
                        let wv = w * lz;
                        f[0] += wv * self.ex[base + c];
                        f[1] += wv * self.ey[base + c];
                        f[2] += wv * self.ez[base + c];
                    }
                }
            }
            fx[i] = f[0];
            fy[i] = f[1];
            fz[i] = f[2];
        }
    }

    /// Excess cell volume over per-die targets relative to total cell
    /// volume. `targets` is indexed by `Die::index()`.
    pub fn overflow(&self, targets: [f64; 2]) -> f64 {
        if self.cell_volume <= 0.0 {
            return 0.0;
        }
        let cap = self.bin_volume();
        let nz = self.dims.nz;
        let half = self.extent[2] / 2.0;
        let slab_cap: Vec<f64> = (0..nz)
            .map(|l| {
                let zc = (l as f64 + 0.5) * self.bin[2];
                let die = if zc < half { Die::Bottom } else { Die::Top };
                targets[die.index()] * cap
            })
            .collect();
        let mut excess = 0.0;
        for (i, &v) in self.cells.iter().enumerate() {
            excess += (v - slab_cap[i % nz]).max(0.0);
        }
        excess / self.cell_volume
    }

    /// Electrostatic energy `½ Σ rho·phi`.
    pub fn energy(&self) -> f64 {
        0.5 * self.rho.iter().zip(&self.phi).map(|(r, p)| r * p).sum::<f64>()
    }
}

pub fn build_density_map(state: &PlacementState, dims: GridDims, extent: [f64; 3]) -> Result<DensityGrid> {
    let mut g = DensityGrid::new(dims, extent);
    g.build(state)?;
    Ok(g)
}

pub fn solve_field(grid: &mut DensityGrid) {
    grid.solve();
}

/// Per-node forces `(F_x, F_y, F_z)`.
pub fn density_gradient(state: &PlacementState, grid: &mut DensityGrid) -> Vec<[f64; 3]> {
    let n = state.len();
    let (mut fx, mut fy, mut fz) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    grid.forces(state, &mut fx, &mut fy, &mut fz);
    (0..n).map(|i| [fx[i], fy[i], fz[i]]).collect()
}
