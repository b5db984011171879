// SPDX-License-Identifier: Apache-2.0

//! 3D global placement: fillers, initialization, the Nesterov loop with
//! wirelength and density gradients, and the γ/λ schedules.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::density::{DensityGrid, GridDims};
use crate::error::{Error, Result};
use crate::model::{Design, Die, Filler, PlacementState};
use crate::wirelength::{total_objective_into, ObjectiveWorkspace, WlGradients, WlModel, WlParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSetting {
    /// Chosen at the first iteration from gradient norms.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Nesterov,
    GradientDescent,
}

/// How Barzilai-Borwein step lengths are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    /// One step from all coordinates.
    Joint,
    /// One step from planar coordinates, shared by depth.
    Planar,
    /// Separate planar and depth steps.
    Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    pub seed: u64,
    pub max_iters: usize,
    pub stop_overflow: f64,
    pub alpha: AlphaSetting,
    /// Cut-term share of the planar gradient norm used by `AlphaSetting::Auto`.
    pub alpha_ratio: f64,
    pub gamma_k: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Relative wirelength increase per iteration that stops λ growth at `mu_min`.
    pub mu_ref: f64,
    pub nz: usize,
    pub model: WlModel,
    pub fda: bool,
    pub optimizer: Optimizer,
    pub step_mode: StepMode,
    /// Initial spread as a fraction of the die span.
    pub init_sigma: f64,
    pub z_max: Option<f64>,
    pub fillers: bool,
    /// λ doublings tried when the committed partition breaks a capacity.
    pub feasibility_boosts: usize,
    /// Extra iterations granted per boost.
    pub boost_iters: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            max_iters: 3000,
            stop_overflow: 0.07,
            alpha: AlphaSetting::Auto,
            alpha_ratio: 0.3,
            gamma_k: 8.0,
            gamma_a: 20.0 / 9.0,
            gamma_b: -11.0 / 9.0,
            mu_min: 1.01,
            mu_max: 1.10,
            mu_ref: 0.002,
            nz: 32,
            model: WlModel::Bistratal,
            fda: true,
            optimizer: Optimizer::Nesterov,
            step_mode: StepMode::Planar,
            init_sigma: 0.01,
            z_max: None,
            fillers: true,
            feasibility_boosts: 3,
            boost_iters: 100,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {v:?} for {key}"))),
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_overflow > 0.0 && self.stop_overflow < 1.0) {
            return Err(Error::Config(format!("stop_overflow {} outside (0, 1)", self.stop_overflow)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.mu_min >= 1.0 && self.mu_max >= self.mu_min) {
            return Err(Error::Config("λ growth bounds need 1 <= mu_min <= mu_max".into()));
        }
        if !(self.mu_ref > 0.0 && self.gamma_k > 0.0 && self.init_sigma >= 0.0) {
            return Err(Error::Config("mu_ref and gamma_k must be positive, init_sigma non-negative".into()));
        }
        if self.nz == 0 || !self.nz.is_power_of_two() {
            return Err(Error::Config(format!("nz {} must be a power of two", self.nz)));
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(a >= 0.0) {
                return Err(Error::Config(format!("alpha {a} must be non-negative")));
            }
        }
        if let Some(z) = self.z_max {
            if !(z > 0.0) {
                return Err(Error::Config(format!("z_max {z} must be positive")));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "stop_overflow" => self.stop_overflow = parse_value(key, value)?,
            "alpha" => {
                self.alpha = if value == "auto" { AlphaSetting::Auto } else { AlphaSetting::Fixed(parse_value(key, value)?) }
            }
            "alpha_ratio" => self.alpha_ratio = parse_value(key, value)?,
            "gamma_k" => self.gamma_k = parse_value(key, value)?,
            "gamma_a" => self.gamma_a = parse_value(key, value)?,
            "gamma_b" => self.gamma_b = parse_value(key, value)?,
            "mu_min" => self.mu_min = parse_value(key, value)?,
            "mu_max" => self.mu_max = parse_value(key, value)?,
            "mu_ref" => self.mu_ref = parse_value(key, value)?,
            "nz" => self.nz = parse_value(key, value)?,
            "wl_model" => {
                self.model = match value {
                    "bistratal" => WlModel::Bistratal,
                    "plain" => WlModel::Plain,
                    _ => return Err(Error::Config(format!("unknown wl_model {value:?}"))),
                }
            }
            "fda" => self.fda = parse_bool(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "nesterov" => Optimizer::Nesterov,
                    "gd" => Optimizer::GradientDescent,
                    _ => return Err(Error::Config(format!("unknown optimizer {value:?}"))),
                }
            }
            "step_mode" => {
                self.step_mode = match value {
                    "joint" => StepMode::Joint,
                    "planar" => StepMode::Planar,
                    "split" => StepMode::Split,
                    _ => return Err(Error::Config(format!("unknown step_mode {value:?}"))),
                }
            }
            "init_sigma" => self.init_sigma = parse_value(key, value)?,
            "z_max" => self.z_max = if value == "auto" { None } else { Some(parse_value(key, value)?) },
            "fillers" => self.fillers = parse_bool(key, value)?,
            "feasibility_boosts" => self.feasibility_boosts = parse_value(key, value)?,
            "boost_iters" => self.boost_iters = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("config line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let model = match self.model {
            WlModel::Bistratal => "bistratal",
            WlModel::Plain => "plain",
        };
        let alpha = match self.alpha {
            AlphaSetting::Auto => "auto".to_string(),
            AlphaSetting::Fixed(a) => a.to_string(),
        };
        let optimizer = match self.optimizer {
            Optimizer::Nesterov => "nesterov",
            Optimizer::GradientDescent => "gd",
        };
        let step_mode = match self.step_mode {
            StepMode::Joint => "joint",
            StepMode::Planar => "planar",
            StepMode::Split => "split",
        };
        let z_max = self.z_max.map_or("auto".to_string(), |z| z.to_string());
        format!(
            "seed = {}\nmax_iters = {}\nstop_overflow = {}\nalpha = {alpha}\nalpha_ratio = {}\ngamma_k = {}\ngamma_a = {}\ngamma_b = {}\nmu_min = {}\nmu_max = {}\nmu_ref = {}\nnz = {}\nwl_model = {model}\nfda = {}\noptimizer = {optimizer}\nstep_mode = {step_mode}\ninit_sigma = {}\nz_max = {z_max}\nfillers = {}\nfeasibility_boosts = {}\nboost_iters = {}\n",
            self.seed,
            self.max_iters,
            self.stop_overflow,
            self.alpha_ratio,
            self.gamma_k,
            self.gamma_a,
            self.gamma_b,
            self.mu_min,
            self.mu_max,
            self.mu_ref,
            self.nz,
            self.fda,
            self.init_sigma,
            self.fillers,
            self.feasibility_boosts,
            self.boost_iters,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpRecord {
    pub iter: usize,
    pub wl_smooth: f64,
    /// Exact bistratal wirelength of the evaluated point.
    pub wl_exact: f64,
    pub cut: usize,
    pub overflow: f64,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GpTrace {
    pub records: Vec<GpRecord>,
}

impl GpTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,wl_smooth,wl_exact,cut,overflow,lambda,gamma\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.iter, r.wl_smooth, r.wl_exact, r.cut, r.overflow, r.lambda, r.gamma
            );
        }
        s
    }
}

/// Filler area per die: capacity minus half the cell area measured in that
/// die's technology, so that a balanced split leaves each die at its target.
pub fn filler_budget(design: &Design) -> Result<[f64; 2]> {
    let mut budget = [0.0; 2];
    for d in Die::BOTH {
        budget[d.index()] = design.die(d).capacity() - 0.5 * design.total_area(d);
    }
    if budget.iter().all(|&b| b < 0.0) {
        return Err(Error::Infeasible(format!(
            "cell area exceeds both die capacities (top needs {:.1} of {:.1}, bottom {:.1} of {:.1})",
            0.5 * design.total_area(Die::Top),
            design.die(Die::Top).capacity(),
            0.5 * design.total_area(Die::Bottom),
            design.die(Die::Bottom).capacity()
        )));
    }
    Ok(budget.map(|b| b.max(0.0)))
}

/// Square fillers with the die's row height as side, filling each budget.
pub fn insert_fillers(design: &Design) -> Result<Vec<Filler>> {
    let budget = filler_budget(design)?;
    let mut out = Vec::new();
    for d in [Die::Bottom, Die::Top] {
        let side = design.die(d).rows.height;
        let count = (budget[d.index()] / (side * side)).round() as usize;
        out.extend(std::iter::repeat_n(Filler { home: d, side }, count));
    }
    Ok(out)
}

/// Cells around the die center with Gaussian spread, depth near the middle;
/// fillers uniform over their home die.
pub fn init_placement(design: &Design, fillers: Vec<Filler>, cfg: &GpConfig) -> Result<PlacementState> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spec = design.die(Die::Top);
    let (xm, ym) = (spec.x_max, spec.y_max);
    let z_max = cfg.z_max.unwrap_or_else(|| design.default_z_max());
    let half = z_max / 2.0;
    let normal = |s: f64| Normal::new(0.0, s.max(f64::MIN_POSITIVE)).unwrap();
    let (nx, ny, nz) = (normal(cfg.init_sigma * xm), normal(cfg.init_sigma * ym), normal(cfg.init_sigma * half));
    let n = design.num_nodes();
    let total = n + fillers.len();
    let (mut x, mut y, mut z) = (Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total));
    for i in 0..n {
        // Size of the bottom technology only sets the initial center offset.
        let (w, h) = design.node_size(i, Die::Bottom);
        x.push((xm / 2.0 - w / 2.0 + nx.sample(&mut rng)).clamp(0.0, (xm - w).max(0.0)));
        y.push((ym / 2.0 - h / 2.0 + ny.sample(&mut rng)).clamp(0.0, (ym - h).max(0.0)));
        z.push((half / 2.0 + nz.sample(&mut rng)).clamp(0.0, half));
    }
    for f in &fillers {
        x.push(rng.random_range(0.0..=(xm - f.side).max(0.0)));
        y.push(rng.random_range(0.0..=(ym - f.side).max(0.0)));
        z.push(match f.home {
            Die::Bottom => rng.random_range(0.0..=half / 2.0),
            Die::Top => rng.random_range(half / 2.0..=half).max(half / 2.0 + 1e-9 * half),
        });
    }
    let mut s = PlacementState::new(design, fillers, x, y, z, z_max)?;
    clamp_planar(&mut s, xm, ym);
    Ok(s)
}

fn clamp_planar(s: &mut PlacementState, xm: f64, ym: f64) {
    for i in 0..s.len() {
        s.x[i] = s.x[i].clamp(0.0, (xm - s.width[i]).max(0.0));
        s.y[i] = s.y[i].clamp(0.0, (ym - s.height[i]).max(0.0));
    }
}

/// Smoothing parameter for a given overflow: `k·bin·10^(a·overflow + b)`.
pub fn gamma_for(cfg: &GpConfig, bin: f64, overflow: f64) -> f64 {
    cfg.gamma_k * bin * 10f64.powf(cfg.gamma_a * overflow.clamp(0.0, 1.0) + cfg.gamma_b)
}

/// λ growth factor from the wirelength change of the last iteration.
pub fn lambda_growth(cfg: &GpConfig, prev_wl: f64, wl: f64) -> f64 {
    let reference = cfg.mu_ref * prev_wl.abs().max(f64::MIN_POSITIVE);
    let p = (wl - prev_wl) / reference;
    cfg.mu_max.powf(1.0 - p).clamp(cfg.mu_min, cfg.mu_max)
}

/// Next `(γ, λ)` after the last recorded iteration.
pub fn update_schedules(cfg: &GpConfig, trace: &GpTrace, bin: f64) -> Option<(f64, f64)> {
    let last = trace.records.last()?;
    let gamma = gamma_for(cfg, bin, last.overflow);
    let mu = match trace.records.len() {
        1 => 1.0,
        k => lambda_growth(cfg, trace.records[k - 2].wl_exact, last.wl_exact),
    };
    Some((gamma, last.lambda * mu))
}

#[derive(Clone, Debug)]
pub struct GpResult {
    /// Final evaluated state, fillers included.
    pub state: PlacementState,
    /// Committed die per design node.
    pub partition: Vec<Die>,
    pub trace: GpTrace,
    pub iterations: usize,
    pub converged: bool,
    pub alpha: f64,
    /// Fraction of cells whose depth sits within 0.1 of its die's extreme.
    pub polarized: f64,
    /// Cells moved by the capacity repair.
    pub repaired: usize,
}

/// Fraction of design nodes with `|2z/z_max - δ| < 0.1`.
pub fn polarization(state: &PlacementState) -> f64 {
    if state.num_cells == 0 {
        return 1.0;
    }
    let ok = (0..state.num_cells)
        .filter(|&i| (2.0 * state.z[i] / state.z_max - state.partition[i].bit() as f64).abs() < 0.1)
        .count();
    ok as f64 / state.num_cells as f64
}

/// Per-die cell area under the given partition, indexed by `Die::index()`.
pub fn die_areas(design: &Design, partition: &[Die]) -> [f64; 2] {
    let mut a = [0.0; 2];
    for (i, &d) in partition.iter().enumerate().take(design.num_nodes()) {
        a[d.index()] += design.node_area(i, d);
    }
    a
}

fn feasible(design: &Design, partition: &[Die]) -> bool {
    let a = die_areas(design, partition);
    Die::BOTH.iter().all(|&d| a[d.index()] <= design.die(d).capacity() + 1e-9)
}

/// Moves the least polarized cells off an over-capacity die while the other
/// die has room. Returns the number of moved cells.
fn repair_partition(design: &Design, state: &mut PlacementState) -> Result<usize> {
    let mut moved = 0;
    let quarter = state.z_max / 4.0;
    for from in Die::BOTH {
        let to = from.flip();
        let mut areas = die_areas(design, &state.partition);
        if areas[from.index()] <= design.die(from).capacity() {
            continue;
        }
        let mut order: Vec<usize> = (0..state.num_cells).filter(|&i| state.partition[i] == from).collect();
        order.sort_by(|&a, &b| {
            (state.z[a] - quarter).abs().total_cmp(&(state.z[b] - quarter).abs()).then(a.cmp(&b))
        });
        for i in order {
            if areas[from.index()] <= design.die(from).capacity() {
                break;
            }
            let gain = design.node_area(i, to);
            if areas[to.index()] + gain > design.die(to).capacity() {
                continue;
            }
            areas[from.index()] -= design.node_area(i, from);
            areas[to.index()] += gain;
            state.z[i] = if to == Die::Top { state.z_max / 2.0 } else { 0.0 };
            moved += 1;
        }
        if areas[from.index()] > design.die(from).capacity() + 1e-9 {
            return Err(Error::Infeasible(format!(
                "{} die holds {:.1} cell area against a capacity of {:.1}",
                from.name(),
                areas[from.index()],
                design.die(from).capacity()
            )));
        }
    }
    state.refresh_partition()?;
    state.apply_technology(design);
    Ok(moved)
}

/// Gradient evaluation context reused across iterations.
struct Evaluator<'a> {
    design: &'a Design,
    cfg: &'a GpConfig,
    grid: DensityGrid,
    ws: ObjectiveWorkspace,
    wl: WlGradients,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fz: Vec<f64>,
    nets_of: Vec<f64>,
    targets: [f64; 2],
    bin_xy: f64,
    bin_z: f64,
    xm: f64,
    ym: f64,
}

/// Outcome of one evaluation.
#[derive(Clone, Copy, Debug, Default)]
struct Eval {
    smooth: f64,
    bistratal: f64,
    wirelength: f64,
    cut: usize,
    overflow: f64,
    gamma: f64,
}

impl<'a> Evaluator<'a> {
    /// Moves `state` to `pos`, refreshes partition and sizes, re-clamps, and
    /// fills the raw wirelength gradients and density forces.
    fn eval(&mut self, state: &mut PlacementState, pos: &mut [Vec<f64>; 3], alpha: f64) -> Result<Eval> {
        state.x.copy_from_slice(&pos[0]);
        state.y.copy_from_slice(&pos[1]);
        state.z.copy_from_slice(&pos[2]);
        state.refresh_partition()?;
        state.apply_technology(self.design);
        clamp_planar(state, self.xm, self.ym);
        pos[0].copy_from_slice(&state.x);
        pos[1].copy_from_slice(&state.y);

        self.grid.build(state)?;
        let overflow = self.grid.overflow(self.targets);
        self.grid.solve();
        self.grid.forces(state, &mut self.fx, &mut self.fy, &mut self.fz);
        let scale = 1.0 / self.grid.bin_volume();
        for f in [&mut self.fx, &mut self.fy, &mut self.fz] {
            for v in f.iter_mut() {
                *v *= scale;
            }
        }

        let gamma = gamma_for(self.cfg, self.bin_xy, overflow);
        let params = WlParams {
            model: self.cfg.model,
            fda: self.cfg.fda,
            alpha,
            gamma_xy: gamma,
            gamma_z: gamma_for(self.cfg, self.bin_z, overflow),
        };
        let v = total_objective_into(self.design, state, &params, &mut self.wl, &mut self.ws);
        Ok(Eval {
            smooth: v.smooth,
            bistratal: v.bistratal,
            wirelength: v.wirelength,
            cut: v.cut,
            overflow,
            gamma,
        })
    }

    /// Preconditioned gradient of `W + λ·D` into `g`.
    fn combine(&self, state: &PlacementState, lambda: f64, g: &mut [Vec<f64>; 3]) {
        let n = state.len();
        for i in 0..n {
            let q = state.width[i] * state.height[i] * state.depth() / self.grid.bin_volume();
            let h = (self.nets_of[i] + lambda * q).max(1.0);
            g[0][i] = (self.wl.gx[i] - lambda * self.fx[i]) / h;
            g[1][i] = (self.wl.gy[i] - lambda * self.fy[i]) / h;
            g[2][i] = (self.wl.gz[i] - lambda * self.fz[i]) / h;
        }
    }
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn diff_norm2(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3], axes: &[usize]) -> f64 {
    let mut s = 0.0;
    for &k in axes {
        for (x, y) in a[k].iter().zip(&b[k]) {
            s += (x - y) * (x - y);
        }
    }
    s.sqrt()
}

/// Coordinate groups feeding the step estimates: the first sets the planar
/// step, the second (if any) the depth step.
fn step_axes(mode: StepMode) -> &'static [&'static [usize]] {
    match mode {
        StepMode::Joint => &[&[0, 1, 2]],
        StepMode::Planar => &[&[0, 1]],
        StepMode::Split => &[&[0, 1], &[2]],
    }
}

fn all_finite(g: &[Vec<f64>; 3]) -> bool {
    g.iter().all(|v| v.iter().all(|x| x.is_finite()))
}

struct Bounds {
    xm: f64,
    ym: f64,
    half: f64,
}

impl Bounds {
    fn clamp(&self, state: &PlacementState, p: &mut [Vec<f64>; 3]) {
        for i in 0..state.len() {
            p[0][i] = p[0][i].clamp(0.0, (self.xm - state.width[i]).max(0.0));
            p[1][i] = p[1][i].clamp(0.0, (self.ym - state.height[i]).max(0.0));
            p[2][i] = p[2][i].clamp(0.0, self.half);
        }
    }
}

pub fn run_global_place(design: &Design, cfg: &GpConfig) -> Result<GpResult> {
    cfg.validate()?;
    let fillers = if cfg.fillers { insert_fillers(design)? } else { Vec::new() };
    let state = init_placement(design, fillers, cfg)?;
    run_from(design, cfg, state)
}

/// Runs the loop from a given initial state.
pub fn run_from(design: &Design, cfg: &GpConfig, mut state: PlacementState) -> Result<GpResult> {
    cfg.validate()?;
    let spec = design.die(Die::Top);
    let (xm, ym) = (spec.x_max, spec.y_max);
    let dims = GridDims::for_movable(design.num_nodes(), cfg.nz);
    let mut grid = DensityGrid::new(dims, [xm, ym, state.z_max]);
    grid.want_potential = false;
    let n = state.len();
    let mut nets_of = vec![0.0; n];
    for (i, v) in nets_of.iter_mut().enumerate().take(design.num_nodes()) {
        *v = design.node_nets(i).len() as f64;
    }
    let mut ev = Evaluator {
        design,
        cfg,
        bin_xy: 0.5 * (grid.bin[0] + grid.bin[1]),
        bin_z: grid.bin[2],
        grid,
        ws: ObjectiveWorkspace::default(),
        wl: WlGradients::default(),
        fx: vec![0.0; n],
        fy: vec![0.0; n],
        fz: vec![0.0; n],
        nets_of,
        targets: [design.die(Die::Bottom).max_util, design.die(Die::Top).max_util],
        xm,
        ym,
    };
    let bounds = Bounds { xm, ym, half: state.z_max / 2.0 };

    let mut v = [state.x.clone(), state.y.clone(), state.z.clone()];
    let mut alpha = match cfg.alpha {
        AlphaSetting::Fixed(a) => a,
        AlphaSetting::Auto => 0.0,
    };
    let mut e = ev.eval(&mut state, &mut v, alpha)?;
    if cfg.alpha == AlphaSetting::Auto {
        let planar = norm1(&ev.wl.gx) + norm1(&ev.wl.gy);
        let cut = norm1(&ev.wl.gz_cut);
        alpha = if cut > 0.0 { cfg.alpha_ratio * planar / cut } else { 0.0 };
        for i in 0..n {
            ev.wl.gz[i] += alpha * ev.wl.gz_cut[i];
        }
    }
    // Planar norms only: the depth gradient scale depends on the model.
    let wl_norm = norm1(&ev.wl.gx) + norm1(&ev.wl.gy);
    let d_norm = norm1(&ev.fx) + norm1(&ev.fy);
    let mut lambda = if d_norm > 0.0 { wl_norm / d_norm } else { 1.0 };
    if !(lambda.is_finite() && lambda > 0.0) {
        lambda = 1.0;
    }

    let zeros = || [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut g = zeros();
    ev.combine(&state, lambda, &mut g);
    let mut trace = GpTrace::default();
    let record = |trace: &mut GpTrace, iter: usize, e: &Eval, lambda: f64| {
        trace.records.push(GpRecord {
            iter,
            wl_smooth: e.smooth,
            wl_exact: e.bistratal,
            cut: e.cut,
            overflow: e.overflow,
            lambda,
            gamma: e.gamma,
        });
    };
    record(&mut trace, 0, &e, lambda);

    // Initial step from a local Lipschitz estimate.
    let mut step = {
        let gmax = g.iter().flat_map(|c| c.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        let probe = if gmax > 0.0 { 0.1 * ev.bin_xy / gmax } else { 1.0 };
        let mut vp = v.clone();
        for k in 0..3 {
            for i in 0..n {
                vp[k][i] -= probe * g[k][i];
            }
        }
        bounds.clamp(&state, &mut vp);
        let mut probe_state = state.clone();
        ev.eval(&mut probe_state, &mut vp, alpha)?;
        let mut gp = zeros();
        ev.combine(&probe_state, lambda, &mut gp);
        let mut step = [probe; 2];
        for (k, axes) in step_axes(cfg.step_mode).iter().enumerate() {
            let dg = diff_norm2(&g, &gp, axes);
            let dv = diff_norm2(&v, &vp, axes);
            if dg > 0.0 && dv > 0.0 {
                step[k] = dv / dg;
            }
        }
        if cfg.step_mode != StepMode::Split {
            step[1] = step[0];
        }
        step
    };
    // Restore the evaluator buffers at `v`.
    e = ev.eval(&mut state, &mut v, alpha)?;
    ev.combine(&state, lambda, &mut g);

    let mut u = v.clone();
    let mut a = 1.0f64;
    let mut last_good = (u.clone(), v.clone(), g.clone(), a);
    let mut restorations = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut budget = cfg.max_iters;
    let mut boosts = 0;
    let mut prev_wl = e.wirelength;

    let mut it = 0;
    loop {
        if it >= budget {
            break;
        }
        it += 1;
        // Step from the reference point.
        let mut u_new = v.clone();
        for k in 0..3 {
            for i in 0..n {
                u_new[k][i] -= step[k / 2] * g[k][i];
            }
        }
        bounds.clamp(&state, &mut u_new);
        let mut v_new = u_new.clone();
        let a_new = (1.0 + (4.0 * a * a + 1.0).sqrt()) / 2.0;
        if cfg.optimizer == Optimizer::Nesterov {
            let coef = (a - 1.0) / a_new;
            for k in 0..3 {
                for i in 0..n {
                    v_new[k][i] = u_new[k][i] + coef * (u_new[k][i] - u[k][i]);
                }
            }
            bounds.clamp(&state, &mut v_new);
        }
        let e_new = ev.eval(&mut state, &mut v_new, alpha)?;
        let mut g_new = zeros();
        ev.combine(&state, lambda, &mut g_new);
        if !(e_new.smooth.is_finite() && all_finite(&g_new)) {
            restorations += 1;
            if restorations > 5 {
                return Err(Error::Numerical(format!(
                    "objective diverged at iteration {it} after 5 step halvings (step {:e}, λ {lambda:e})",
                    step[0]
                )));
            }
            (u, v, g, a) = last_good.clone();
            step = step.map(|s| s * 0.5);
            ev.eval(&mut state, &mut v, alpha)?;
            ev.combine(&state, lambda, &mut g);
            continue;
        }
        restorations = 0;
        for (k, axes) in step_axes(cfg.step_mode).iter().enumerate() {
            let dv = diff_norm2(&v_new, &v, axes);
            let dg = diff_norm2(&g_new, &g, axes);
            if dg > 0.0 && dv > 0.0 {
                step[k] = dv / dg;
            }
        }
        if cfg.step_mode != StepMode::Split {
            step[1] = step[0];
        }
        u = u_new;
        v = v_new;
        g = g_new;
        a = a_new;
        e = e_new;
        iterations = it;
        last_good = (u.clone(), v.clone(), g.clone(), a);

        lambda *= lambda_growth(cfg, prev_wl, e.wirelength);
        prev_wl = e.wirelength;
        ev.combine(&state, lambda, &mut g);
        record(&mut trace, it, &e, lambda);
        if e.overflow <= cfg.stop_overflow {
            let part: Vec<Die> = state.partition[..design.num_nodes()].to_vec();
            if feasible(design, &part) {
                converged = true;
                break;
            }
            if boosts < cfg.feasibility_boosts {
                boosts += 1;
                lambda *= 2.0;
                ev.combine(&state, lambda, &mut g);
                budget = budget.max(it) + cfg.boost_iters;
            } else {
                break;
            }
        }
    }

    let repaired = if feasible(design, &state.partition[..design.num_nodes()]) {
        0
    } else {
        repair_partition(design, &mut state)?
    };
    clamp_planar(&mut state, xm, ym);
    let partition = state.partition[..design.num_nodes()].to_vec();
    Ok(GpResult {
        polarized: polarization(&state),
        state,
        partition,
        trace,
        iterations,
        converged,
        alpha,
        repaired,
    })
}
