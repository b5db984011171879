// SPDX-License-Identifier: Apache-2.0

//! Wirelength objectives: weighted-average smoothing, plain and bistratal
//! HPWL, the adaptive planar subgradient and the finite-difference depth
//! gradient.

use crate::model::{Design, Die, PlacementState};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn include(&mut self, v: f64) {
        self.lo = self.lo.min(v);
        self.hi = self.hi.max(v);
    }

    pub fn union(self, o: Span) -> Span {
        Span { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Span> {
        let mut it = values.into_iter();
        let mut s = Span::point(it.next()?);
        for v in it {
            s.include(v);
        }
        Some(s)
    }
}

/// Axis-aligned box as an x span and a y span.
pub type Box2 = [Span; 2];

fn union_opt(a: Option<Box2>, b: Option<Box2>) -> Option<Box2> {
    match (a, b) {
        (Some(a), Some(b)) => Some([a[0].union(b[0]), a[1].union(b[1])]),
        (a, None) => a,
        (None, b) => b,
    }
}

fn include_box(b: &mut Option<Box2>, x: f64, y: f64) {
    match b {
        Some(bx) => {
            bx[0].include(x);
            bx[1].include(y);
        }
        None => *b = Some([Span::point(x), Span::point(y)]),
    }
}

/// Bounding boxes of a net and of its two partial nets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetBoxes {
    pub full: Box2,
    pub top: Option<Box2>,
    pub bottom: Option<Box2>,
}

impl NetBoxes {
    pub fn from_pins(pins: &[PinGeom]) -> Option<NetBoxes> {
        let (mut top, mut bottom) = (None, None);
        for p in pins {
            let b = if p.die == Die::Top { &mut top } else { &mut bottom };
            include_box(b, p.x, p.y);
        }
        Some(NetBoxes { full: union_opt(top, bottom)?, top, bottom })
    }

    pub fn side(&self, die: Die) -> Option<Box2> {
        match die {
            Die::Top => self.top,
            Die::Bottom => self.bottom,
        }
    }

    pub fn is_split(&self) -> bool {
        self.top.is_some() && self.bottom.is_some()
    }
}

/// Pin location with the die of its node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinGeom {
    pub x: f64,
    pub y: f64,
    pub die: Die,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WlModel {
    /// Per axis `max{p_e, p_e+ + p_e-}`.
    Bistratal,
    /// Partition-blind HPWL.
    Plain,
}

/// Peak-to-peak extent; 0 for an empty slice.
pub fn peak(coords: &[f64]) -> f64 {
    Span::of(coords.iter().copied()).map_or(0.0, |s| s.len())
}

/// Weighted-average smoothed extent; writes the gradient into `grad`.
pub fn wa_into(coords: &[f64], gamma: f64, grad: &mut [f64]) -> f64 {
    debug_assert_eq!(coords.len(), grad.len());
    if coords.len() <= 1 {
        grad.fill(0.0);
        return 0.0;
    }
    let mx = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut sp, mut spx, mut sn, mut snx) = (0.0, 0.0, 0.0, 0.0);
    for &c in coords {
        let (dp, dn) = (c - mx, c - mn);
        let ep = (dp / gamma).exp();
        let en = (-dn / gamma).exp();
        sp += ep;
        spx += dp * ep;
        sn += en;
        snx += dn * en;
    }
    // Weighted means relative to the extremes.
    let a = spx / sp;
    let b = snx / sn;
    for (g, &c) in grad.iter_mut().zip(coords) {
        let (dp, dn) = (c - mx, c - mn);
        let ep = (dp / gamma).exp();
        let en = (-dn / gamma).exp();
        *g = ep * (gamma + dp - a) / (gamma * sp) - en * (gamma + b - dn) / (gamma * sn);
    }
    (mx - mn) + a - b
}

pub fn wa_value(coords: &[f64], gamma: f64) -> f64 {
    let mut g = vec![0.0; coords.len()];
    wa_into(coords, gamma, &mut g)
}

/// Smoothed extent and its gradient.
pub fn wa_p2p(coords: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; coords.len()];
    let v = wa_into(coords, gamma, &mut g);
    (v, g)
}

pub fn plain_hpwl(pins: &[(f64, f64)]) -> f64 {
    let xs = Span::of(pins.iter().map(|p| p.0));
    let ys = Span::of(pins.iter().map(|p| p.1));
    xs.map_or(0.0, |s| s.len()) + ys.map_or(0.0, |s| s.len())
}

/// One-axis wirelength from the partial-net spans.
pub fn axis_wl(top: Option<Span>, bottom: Option<Span>, model: WlModel) -> f64 {
    match (top, bottom) {
        (None, None) => 0.0,
        (Some(s), None) | (None, Some(s)) => s.len(),
        (Some(t), Some(b)) => {
            let full = t.union(b).len();
            match model {
                WlModel::Bistratal => full.max(t.len() + b.len()),
                WlModel::Plain => full,
            }
        }
    }
}

pub fn boxes_wl(top: Option<Box2>, bottom: Option<Box2>, model: WlModel) -> f64 {
    axis_wl(top.map(|b| b[0]), bottom.map(|b| b[0]), model)
        + axis_wl(top.map(|b| b[1]), bottom.map(|b| b[1]), model)
}

pub fn bistratal_wl(pins: &[PinGeom]) -> f64 {
    model_wl(pins, WlModel::Bistratal)
}

pub fn model_wl(pins: &[PinGeom], model: WlModel) -> f64 {
    NetBoxes::from_pins(pins).map_or(0.0, |b| boxes_wl(b.top, b.bottom, model))
}

/// Whether the split branch is active on an axis: `p_e+ + p_e- > p_e`.
pub fn split_branch(top: Option<Span>, bottom: Option<Span>) -> bool {
    match (top, bottom) {
        (Some(t), Some(b)) => t.len() + b.len() > t.union(b).len(),
        _ => false,
    }
}

/// Scratch buffers reused across nets.
#[derive(Default, Debug)]
pub struct Scratch {
    sub: Vec<f64>,
    subg: Vec<f64>,
    idx: Vec<usize>,
}

/// Adaptive subgradient on one axis. Returns the smoothed value of the
/// selected branch and writes per-pin gradients into `grad`.
pub fn planar_axis(
    coords: &[f64],
    dies: &[Die],
    gamma: f64,
    model: WlModel,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let (mut top, mut bottom): (Option<Span>, Option<Span>) = (None, None);
    for (&c, &d) in coords.iter().zip(dies) {
        let s = if d == Die::Top { &mut top } else { &mut bottom };
        match s {
            Some(s) => s.include(c),
            None => *s = Some(Span::point(c)),
        }
    }
    if model == WlModel::Bistratal && split_branch(top, bottom) {
        let mut total = 0.0;
        for side in Die::BOTH {
            scratch.idx.clear();
            scratch.sub.clear();
            for (k, (&c, &d)) in coords.iter().zip(dies).enumerate() {
                if d == side {
                    scratch.idx.push(k);
                    scratch.sub.push(c);
                }
            }
            scratch.subg.clear();
            scratch.subg.resize(scratch.sub.len(), 0.0);
            total += wa_into(&scratch.sub, gamma, &mut scratch.subg);
            for (&k, &g) in scratch.idx.iter().zip(&scratch.subg) {
                grad[k] = g;
            }
        }
        total
    } else {
        wa_into(coords, gamma, grad)
    }
}

/// Per-pin planar gradient `(d/dx, d/dy)` of one net.
pub fn planar_gradient(pins: &[PinGeom], gamma: f64, model: WlModel) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = pins.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pins.iter().map(|p| p.y).collect();
    let dies: Vec<Die> = pins.iter().map(|p| p.die).collect();
    let mut gx = vec![0.0; pins.len()];
    let mut gy = vec![0.0; pins.len()];
    let mut s = Scratch::default();
    planar_axis(&xs, &dies, gamma, model, &mut gx, &mut s);
    planar_axis(&ys, &dies, gamma, model, &mut gy, &mut s);
    gx.into_iter().zip(gy).collect()
}

/// Pin view used by the depth gradient: node corner plus offsets per die.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdaPin {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    /// Offsets indexed by `Die::index()`.
    pub off: [(f64, f64); 2],
    pub die: Die,
}

impl FdaPin {
    fn pos(&self, die: Die) -> (f64, f64) {
        let (dx, dy) = self.off[die.index()];
        (self.x + dx, self.y + dy)
    }
}

/// Depth gradient by full recomputation with `node` forced onto each die.
pub fn fda_depth_gradient(pins: &[FdaPin], node: usize, z_max: f64, model: WlModel) -> f64 {
    let eval = |forced: Die| {
        let (mut top, mut bottom) = (None, None);
        for p in pins {
            let die = if p.node == node { forced } else { p.die };
            let (x, y) = p.pos(die);
            include_box(if die == Die::Top { &mut top } else { &mut bottom }, x, y);
        }
        boxes_wl(top, bottom, model)
    };
    let w_top = eval(Die::Top);
    let w_bottom = eval(Die::Bottom);
    4.0 / z_max * (w_top - w_bottom)
}

#[derive(Clone, Copy, Debug)]
struct Extreme {
    val: f64,
    node: usize,
}

/// Best two extremes from distinct nodes.
#[derive(Clone, Copy, Debug)]
struct Top2 {
    first: Option<Extreme>,
    second: Option<Extreme>,
}

impl Top2 {
    const EMPTY: Top2 = Top2 { first: None, second: None };

    fn offer(&mut self, val: f64, node: usize, better: fn(f64, f64) -> bool) {
        let e = Extreme { val, node };
        match self.first {
            None => self.first = Some(e),
            Some(f) if better(val, f.val) => {
                self.second = self.first;
                self.first = Some(e);
            }
            Some(_) => match self.second {
                Some(s) if !better(val, s.val) => {}
                _ => self.second = Some(e),
            },
        }
    }

    fn without(&self, node: usize) -> Option<f64> {
        match self.first {
            Some(f) if f.node == node => self.second.map(|s| s.val),
            Some(f) => Some(f.val),
            None => None,
        }
    }
}

fn lt(a: f64, b: f64) -> bool {
    a < b
}

fn gt(a: f64, b: f64) -> bool {
    a > b
}

/// Per-side extremes `[x_lo, x_hi, y_lo, y_hi]` with runner-ups.
#[derive(Clone, Copy, Debug)]
struct SideExtremes {
    e: [Top2; 4],
}

impl SideExtremes {
    const EMPTY: SideExtremes = SideExtremes { e: [Top2::EMPTY; 4] };

    fn offer(&mut self, b: &Box2, node: usize) {
        self.e[0].offer(b[0].lo, node, lt);
        self.e[1].offer(b[0].hi, node, gt);
        self.e[2].offer(b[1].lo, node, lt);
        self.e[3].offer(b[1].hi, node, gt);
    }

    fn without(&self, node: usize) -> Option<Box2> {
        let xl = self.e[0].without(node)?;
        Some([
            Span { lo: xl, hi: self.e[1].without(node)? },
            Span { lo: self.e[2].without(node)?, hi: self.e[3].without(node)? },
        ])
    }
}

/// Depth gradients of every distinct node of one net using per-side
/// extreme tracking. `out` receives `(node, g)` pairs in first-pin order.
/// Results are bitwise identical to [`fda_depth_gradient`].
pub fn fda_net(
    pins: &[FdaPin],
    z_max: f64,
    model: WlModel,
    nodes: &mut Vec<(usize, Die, [Option<Box2>; 2])>,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    nodes.clear();
    for p in pins {
        let slot = match nodes.iter().position(|n| n.0 == p.node) {
            Some(k) => k,
            None => {
                nodes.push((p.node, p.die, [None, None]));
                nodes.len() - 1
            }
        };
        for d in Die::BOTH {
            let (x, y) = p.pos(d);
            include_box(&mut nodes[slot].2[d.index()], x, y);
        }
    }
    let mut sides = [SideExtremes::EMPTY; 2];
    for (node, die, b) in nodes.iter() {
        sides[die.index()].offer(b[die.index()].as_ref().unwrap(), *node);
    }
    let scale = 4.0 / z_max;
    for (node, _, b) in nodes.iter() {
        let top_rest = sides[Die::Top.index()].without(*node);
        let bottom_rest = sides[Die::Bottom.index()].without(*node);
        let w_top = boxes_wl(union_opt(top_rest, b[Die::Top.index()]), bottom_rest, model);
        let w_bottom = boxes_wl(top_rest, union_opt(bottom_rest, b[Die::Bottom.index()]), model);
        out.push((*node, scale * (w_top - w_bottom)));
    }
}

/// Objective settings for one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WlParams {
    pub model: WlModel,
    pub fda: bool,
    pub alpha: f64,
    pub gamma_xy: f64,
    pub gamma_z: f64,
}

/// Per-node gradients of the wirelength objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WlGradients {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    /// Total depth gradient: depth differences plus `alpha` times the cut term.
    pub gz: Vec<f64>,
    /// Unweighted gradient of the smoothed cut term.
    pub gz_cut: Vec<f64>,
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WlValue {
    /// Exact model wirelength plus `alpha` times the exact z extent.
    pub exact: f64,
    /// Smoothed counterpart used by the gradients.
    pub smooth: f64,
    /// Exact model wirelength alone.
    pub wirelength: f64,
    /// Exact bistratal wirelength, whatever the model.
    pub bistratal: f64,
    /// Number of split nets.
    pub cut: usize,
}

/// Reusable buffers for [`total_objective_into`].
#[derive(Default, Debug)]
pub struct ObjectiveWorkspace {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    dies: Vec<Die>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    gz: Vec<f64>,
    fda_pins: Vec<FdaPin>,
    fda_nodes: Vec<(usize, Die, [Option<Box2>; 2])>,
    fda_out: Vec<(usize, f64)>,
    scratch: Scratch,
}

pub fn total_objective(design: &Design, state: &PlacementState, params: &WlParams) -> (WlValue, WlGradients) {
    let mut g = WlGradients::default();
    let mut ws = ObjectiveWorkspace::default();
    let v = total_objective_into(design, state, params, &mut g, &mut ws);
    (v, g)
}

/// Evaluates the objective, overwriting `grads`. Nets are visited in index
/// order so accumulation is reproducible.
pub fn total_objective_into(
    design: &Design,
    state: &PlacementState,
    params: &WlParams,
    grads: &mut WlGradients,
    ws: &mut ObjectiveWorkspace,
) -> WlValue {
    let n = state.len();
    for v in [&mut grads.gx, &mut grads.gy, &mut grads.gz, &mut grads.gz_cut] {
        v.clear();
        v.resize(n, 0.0);
    }
    grads.gamma = params.gamma_xy;
    grads.alpha = params.alpha;
    let mut value = WlValue::default();
    let mut z_exact = 0.0;
    let mut z_smooth = 0.0;
    let zoff = state.pin_z_offset();
    for e in 0..design.num_nets() {
        let pins = design.net_pins(e);
        let k = pins.len();
        ws.xs.clear();
        ws.ys.clear();
        ws.zs.clear();
        ws.dies.clear();
        for p in pins.clone() {
            let v = design.pin_node(p);
            ws.xs.push(state.x[v] + state.pin_dx[p]);
            ws.ys.push(state.y[v] + state.pin_dy[p]);
            ws.zs.push(state.z[v] + zoff);
            ws.dies.push(state.partition[v]);
        }
        let (mut top, mut bottom) = (None, None);
        for i in 0..k {
            let b = if ws.dies[i] == Die::Top { &mut top } else { &mut bottom };
            include_box(b, ws.xs[i], ws.ys[i]);
        }
        let bi = boxes_wl(top, bottom, WlModel::Bistratal);
        value.bistratal += bi;
        value.wirelength += match params.model {
            WlModel::Bistratal => bi,
            WlModel::Plain => boxes_wl(top, bottom, WlModel::Plain),
        };
        if top.is_some() && bottom.is_some() {
            value.cut += 1;
        }
        if k < 2 {
            continue;
        }
        ws.gx.clear();
        ws.gx.resize(k, 0.0);
        ws.gy.clear();
        ws.gy.resize(k, 0.0);
        ws.gz.clear();
        ws.gz.resize(k, 0.0);
        value.smooth +=
            planar_axis(&ws.xs, &ws.dies, params.gamma_xy, params.model, &mut ws.gx, &mut ws.scratch);
        value.smooth +=
            planar_axis(&ws.ys, &ws.dies, params.gamma_xy, params.model, &mut ws.gy, &mut ws.scratch);
        z_exact += peak(&ws.zs);
        z_smooth += wa_into(&ws.zs, params.gamma_z, &mut ws.gz);
        for (i, p) in pins.clone().enumerate() {
            let v = design.pin_node(p);
            grads.gx[v] += ws.gx[i];
            grads.gy[v] += ws.gy[i];
            grads.gz_cut[v] += ws.gz[i];
        }
        if params.fda {
            ws.fda_pins.clear();
            for p in pins {
                let v = design.pin_node(p);
                ws.fda_pins.push(FdaPin {
                    node: v,
                    x: state.x[v],
                    y: state.y[v],
                    off: [design.pin_offset(p, Die::Bottom), design.pin_offset(p, Die::Top)],
                    die: state.partition[v],
                });
            }
            fda_net(&ws.fda_pins, state.z_max, params.model, &mut ws.fda_nodes, &mut ws.fda_out);
            for &(v, g) in &ws.fda_out {
                grads.gz[v] += g;
            }
        }
    }
    for v in 0..n {
        grads.gz[v] += params.alpha * grads.gz_cut[v];
    }
    value.exact = value.wirelength + params.alpha * z_exact;
    value.smooth += params.alpha * z_smooth;
    value
}
