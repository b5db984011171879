// SPDX-License-Identifier: Apache-2.0

//! Wirelength refinement of a legal solution: cell swaps toward each cell's
//! optimal point, window reordering, and terminal re-assignment.

use crate::error::{Error, Result};
use crate::evaluate::{exact_d2d_wl, exact_net_wl, terminal_map};
use crate::hbt::{assign_hbts, optimal_region};
use crate::legalize::{legalize_hbts, LegalizeOptions, RowMap};
use crate::model::{Design, Die, Solution};
use crate::wirelength::{PinGeom, Span};

const GAIN_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetailOptions {
    pub rounds: usize,
    pub max_candidates: usize,
    pub window: usize,
    pub legalize: LegalizeOptions,
    /// Recompute the exact wirelength after every commit and fail if it rose.
    pub audit: bool,
}

impl Default for DetailOptions {
    fn default() -> Self {
        Self { rounds: 2, max_candidates: 10, window: 3, legalize: LegalizeOptions::default(), audit: false }
    }
}

/// Exact wirelength tracker for audited runs.
struct Audit {
    last: Option<f64>,
}

impl Audit {
    fn new(design: &Design, sol: &Solution, on: bool) -> Result<Self> {
        Ok(Self { last: if on { Some(exact_d2d_wl(design, sol)?.0) } else { None } })
    }

    fn check(&mut self, design: &Design, sol: &Solution, what: &str) -> Result<()> {
        if let Some(prev) = self.last {
            let now = exact_d2d_wl(design, sol)?.0;
            if now > prev + 1e-9 * prev.abs().max(1.0) {
                return Err(Error::Numerical(format!("{what} raised the wirelength from {prev} to {now}")));
            }
            self.last = Some(now);
        }
        Ok(())
    }
}

/// Exact per-net wirelength with terminal centers held fixed.
struct NetScorer<'a> {
    design: &'a Design,
    term: Vec<Option<(f64, f64)>>,
    buf: Vec<PinGeom>,
}

impl<'a> NetScorer<'a> {
    fn new(design: &'a Design, sol: &Solution) -> Result<Self> {
        let map = terminal_map(design, sol)?;
        let term = map.iter().map(|k| k.map(|k| sol.terminal_center(design, &sol.terminals[k]))).collect();
        Ok(Self { design, term, buf: Vec::new() })
    }

    fn net(&mut self, sol: &Solution, e: usize) -> f64 {
        self.buf.clear();
        for p in self.design.net_pins(e) {
            let v = self.design.pin_node(p);
            let (dx, dy) = self.design.pin_offset(p, sol.die[v]);
            self.buf.push(PinGeom { x: sol.x[v] + dx, y: sol.y[v] + dy, die: sol.die[v] });
        }
        exact_net_wl(&self.buf, self.term[e])
    }

    fn nets(&mut self, sol: &Solution, nets: &[usize]) -> f64 {
        nets.iter().map(|&e| self.net(sol, e)).sum()
    }
}

/// Cells of one die organized by row, each row sorted by x.
struct RowIndex {
    map: RowMap,
    rows: Vec<Vec<usize>>,
    row_of: Vec<usize>,
}

impl RowIndex {
    fn new(design: &Design, sol: &Solution, die: Die, site: f64) -> Self {
        let map = RowMap::for_die(design, die, site);
        let mut rows = vec![Vec::new(); map.rows.len()];
        let mut row_of = vec![usize::MAX; design.num_nodes()];
        for i in (0..design.num_nodes()).filter(|&i| sol.die[i] == die) {
            let r = map.rows.partition_point(|row| row.y < sol.y[i] - 1e-6).min(map.rows.len() - 1);
            rows[r].push(i);
            row_of[i] = r;
        }
        for r in &mut rows {
            r.sort_by(|&a, &b| sol.x[a].total_cmp(&sol.x[b]).then(a.cmp(&b)));
        }
        Self { map, rows, row_of }
    }

    fn nearest_row(&self, y: f64) -> usize {
        let k = self.map.rows.partition_point(|r| r.y < y);
        if k == 0 {
            0
        } else if k == self.map.rows.len() || y - self.map.rows[k - 1].y <= self.map.rows[k].y - y {
            k - 1
        } else {
            k
        }
    }

    fn resort(&mut self, r: usize, sol: &Solution) {
        self.rows[r].sort_by(|&a, &b| sol.x[a].total_cmp(&sol.x[b]).then(a.cmp(&b)));
    }

    /// Free span around position `k` of row `r` ignoring the cells in `skip`.
    fn span_at(&self, r: usize, k: usize, skip: &[usize], sol: &Solution, design: &Design, die: Die) -> (f64, f64) {
        let row = &self.map.rows[r];
        let cells = &self.rows[r];
        let lo = cells[..k]
            .iter()
            .rev()
            .find(|c| !skip.contains(c))
            .map_or(row.x_start, |&c| sol.x[c] + design.node_size(c, die).0);
        let hi = cells[k + 1..].iter().find(|c| !skip.contains(c)).map_or(row.x_end, |&c| sol.x[c]);
        (lo, hi)
    }
}

fn snap_into(map: &RowMap, r: usize, want: f64, lo: f64, hi: f64, w: f64) -> Option<f64> {
    let row = &map.rows[r];
    let s = map.site;
    let a = row.x_start + ((lo - row.x_start) / s - 1e-7).ceil() * s;
    let b = row.x_start + ((hi - w - row.x_start) / s + 1e-7).floor() * s;
    if a > b + 1e-9 {
        return None;
    }
    Some((row.x_start + ((want - row.x_start) / s).round() * s).clamp(a, b))
}

/// Median point of the intervals spanned by each incident net without `i`.
fn optimal_point(design: &Design, sol: &Solution, scorer: &NetScorer, i: usize) -> Option<(f64, f64)> {
    let die = sol.die[i];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &e in design.node_nets(i) {
        let mut bx: Option<[f64; 4]> = None;
        let mut add = |x: f64, y: f64| {
            let b = bx.get_or_insert([x, x, y, y]);
            b[0] = b[0].min(x);
            b[1] = b[1].max(x);
            b[2] = b[2].min(y);
            b[3] = b[3].max(y);
        };
        for p in design.net_pins(e) {
            let v = design.pin_node(p);
            if v != i && sol.die[v] == die {
                let (dx, dy) = design.pin_offset(p, die);
                add(sol.x[v] + dx, sol.y[v] + dy);
            }
        }
        if let Some((tx, ty)) = scorer.term[e] {
            add(tx, ty);
        }
        if let Some(b) = bx {
            xs.extend([b[0], b[1]]);
            ys.extend([b[2], b[3]]);
        }
    }
    if xs.is_empty() {
        return None;
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[(v.len() - 1) / 2] + v[v.len() / 2]) / 2.0
    };
    // Shift from pin space to the node corner by the mean pin offset.
    let pins = design.node_pins(i);
    let (mut ox, mut oy) = (0.0, 0.0);
    for &p in pins {
        let (dx, dy) = design.pin_offset(p, die);
        ox += dx / pins.len() as f64;
        oy += dy / pins.len() as f64;
    }
    Some((med(&mut xs) - ox, med(&mut ys) - oy))
}

enum Move {
    Swap(usize),
    Gap { row: usize, x: f64 },
}

/// Union of the distinct nets of two nodes.
fn nets_of(design: &Design, a: usize, b: Option<usize>) -> Vec<usize> {
    let mut v = design.node_nets(a).to_vec();
    if let Some(b) = b {
        v.extend_from_slice(design.node_nets(b));
        v.sort_unstable();
        v.dedup();
    }
    v
}

/// Moves each cell of `die` to the best of its nearest swap partners or free
/// gaps when that strictly lowers the exact wirelength. Returns the number
/// of committed moves.
pub fn global_swap(design: &Design, sol: &mut Solution, die: Die, opts: &DetailOptions) -> Result<usize> {
    let mut scorer = NetScorer::new(design, sol)?;
    let mut idx = RowIndex::new(design, sol, die, opts.legalize.site);
    if idx.map.rows.is_empty() {
        return Ok(0);
    }
    let mut audit = Audit::new(design, sol, opts.audit)?;
    let mut commits = 0;
    for i in (0..design.num_nodes()).filter(|&i| sol.die[i] == die) {
        let Some((tx, ty)) = optimal_point(design, sol, &scorer, i) else {
            continue;
        };
        let wi = design.node_size(i, die).0;
        let ri = idx.row_of[i];
        let ki = idx.rows[ri].iter().position(|&c| c == i).unwrap();
        let (ilo, ihi) = idx.span_at(ri, ki, &[i], sol, design, die);

        // (distance, move)
        let mut cands: Vec<(f64, Move)> = Vec::new();
        let r0 = idx.nearest_row(ty);
        for r in r0.saturating_sub(1)..=(r0 + 1).min(idx.map.rows.len() - 1) {
            let ry = idx.map.rows[r].y;
            let cells = &idx.rows[r];
            let pos = cells.partition_point(|&c| sol.x[c] < tx);
            let from = pos.saturating_sub(opts.max_candidates / 2 + 1);
            let to = (pos + opts.max_candidates / 2 + 1).min(cells.len());
            for k in from..to {
                let j = cells[k];
                if j == i {
                    continue;
                }
                cands.push(((sol.x[j] - tx).abs() + (ry - ty).abs(), Move::Swap(j)));
            }
            // Gaps between consecutive cells other than `i`.
            let others: Vec<usize> = cells[from..to].iter().copied().filter(|&c| c != i).collect();
            let row = &idx.map.rows[r];
            let left_edge = if from == 0 { row.x_start } else { f64::NAN };
            let right_edge = if to == cells.len() { row.x_end } else { f64::NAN };
            let mut bounds: Vec<(f64, f64)> = Vec::new();
            let mut prev_end = left_edge;
            for &c in &others {
                if !prev_end.is_nan() {
                    bounds.push((prev_end, sol.x[c]));
                }
                prev_end = sol.x[c] + design.node_size(c, die).0;
            }
            if others.is_empty() {
                if from == 0 && to == cells.len() {
                    bounds.push((row.x_start, row.x_end));
                }
            } else if !right_edge.is_nan() {
                bounds.push((prev_end, right_edge));
            }
            for (lo, hi) in bounds {
                if let Some(x) = snap_into(&idx.map, r, tx, lo, hi, wi) {
                    cands.push(((x - tx).abs() + (ry - ty).abs(), Move::Gap { row: r, x }));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        cands.truncate(opts.max_candidates);

        let (xi, yi) = (sol.x[i], sol.y[i]);
        let mut best: Option<(f64, Move, f64, f64, f64, f64)> = None;
        for (_, mv) in cands {
            match mv {
                Move::Gap { row, x } => {
                    let nets = nets_of(design, i, None);
                    let before = scorer.nets(sol, &nets);
                    sol.x[i] = x;
                    sol.y[i] = idx.map.rows[row].y;
                    let delta = scorer.nets(sol, &nets) - before;
                    sol.x[i] = xi;
                    sol.y[i] = yi;
                    if best.as_ref().is_none_or(|b| delta < b.0) {
                        best = Some((delta, Move::Gap { row, x }, x, idx.map.rows[row].y, 0.0, 0.0));
                    }
                }
                Move::Swap(j) => {
                    let rj = idx.row_of[j];
                    let kj = idx.rows[rj].iter().position(|&c| c == j).unwrap();
                    let wj = design.node_size(j, die).0;
                    let (nxi, nxj) = if rj == ri && (ki + 1 == kj || kj + 1 == ki) {
                        // Neighbors trade places inside their joint extent.
                        if kj > ki {
                            (sol.x[j] + wj - wi, xi)
                        } else {
                            (sol.x[j], xi + wi - wj)
                        }
                    } else {
                        let (jlo, jhi) = idx.span_at(rj, kj, &[i, j], sol, design, die);
                        let Some(nxi) = snap_into(&idx.map, rj, sol.x[j], jlo, jhi, wi) else {
                            continue;
                        };
                        let Some(nxj) = snap_into(&idx.map, ri, xi, ilo, ihi, wj) else {
                            continue;
                        };
                        (nxi, nxj)
                    };
                    let (xj, yj) = (sol.x[j], sol.y[j]);
                    let nets = nets_of(design, i, Some(j));
                    let before = scorer.nets(sol, &nets);
                    sol.x[i] = nxi;
                    sol.y[i] = yj;
                    sol.x[j] = nxj;
                    sol.y[j] = yi;
                    let delta = scorer.nets(sol, &nets) - before;
                    sol.x[i] = xi;
                    sol.y[i] = yi;
                    sol.x[j] = xj;
                    sol.y[j] = yj;
                    if best.as_ref().is_none_or(|b| delta < b.0) {
                        best = Some((delta, Move::Swap(j), nxi, yj, nxj, yi));
                    }
                }
            }
        }
        let Some((delta, mv, nx, ny, mx, my)) = best else {
            continue;
        };
        if delta >= -GAIN_EPS {
            continue;
        }
        commits += 1;
        sol.x[i] = nx;
        sol.y[i] = ny;
        let new_ri = idx.nearest_row(ny);
        idx.rows[ri].retain(|&c| c != i);
        idx.rows[new_ri].push(i);
        idx.row_of[i] = new_ri;
        if let Move::Swap(j) = mv {
            sol.x[j] = mx;
            sol.y[j] = my;
            let rj = idx.row_of[j];
            idx.rows[rj].retain(|&c| c != j);
            idx.rows[ri].push(j);
            idx.row_of[j] = ri;
        }
        idx.resort(ri, sol);
        idx.resort(new_ri, sol);
        audit.check(design, sol, "global swap")?;
    }
    Ok(commits)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Tries every order of `window` consecutive cells in each row, keeping the
/// first slot and the gaps between slots; commits strict improvements.
pub fn local_reorder(design: &Design, sol: &mut Solution, die: Die, opts: &DetailOptions) -> Result<usize> {
    let k = opts.window.clamp(1, 4);
    if k < 2 {
        return Ok(0);
    }
    let mut scorer = NetScorer::new(design, sol)?;
    let idx = RowIndex::new(design, sol, die, opts.legalize.site);
    let perms = permutations(k);
    let mut audit = Audit::new(design, sol, opts.audit)?;
    let mut commits = 0;
    for row in &idx.rows {
        let mut order = row.clone();
        if order.len() < k {
            continue;
        }
        for s in 0..=order.len() - k {
            let win: Vec<usize> = order[s..s + k].to_vec();
            let widths: Vec<f64> = win.iter().map(|&c| design.node_size(c, die).0).collect();
            let gaps: Vec<f64> = (0..k - 1).map(|t| sol.x[win[t + 1]] - (sol.x[win[t]] + widths[t])).collect();
            let start = sol.x[win[0]];
            let orig: Vec<f64> = win.iter().map(|&c| sol.x[c]).collect();
            let mut nets: Vec<usize> = win.iter().flat_map(|&c| design.node_nets(c).iter().copied()).collect();
            nets.sort_unstable();
            nets.dedup();
            let base = scorer.nets(sol, &nets);
            let mut best = (base, None::<&Vec<usize>>);
            for p in perms.iter().skip(1) {
                let mut x = start;
                for (t, &q) in p.iter().enumerate() {
                    sol.x[win[q]] = x;
                    x += widths[q] + if t + 1 < k { gaps[t] } else { 0.0 };
                }
                let v = scorer.nets(sol, &nets);
                if v < best.0 - GAIN_EPS {
                    best = (v, Some(p));
                }
            }
            for (t, &c) in win.iter().enumerate() {
                sol.x[c] = orig[t];
            }
            if let Some(p) = best.1 {
                let mut x = start;
                for (t, &q) in p.iter().enumerate() {
                    sol.x[win[q]] = x;
                    x += widths[q] + if t + 1 < k { gaps[t] } else { 0.0 };
                }
                for (t, &q) in p.iter().enumerate() {
                    order[s + t] = win[q];
                }
                commits += 1;
                audit.check(design, sol, "local reorder")?;
            }
        }
    }
    Ok(commits)
}

/// Terminal corners bucketed on a `pitch` grid for spacing queries.
struct TerminalGrid {
    pitch: f64,
    cells: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl TerminalGrid {
    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.pitch).floor() as i64, (y / self.pitch).floor() as i64)
    }

    fn insert(&mut self, k: usize, x: f64, y: f64) {
        let key = self.key(x, y);
        self.cells.entry(key).or_default().push(k);
    }

    fn remove(&mut self, k: usize, x: f64, y: f64) {
        let key = self.key(x, y);
        if let Some(v) = self.cells.get_mut(&key) {
            v.retain(|&j| j != k);
        }
    }

    /// Whether terminal `k` fits at `(x, y)` against every other terminal.
    fn fits(&self, sol: &Solution, k: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.key(x, y);
        for bx in cx - 1..=cx + 1 {
            for by in cy - 1..=cy + 1 {
                for &j in self.cells.get(&(bx, by)).map_or(&[][..], |v| &v[..]) {
                    let t = &sol.terminals[j];
                    if j != k && (t.x - x).abs() < self.pitch - 1e-9 && (t.y - y).abs() < self.pitch - 1e-9 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Moves each terminal to the free site-aligned corner nearest its optimal
/// region when that lowers its net's wirelength. Returns the number of moves.
pub fn shift_terminals(design: &Design, sol: &mut Solution, opts: &DetailOptions) -> Result<usize> {
    if sol.terminals.is_empty() {
        return Ok(0);
    }
    let w = design.terminal_size();
    let s = design.terminal_spacing();
    let c = opts.legalize.terminal_clearance.unwrap_or(s / 2.0);
    let site = opts.legalize.site;
    let pitch = w + s;
    let top = design.die(Die::Top);
    let lo = (c / site - 1e-9).ceil() * site;
    let hi = [(top.x_max - c - w), (top.y_max - c - w)].map(|v| (v / site + 1e-9).floor() * site);
    let mut grid = TerminalGrid { pitch, cells: Default::default() };
    for (k, t) in sol.terminals.iter().enumerate() {
        grid.insert(k, t.x, t.y);
    }
    let mut audit = Audit::new(design, sol, opts.audit)?;
    let reach = (2.0 * pitch / site).ceil() as i64;
    let mut moves = 0;
    for k in 0..sol.terminals.len() {
        let net = sol.terminals[k].net;
        let pins = crate::evaluate::net_geoms(design, net, &sol.die, &sol.x, &sol.y);
        let Ok(region) = optimal_region(&pins) else {
            continue;
        };
        let t = sol.terminals[k];
        let inside = |span: Span, v: f64| span.lo <= v + w / 2.0 && v + w / 2.0 <= span.hi;
        if inside(region[0], t.x) && inside(region[1], t.y) {
            continue;
        }
        let wl_of = |x: f64, y: f64| exact_net_wl(&pins, Some((x + w / 2.0, y + w / 2.0)));
        let now = wl_of(t.x, t.y);
        // Corner of the region point nearest the current center, on the site grid.
        let toward = |span: Span, cur: f64, axis: usize| -> f64 {
            let v = (cur + w / 2.0).clamp(span.lo, span.hi) - w / 2.0;
            ((v / site).round() * site).clamp(lo, hi[axis])
        };
        let (ax, ay) = (toward(region[0], t.x, 0), toward(region[1], t.y, 1));
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for i in -reach..=reach {
            for j in -reach..=reach {
                let (x, y) = (ax + i as f64 * site, ay + j as f64 * site);
                if x < lo - 1e-9 || y < lo - 1e-9 || x > hi[0] + 1e-9 || y > hi[1] + 1e-9 {
                    continue;
                }
                let wl = wl_of(x, y);
                if wl >= now - GAIN_EPS * now.max(1.0) {
                    continue;
                }
                let dist = (x - t.x).abs() + (y - t.y).abs();
                if best.is_some_and(|b| (wl, dist) >= (b.0, b.1)) {
                    continue;
                }
                if grid.fits(sol, k, x, y) {
                    best = Some((wl, dist, x, y));
                }
            }
        }
        if let Some((_, _, x, y)) = best {
            grid.remove(k, t.x, t.y);
            sol.terminals[k].x = x;
            sol.terminals[k].y = y;
            grid.insert(k, x, y);
            audit.check(design, sol, "terminal shift")?;
            moves += 1;
        }
    }
    Ok(moves)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub solution: Solution,
    /// Exact wirelength before refinement and after each round.
    pub history: Vec<f64>,
    pub swaps: usize,
    pub reorders: usize,
}

/// Rounds of per-die swap and reorder followed by terminal re-assignment and
/// shifting; new terminals are kept only when they do not raise the
/// wirelength.
pub fn refine_pipeline(design: &Design, sol: &Solution, opts: &DetailOptions) -> Result<RefineOutcome> {
    let mut cur = sol.clone();
    let mut history = vec![exact_d2d_wl(design, &cur)?.0];
    let (mut swaps, mut reorders) = (0, 0);
    for _ in 0..opts.rounds {
        for die in Die::BOTH {
            swaps += global_swap(design, &mut cur, die, opts)?;
            reorders += local_reorder(design, &mut cur, die, opts)?;
        }
        let wl = exact_d2d_wl(design, &cur)?.0;
        let assignment = assign_hbts(design, &cur.die, &cur.x, &cur.y);
        let terminals = legalize_hbts(design, &assignment, &opts.legalize)?;
        let trial = Solution { terminals, ..cur.clone() };
        let trial_wl = exact_d2d_wl(design, &trial)?.0;
        if trial_wl <= wl {
            cur = trial;
        }
        shift_terminals(design, &mut cur, opts)?;
        history.push(exact_d2d_wl(design, &cur)?.0);
    }
    Ok(RefineOutcome { solution: cur, history, swaps, reorders })
}
