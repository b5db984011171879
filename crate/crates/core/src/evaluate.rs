// SPDX-License-Identifier: Apache-2.0

//! Independent scoring and legality checking of discrete solutions.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Design, Die, Solution};
use crate::wirelength::{PinGeom, Span};

const EPS: f64 = 1e-6;

/// Pin locations of net `e` for per-node dies and corners.
pub fn net_geoms(design: &Design, e: usize, die: &[Die], x: &[f64], y: &[f64]) -> Vec<PinGeom> {
    design
        .net_pins(e)
        .map(|p| {
            let v = design.pin_node(p);
            let (dx, dy) = design.pin_offset(p, die[v]);
            PinGeom { x: x[v] + dx, y: y[v] + dy, die: die[v] }
        })
        .collect()
}

/// Exact die-to-die wirelength of one net: each die's pins joined with the
/// terminal center, or plain HPWL when no terminal is given.
pub fn exact_net_wl(pins: &[PinGeom], terminal: Option<(f64, f64)>) -> f64 {
    let hpwl = |die: Option<Die>| -> f64 {
        let sel = pins.iter().filter(|p| die.is_none_or(|d| p.die == d));
        let mut xs = Span::of(sel.clone().map(|p| p.x));
        let mut ys = Span::of(sel.map(|p| p.y));
        if let (Some((tx, ty)), Some(_)) = (terminal, die) {
            xs = Some(xs.map_or(Span::point(tx), |s| s.union(Span::point(tx))));
            ys = Some(ys.map_or(Span::point(ty), |s| s.union(Span::point(ty))));
        }
        xs.map_or(0.0, |s| s.len()) + ys.map_or(0.0, |s| s.len())
    };
    match terminal {
        Some(_) => hpwl(Some(Die::Top)) + hpwl(Some(Die::Bottom)),
        None => hpwl(None),
    }
}

/// Terminal index per net, checked against the split status of each net.
pub fn terminal_map(design: &Design, sol: &Solution) -> Result<Vec<Option<usize>>> {
    let mut map = vec![None; design.num_nets()];
    for (k, t) in sol.terminals.iter().enumerate() {
        if t.net >= design.num_nets() {
            return Err(Error::Validation(format!("terminal references net #{}", t.net)));
        }
        if map[t.net].replace(k).is_some() {
            return Err(Error::Validation(format!("net {} has more than one terminal", design.net_name(t.net))));
        }
    }
    for (e, slot) in map.iter().enumerate() {
        let split = sol.is_split(design, e);
        if split && slot.is_none() {
            return Err(Error::Validation(format!("split net {} has no terminal", design.net_name(e))));
        }
        if !split && slot.is_some() {
            return Err(Error::Validation(format!("net {} is not split but has a terminal", design.net_name(e))));
        }
    }
    Ok(map)
}

/// Total exact wirelength and its per-net breakdown.
pub fn exact_d2d_wl(design: &Design, sol: &Solution) -> Result<(f64, Vec<f64>)> {
    if sol.die.len() != design.num_nodes() {
        return Err(Error::Validation("solution does not place every node".into()));
    }
    let map = terminal_map(design, sol)?;
    let per: Vec<f64> = (0..design.num_nets())
        .map(|e| {
            let pins = net_geoms(design, e, &sol.die, &sol.x, &sol.y);
            let term = map[e].map(|k| sol.terminal_center(design, &sol.terminals[k]));
            exact_net_wl(&pins, term)
        })
        .collect();
    Ok((per.iter().sum(), per))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    OutOfBounds { name: String, die: Die, x: f64, y: f64 },
    Misaligned { name: String, die: Die, x: f64, y: f64 },
    Overlap { a: String, b: String, die: Die, x: f64, y: f64 },
    Utilization { die: Die, ratio: f64, limit: f64 },
    TerminalSpacing { a: String, b: String, x: f64, y: f64 },
    TerminalClearance { net: String, x: f64, y: f64 },
    TerminalConsistency(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds { name, die, x, y } => {
                write!(f, "{name} at ({x}, {y}) lies outside the {} die", die.name())
            }
            Violation::Misaligned { name, die, x, y } => {
                write!(f, "{name} at ({x}, {y}) is not on a {} die row/site", die.name())
            }
            Violation::Overlap { a, b, die, x, y } => {
                write!(f, "{a} and {b} overlap on the {} die near ({x}, {y})", die.name())
            }
            Violation::Utilization { die, ratio, limit } => {
                write!(f, "{} die utilization {ratio:.6} exceeds {limit:.6}", die.name())
            }
            Violation::TerminalSpacing { a, b, x, y } => {
                write!(f, "terminals of {a} and {b} closer than the spacing near ({x}, {y})")
            }
            Violation::TerminalClearance { net, x, y } => {
                write!(f, "terminal of {net} at ({x}, {y}) violates the boundary clearance")
            }
            Violation::TerminalConsistency(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub site: f64,
    /// Terminal distance to the die boundary; `None` means half the spacing.
    pub clearance: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { site: 1.0, clearance: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LegalityReport {
    pub violations: Vec<Violation>,
}

impl LegalityReport {
    pub fn is_legal(&self) -> bool {
        self.violations.is_empty()
    }
}

fn near_int(v: f64) -> bool {
    (v - v.round()).abs() <= EPS
}

/// Pairs of axis-aligned rectangles `(x, y, w, h)` with positive-area overlap.
fn overlapping_pairs(rects: &[(f64, f64, f64, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| rects[a].0.total_cmp(&rects[b].0).then(a.cmp(&b)));
    let mut active: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for &i in &order {
        let (x, y, _, h) = rects[i];
        active.retain(|&j| rects[j].0 + rects[j].2 > x + EPS);
        for &j in &active {
            let (_, yj, _, hj) = rects[j];
            if y < yj + hj - EPS && yj < y + h - EPS {
                out.push((j.min(i), j.max(i)));
            }
        }
        active.push(i);
    }
    out
}

pub fn check_legality(design: &Design, sol: &Solution, opts: &CheckOptions) -> LegalityReport {
    let mut v = Vec::new();
    for die in Die::BOTH {
        let spec = design.die(die);
        let r = &spec.rows;
        let members: Vec<usize> = (0..design.num_nodes()).filter(|&i| sol.die[i] == die).collect();
        let mut area = 0.0;
        let mut rects = Vec::with_capacity(members.len());
        for &i in &members {
            let (w, h) = design.node_size(i, die);
            let (x, y) = (sol.x[i], sol.y[i]);
            area += w * h;
            rects.push((x, y, w, h));
            let name = design.node_name(i).to_string();
            if x < -EPS || y < -EPS || x + w > spec.x_max + EPS || y + h > spec.y_max + EPS {
                v.push(Violation::OutOfBounds { name, die, x, y });
                continue;
            }
            let row = (y - r.start_y) / r.height;
            let on_row = near_int(row) && row.round() >= 0.0 && (row.round() as usize) < r.repeat;
            let in_row = x >= r.start_x - EPS && x + w <= r.start_x + r.length + EPS;
            if !on_row || !in_row || !near_int((x - r.start_x) / opts.site) {
                v.push(Violation::Misaligned { name, die, x, y });
            }
        }
        for (a, b) in overlapping_pairs(&rects) {
            let (ia, ib) = (members[a], members[b]);
            v.push(Violation::Overlap {
                a: design.node_name(ia).to_string(),
                b: design.node_name(ib).to_string(),
                die,
                x: sol.x[ib],
                y: sol.y[ib],
            });
        }
        let ratio = area / spec.area();
        if ratio > spec.max_util + 1e-9 {
            v.push(Violation::Utilization { die, ratio, limit: spec.max_util });
        }
    }

    if let Err(e) = terminal_map(design, sol) {
        v.push(Violation::TerminalConsistency(e.to_string()));
    }
    let w = design.terminal_size();
    let s = design.terminal_spacing();
    let c = opts.clearance.unwrap_or(s / 2.0);
    let top = design.die(Die::Top);
    for t in &sol.terminals {
        if t.net >= design.num_nets() {
            continue;
        }
        if t.x < c - EPS || t.y < c - EPS || t.x + w > top.x_max - c + EPS || t.y + w > top.y_max - c + EPS {
            v.push(Violation::TerminalClearance { net: design.net_name(t.net).to_string(), x: t.x, y: t.y });
        }
    }
    // Padding each terminal by the spacing turns the gap check into an overlap check.
    let padded: Vec<_> = sol.terminals.iter().map(|t| (t.x, t.y, w + s, w + s)).collect();
    for (a, b) in overlapping_pairs(&padded) {
        let (ta, tb) = (&sol.terminals[a], &sol.terminals[b]);
        let name = |net: usize| design.parts().nets.get(net).map_or_else(|| format!("#{net}"), |n| n.name.clone());
        v.push(Violation::TerminalSpacing { a: name(ta.net), b: name(tb.net), x: tb.x, y: tb.y });
    }
    LegalityReport { violations: v }
}

/// Summary of a solution; per-die arrays are indexed by `Die::index()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub wirelength: f64,
    pub terminals: usize,
    pub cells: [usize; 2],
    pub utilization: [f64; 2],
    pub runtime: Option<f64>,
}

pub fn report(design: &Design, sol: &Solution, runtime: Option<f64>) -> Result<Report> {
    let (wirelength, _) = exact_d2d_wl(design, sol)?;
    let mut cells = [0; 2];
    let mut area = [0.0; 2];
    for i in 0..design.num_nodes() {
        let d = sol.die[i];
        cells[d.index()] += 1;
        area[d.index()] += design.node_area(i, d);
    }
    let utilization = [
        area[0] / design.die(Die::Bottom).area(),
        area[1] / design.die(Die::Top).area(),
    ];
    Ok(Report { wirelength, terminals: sol.terminals.len(), cells, utilization, runtime })
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "wirelength  {:.2}\nterminals   {}\ntop die     {} cells, utilization {:.4}\nbottom die  {} cells, utilization {:.4}\n",
            self.wirelength, self.terminals, self.cells[1], self.utilization[1], self.cells[0], self.utilization[0]
        );
        if let Some(t) = self.runtime {
            s.push_str(&format!("runtime     {t:.3} s\n"));
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "wirelength={}\nterminals={}\ntop_cells={}\nbottom_cells={}\ntop_util={}\nbottom_util={}\n",
            self.wirelength, self.terminals, self.cells[1], self.cells[0], self.utilization[1], self.utilization[0]
        );
        if let Some(t) = self.runtime {
            s.push_str(&format!("runtime={t}\n"));
        }
        s
    }
}
