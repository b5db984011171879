// SPDX-License-Identifier: Apache-2.0

//! Row legalization: greedy slot search followed by per-row quadratic
//! refinement, plus terminal legalization on padded rows.

use crate::error::{Error, Result};
use crate::hbt::HbtAssignment;
use crate::model::{Design, Die, RowSpec, Terminal};

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub y: f64,
    pub x_start: f64,
    pub x_end: f64,
    pub height: f64,
}

/// Rows ordered by `y`; sites are `site` wide starting at each row's `x_start`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMap {
    pub rows: Vec<Row>,
    pub site: f64,
}

impl RowMap {
    pub fn from_spec(r: &RowSpec, site: f64) -> Self {
        let rows = (0..r.repeat)
            .map(|k| Row {
                y: r.start_y + k as f64 * r.height,
                x_start: r.start_x,
                x_end: r.start_x + r.length,
                height: r.height,
            })
            .collect();
        Self { rows, site }
    }

    pub fn for_die(design: &Design, die: Die, site: f64) -> Self {
        Self::from_spec(&design.die(die).rows, site)
    }

    fn sites(&self, row: &Row, x: f64) -> f64 {
        (x - row.x_start) / self.site
    }

    fn snap(&self, row: &Row, x: f64) -> f64 {
        row.x_start + self.sites(row, x).round() * self.site
    }

    fn ceil(&self, row: &Row, x: f64) -> f64 {
        row.x_start + (self.sites(row, x) - 1e-7).ceil() * self.site
    }

    fn floor(&self, row: &Row, x: f64) -> f64 {
        row.x_start + (self.sites(row, x) + 1e-7).floor() * self.site
    }
}

/// A cell to legalize with its desired lower-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegalCell<'a> {
    pub name: &'a str,
    pub w: f64,
    pub h: f64,
    pub x: f64,
    pub y: f64,
}

/// Legal corners and row index per input cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RowPlacement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub row: Vec<usize>,
}

impl RowPlacement {
    pub fn squared_displacement(&self, cells: &[LegalCell]) -> f64 {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| (self.x[i] - c.x).powi(2) + (self.y[i] - c.y).powi(2))
            .sum()
    }

    pub fn displacement(&self, cells: &[LegalCell]) -> f64 {
        cells.iter().enumerate().map(|(i, c)| (self.x[i] - c.x).abs() + (self.y[i] - c.y).abs()).sum()
    }
}

/// Best site in one row's free segments: (segment, x, |dx|).
fn best_in_row(map: &RowMap, row: &Row, segs: &[(f64, f64)], c: &LegalCell) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (k, &(lo, hi)) in segs.iter().enumerate() {
        if let Some(b) = best {
            if lo - c.x > b.2 {
                break;
            }
        }
        let (a, b) = (map.ceil(row, lo), map.floor(row, hi - c.w));
        if a > b + EPS {
            continue;
        }
        let x = map.snap(row, c.x).clamp(a, b);
        let cost = (x - c.x).abs();
        if best.is_none_or(|bb| cost < bb.2) {
            best = Some((k, x, cost));
        }
    }
    best
}

/// Greedy legalization in ascending x: each cell takes the free site with the
/// smallest Manhattan displacement, searching rows outward from its y.
pub fn tetris_legalize(cells: &[LegalCell], map: &RowMap) -> Result<RowPlacement> {
    let n = cells.len();
    let rows = &map.rows;
    let mut free: Vec<Vec<(f64, f64)>> = rows.iter().map(|r| vec![(r.x_start, r.x_end)]).collect();
    let mut out = RowPlacement { x: vec![0.0; n], y: vec![0.0; n], row: vec![0; n] };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cells[a].x.total_cmp(&cells[b].x).then(cells[a].y.total_cmp(&cells[b].y)).then(a.cmp(&b))
    });
    for i in order {
        let c = &cells[i];
        let start = rows.partition_point(|r| r.y < c.y);
        let (mut down, mut up) = (start, start);
        // (cost, row, segment, x)
        let mut best: Option<(f64, usize, usize, f64)> = None;
        loop {
            let d_down = if down > 0 { c.y - rows[down - 1].y } else { f64::INFINITY };
            let d_up = if up < rows.len() { rows[up].y - c.y } else { f64::INFINITY };
            let (r, dy) = if d_up <= d_down { (up, d_up) } else { (down - 1, d_down) };
            if dy.is_infinite() || best.is_some_and(|b| b.0 <= dy) {
                break;
            }
            if r == up {
                up += 1;
            } else {
                down -= 1;
            }
            if c.h > rows[r].height + EPS {
                continue;
            }
            if let Some((seg, x, dx)) = best_in_row(map, &rows[r], &free[r], c) {
                if best.is_none_or(|b| dx + dy < b.0) {
                    best = Some((dx + dy, r, seg, x));
                }
            }
        }
        let (_, r, seg, x) =
            best.ok_or_else(|| Error::Infeasible(format!("no legal slot left for {}", c.name)))?;
        let (lo, hi) = free[r][seg];
        let mut pieces = Vec::with_capacity(2);
        if x - lo > EPS {
            pieces.push((lo, x));
        }
        if hi - (x + c.w) > EPS {
            pieces.push((x + c.w, hi));
        }
        free[r].splice(seg..=seg, pieces);
        out.x[i] = x;
        out.y[i] = rows[r].y;
        out.row[i] = r;
    }
    Ok(out)
}

/// Pool-adjacent-violators on targets `t` (unit weights): block means.
fn pav(t: &[f64]) -> Vec<(f64, usize)> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(t.len());
    for &v in t {
        let (mut sum, mut cnt) = (v, 1usize);
        while let Some(&(ps, pc)) = blocks.last() {
            if ps / pc as f64 > sum / cnt as f64 {
                sum += ps;
                cnt += pc;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, cnt));
    }
    blocks
}

/// Minimizes `Σ (x_i - d_i)^2` over one row with the cell order fixed.
/// Returns `None` when the row cannot hold the cells.
fn abacus_row(map: &RowMap, row: &Row, w: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = w.iter().sum();
    let lo = map.ceil(row, row.x_start);
    let hi = row.x_end - total;
    if hi < lo - EPS {
        return None;
    }
    let mut off = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &wi in w {
        off.push(acc);
        acc += wi;
    }
    let t: Vec<f64> = d.iter().zip(&off).map(|(d, o)| d - o).collect();
    let aligned = w.iter().all(|&wi| ((wi / map.site) - (wi / map.site).round()).abs() < 1e-9);
    let mut x = Vec::with_capacity(w.len());
    if aligned {
        // Offsets are whole sites, so rounding each block start keeps every
        // cell aligned and abutting.
        let hi = map.floor(row, hi);
        if hi < lo - EPS {
            return None;
        }
        let mut i = 0;
        for (sum, cnt) in pav(&t) {
            let v = map.snap(row, sum / cnt as f64).clamp(lo, hi);
            for k in i..i + cnt {
                x.push(v + off[k]);
            }
            i += cnt;
        }
    } else {
        let mut i = 0;
        let mut end = f64::NEG_INFINITY;
        for (sum, cnt) in pav(&t) {
            let v = (sum / cnt as f64).clamp(lo, hi);
            for k in i..i + cnt {
                let xi = map.snap(row, v + off[k]).max(map.ceil(row, end)).max(lo);
                x.push(xi);
                end = xi + w[k];
            }
            i += cnt;
        }
        if end > row.x_end + EPS {
            return None;
        }
    }
    Some(x)
}

/// Per-row cluster refinement keeping the row assignment and left-to-right
/// order of `input`; a row keeps its input positions when refinement fails or
/// does not lower the squared displacement.
pub fn abacus_refine(cells: &[LegalCell], map: &RowMap, input: &RowPlacement) -> RowPlacement {
    let mut out = input.clone();
    let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); map.rows.len()];
    for i in 0..cells.len() {
        by_row[input.row[i]].push(i);
    }
    for (r, members) in by_row.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.sort_by(|&a, &b| input.x[a].total_cmp(&input.x[b]).then(a.cmp(&b)));
        let w: Vec<f64> = members.iter().map(|&i| cells[i].w).collect();
        let d: Vec<f64> = members.iter().map(|&i| cells[i].x).collect();
        let Some(x) = abacus_row(map, &map.rows[r], &w, &d) else {
            continue;
        };
        let cost = |xs: &mut dyn Iterator<Item = f64>| -> f64 { xs.zip(&d).map(|(x, d)| (x - d).powi(2)).sum() };
        let new_cost = cost(&mut x.iter().copied());
        let old_cost = cost(&mut members.iter().map(|&i| input.x[i]));
        if new_cost <= old_cost {
            for (k, &i) in members.iter().enumerate() {
                out.x[i] = x[k];
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegalizeOptions {
    pub site: f64,
    /// Terminal distance to the die boundary; `None` means half the spacing.
    pub terminal_clearance: Option<f64>,
}

impl Default for LegalizeOptions {
    fn default() -> Self {
        Self { site: 1.0, terminal_clearance: None }
    }
}

/// Legalizes every node on its die; returns new corner vectors.
pub fn legalize_cells(
    design: &Design,
    die: &[Die],
    x: &[f64],
    y: &[f64],
    opts: &LegalizeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut ox, mut oy) = (x.to_vec(), y.to_vec());
    for d in Die::BOTH {
        let members: Vec<usize> = (0..design.num_nodes()).filter(|&i| die[i] == d).collect();
        let cells: Vec<LegalCell> = members
            .iter()
            .map(|&i| {
                let (w, h) = design.node_size(i, d);
                LegalCell { name: design.node_name(i), w, h, x: x[i], y: y[i] }
            })
            .collect();
        let map = RowMap::for_die(design, d, opts.site);
        let greedy = tetris_legalize(&cells, &map)
            .map_err(|e| Error::Infeasible(format!("{} die: {e}", d.name())))?;
        let refined = abacus_refine(&cells, &map, &greedy);
        for (k, &i) in members.iter().enumerate() {
            ox[i] = refined.x[k];
            oy[i] = refined.y[k];
        }
    }
    Ok((ox, oy))
}

/// Places one terminal per slot so that padded squares of side `w' + s'` do
/// not overlap and every terminal keeps the boundary clearance.
pub fn legalize_hbts(design: &Design, assignment: &HbtAssignment, opts: &LegalizeOptions) -> Result<Vec<Terminal>> {
    if assignment.is_empty() {
        return Ok(Vec::new());
    }
    let w = design.terminal_size();
    let s = design.terminal_spacing();
    let c = opts.terminal_clearance.unwrap_or(s / 2.0);
    let site = opts.site;
    let pitch = w + s;
    let spec = design.die(Die::Top);
    let up = |v: f64| (v / site - 1e-9).ceil() * site;
    let down = |v: f64| (v / site + 1e-9).floor() * site;
    let (x0, x_last) = (up(c), down(spec.x_max - c - w));
    let row_pitch = up(pitch);
    let mut rows = Vec::new();
    let mut ry = up(c);
    while ry + w <= spec.y_max - c + EPS {
        rows.push(Row { y: ry, x_start: x0, x_end: x_last + pitch, height: row_pitch });
        ry += row_pitch;
    }
    if rows.is_empty() || x_last < x0 {
        return Err(Error::Infeasible("die too small for any terminal at the given spacing".into()));
    }
    let map = RowMap { rows, site };
    let cells: Vec<LegalCell> = assignment
        .slots
        .iter()
        .map(|t| LegalCell {
            name: design.net_name(t.net),
            w: pitch,
            h: row_pitch,
            x: t.center.0 - w / 2.0,
            y: t.center.1 - w / 2.0,
        })
        .collect();
    let greedy = tetris_legalize(&cells, &map).map_err(|_| {
        Error::Infeasible(format!(
            "{} terminals do not fit the die at size {w} and spacing {s}",
            assignment.len()
        ))
    })?;
    let placed = abacus_refine(&cells, &map, &greedy);
    Ok(assignment
        .slots
        .iter()
        .enumerate()
        .map(|(k, t)| Terminal { net: t.net, x: placed.x[k], y: placed.y[k] })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{check_legality, CheckOptions, Violation};
    use crate::hbt::HbtSlot;
    use crate::model::Solution;
    use crate::wirelength::Span;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(n: usize, len: f64, h: f64) -> RowMap {
        RowMap::from_spec(&RowSpec { start_x: 0.0, start_y: 0.0, length: len, height: h, repeat: n }, 1.0)
    }

    fn cell(w: f64, x: f64, y: f64) -> LegalCell<'static> {
        LegalCell { name: "c", w, h: 10.0, x, y }
    }

    fn overlaps(p: &RowPlacement, cells: &[LegalCell]) -> usize {
        let mut n = 0;
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                if p.row[i] == p.row[j] && p.x[i] < p.x[j] + cells[j].w - EPS && p.x[j] < p.x[i] + cells[i].w - EPS {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn legal_input_stays_put() {
        let map = rows(3, 50.0, 10.0);
        let cells = [cell(4.0, 0.0, 0.0), cell(5.0, 10.0, 10.0), cell(3.0, 4.0, 0.0)];
        let p = tetris_legalize(&cells, &map).unwrap();
        assert_eq!(p.displacement(&cells), 0.0);
        assert_eq!(abacus_refine(&cells, &map, &p), p);
    }

    #[test]
    fn twin_cells_shift_by_nearer_option() {
        // Width 4 is nearer than the row pitch 10.
        let map = rows(3, 50.0, 10.0);
        let cells = [cell(4.0, 20.0, 10.0), cell(4.0, 20.0, 10.0)];
        let p = tetris_legalize(&cells, &map).unwrap();
        assert_eq!(p.displacement(&cells), 4.0);
        assert_eq!(p.row[0], p.row[1]);
        // Width 12 is farther than the row pitch.
        let cells = [cell(12.0, 20.0, 10.0), cell(12.0, 20.0, 10.0)];
        let p = tetris_legalize(&cells, &map).unwrap();
        assert_eq!(p.displacement(&cells), 10.0);
        assert_ne!(p.row[0], p.row[1]);
    }

    #[test]
    fn full_row_packs_in_order() {
        let map = rows(1, 12.0, 10.0);
        let cells = [cell(4.0, 0.0, 0.0), cell(4.0, 3.0, 0.0), cell(4.0, 7.0, 0.0)];
        let p = tetris_legalize(&cells, &map).unwrap();
        assert_eq!(p.x, vec![0.0, 4.0, 8.0]);
        let err = tetris_legalize(&[cells[0], cells[1], cells[2], cell(1.0, 0.0, 0.0)], &map).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert!(err.to_string().contains('c'));
    }

    #[test]
    fn abacus_single_cell_unchanged() {
        let map = rows(1, 30.0, 10.0);
        let cells = [cell(4.0, 7.0, 0.0)];
        let p = tetris_legalize(&cells, &map).unwrap();
        assert_eq!(abacus_refine(&cells, &map, &p).x, vec![7.0]);
    }

    #[test]
    fn abacus_twins_symmetric() {
        let map = rows(1, 30.0, 10.0);
        let cells = [cell(4.0, 10.0, 0.0), cell(4.0, 10.0, 0.0)];
        let greedy = RowPlacement { x: vec![10.0, 14.0], y: vec![0.0; 2], row: vec![0; 2] };
        let p = abacus_refine(&cells, &map, &greedy);
        assert_eq!(p.x, vec![8.0, 12.0]);
    }

    /// Minimum of `Σ (x_i - d_i)^2` over integer sites with order fixed.
    fn dp_oracle(w: &[i64], d: &[f64], len: i64) -> f64 {
        let width = (len + 1) as usize;
        let mut prev = vec![f64::INFINITY; width];
        for p in 0..=len - w[0] {
            prev[p as usize] = (p as f64 - d[0]).powi(2);
        }
        for i in 1..w.len() {
            let mut best_before = vec![f64::INFINITY; width];
            let mut run = f64::INFINITY;
            for p in 0..width {
                run = run.min(prev[p]);
                best_before[p] = run;
            }
            let mut cur = vec![f64::INFINITY; width];
            for p in w[i - 1]..=len - w[i] {
                let q = (p - w[i - 1]) as usize;
                cur[p as usize] = best_before[q] + (p as f64 - d[i]).powi(2);
            }
            prev = cur;
        }
        prev.into_iter().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn abacus_matches_dp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let map = rows(1, 40.0, 10.0);
        for _ in 0..400 {
            let n = rng.random_range(1..=8);
            let w: Vec<i64> = (0..n).map(|_| rng.random_range(1..=5)).collect();
            let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..45.0)).collect();
            d.sort_by(f64::total_cmp);
            let wf: Vec<f64> = w.iter().map(|&v| v as f64).collect();
            let x = abacus_row(&map, &map.rows[0], &wf, &d).unwrap();
            let cost: f64 = x.iter().zip(&d).map(|(x, d)| (x - d).powi(2)).sum();
            let want = dp_oracle(&w, &d, 40);
            assert!((cost - want).abs() < 1e-6, "w {w:?} d {d:?}: {cost} vs {want}");
        }
    }

    fn random_cells(rng: &mut ChaCha8Rng, n: usize, len: f64, nrows: usize) -> Vec<LegalCell<'static>> {
        (0..n)
            .map(|_| {
                cell(
                    rng.random_range(1..=6) as f64,
                    rng.random_range(0.0..len),
                    rng.random_range(0.0..nrows as f64 * 10.0),
                )
            })
            .collect()
    }

    proptest! {
        #[test]
        fn legalized_rows_are_clean(seed in 0u64..10_000, n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = rows(6, 60.0, 10.0);
            let cells = random_cells(&mut rng, n, 56.0, 6);
            let greedy = tetris_legalize(&cells, &map).unwrap();
            let refined = abacus_refine(&cells, &map, &greedy);
            for p in [&greedy, &refined] {
                prop_assert_eq!(overlaps(p, &cells), 0);
                for (i, c) in cells.iter().enumerate() {
                    prop_assert_eq!(p.x[i], p.x[i].round());
                    prop_assert!(p.x[i] >= 0.0 && p.x[i] + c.w <= 60.0);
                    prop_assert_eq!(p.y[i], map.rows[p.row[i]].y);
                }
            }
            prop_assert!(refined.squared_displacement(&cells) <= greedy.squared_displacement(&cells) + 1e-9);
        }
    }

    fn terminal_design(w: f64, s: f64) -> Design {
        let mut parts = crate::model::tests::hetero_design().parts().clone();
        parts.terminal_size = w;
        parts.terminal_spacing = s;
        Design::new(parts).unwrap()
    }

    fn slots(centers: &[(f64, f64)]) -> HbtAssignment {
        let point = |v: f64| Span { lo: v, hi: v };
        HbtAssignment {
            slots: centers
                .iter()
                .map(|&(x, y)| HbtSlot { net: 0, region: [point(x), point(y)], center: (x, y) })
                .collect(),
        }
    }

    #[test]
    fn lone_terminal_stays() {
        let d = terminal_design(2.0, 2.0);
        // Rows start at the clearance 1 with pitch 4, so corner y = 29 is on a row.
        let t = legalize_hbts(&d, &slots(&[(41.0, 30.0)]), &LegalizeOptions::default()).unwrap();
        assert_eq!((t[0].x, t[0].y), (40.0, 29.0));
    }

    #[test]
    fn stacked_terminals_separate() {
        let d = terminal_design(2.0, 2.0);
        let t = legalize_hbts(&d, &slots(&[(41.0, 31.0), (41.0, 31.0)]), &LegalizeOptions::default()).unwrap();
        let (dx, dy) = ((t[0].x - t[1].x).abs(), (t[0].y - t[1].y).abs());
        assert!(dx.max(dy) >= 4.0);
    }

    #[test]
    fn crowded_die_is_infeasible() {
        // 100 x 80 die with pitch 20: at most 5 x 4 padded squares.
        let d = terminal_design(10.0, 10.0);
        let centers = vec![(50.0, 40.0); 21];
        assert!(matches!(legalize_hbts(&d, &slots(&centers), &LegalizeOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dense_cluster_passes_checker() {
        let d = terminal_design(2.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centers: Vec<(f64, f64)> =
            (0..60).map(|_| (rng.random_range(45.0..55.0), rng.random_range(35.0..45.0))).collect();
        let terms = legalize_hbts(&d, &slots(&centers), &LegalizeOptions::default()).unwrap();
        let sol = Solution { die: vec![Die::Top, Die::Bottom], x: vec![0.0, 10.0], y: vec![0.0, 0.0], terminals: terms };
        let report = check_legality(&d, &sol, &CheckOptions::default());
        let geometric = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::TerminalSpacing { .. } | Violation::TerminalClearance { .. }))
            .count();
        assert_eq!(geometric, 0, "{:?}", report.violations);
    }
}
