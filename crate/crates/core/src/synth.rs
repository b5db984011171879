// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic two-technology designs with local netlists.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Design, DesignParts, DieSpec, LibCell, LibPin, Net, NetPin, Node, RowSpec, Technology};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub cells: usize,
    /// Net count; `None` uses 0.967 nets per cell.
    pub nets: Option<usize>,
    pub seed: u64,
    /// Width multiplier of the top technology.
    pub hetero: f64,
    pub top_util: f64,
    pub bottom_util: f64,
    /// Fraction of the combined die capacity the cells occupy.
    pub fill: f64,
    pub row_height: f64,
    pub terminal_size: f64,
    pub terminal_spacing: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            cells: 1000,
            nets: None,
            seed: 1,
            hetero: 1.3,
            top_util: 0.70,
            bottom_util: 0.75,
            fill: 0.8,
            row_height: 10.0,
            terminal_size: 4.0,
            terminal_spacing: 4.0,
        }
    }
}

const BASE_WIDTHS: [f64; 10] = [3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 15.0];

fn library(name: &str, scale: f64, height: f64) -> Result<Technology> {
    let cells = BASE_WIDTHS
        .iter()
        .enumerate()
        .map(|(k, &w0)| {
            let w = (w0 * scale).round().max(1.0);
            let pins = 4 + k % 3;
            LibCell {
                name: format!("G{k}"),
                width: w,
                height,
                pins: (0..pins)
                    .map(|p| LibPin {
                        name: format!("p{p}"),
                        x: w * (p as f64 + 0.5) / pins as f64,
                        y: height * if p % 2 == 0 { 0.3 } else { 0.7 },
                    })
                    .collect(),
            }
        })
        .collect();
    Technology::new(name, cells)
}

/// Net degree: 70% two-pin, 20% three to five, 10% six to sixteen.
fn degree(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    if u < 0.7 {
        2
    } else if u < 0.9 {
        rng.random_range(3..=5)
    } else {
        rng.random_range(6..=16)
    }
}

pub fn generate(p: &SynthParams) -> Result<Design> {
    if p.cells < 2 {
        return Err(Error::Config("synthetic designs need at least two cells".into()));
    }
    if !(p.hetero > 0.0 && p.fill > 0.0 && p.fill <= 1.0) {
        return Err(Error::Config("hetero factor and fill must be positive, fill at most 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let top_tech = library("TopTech", p.hetero, p.row_height)?;
    let bottom_tech = library("BottomTech", 1.0, p.row_height)?;
    let kinds = BASE_WIDTHS.len();
    // Small cells dominate, as in standard-cell netlists.
    let weights: Vec<f64> = (0..kinds).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let wsum: f64 = weights.iter().sum();
    let lib_of: Vec<usize> = (0..p.cells)
        .map(|_| {
            let mut u = rng.random::<f64>() * wsum;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    return k;
                }
                u -= w;
            }
            kinds - 1
        })
        .collect();

    // Cells sit on a virtual square lattice; nets connect lattice neighbors.
    let side = (p.cells as f64).sqrt().ceil() as usize;
    let mut slots: Vec<usize> = (0..p.cells).collect();
    slots.shuffle(&mut rng);
    let mut at = vec![usize::MAX; side * side];
    for (cell, &s) in slots.iter().enumerate() {
        at[s] = cell;
    }
    let mut free_pins: Vec<Vec<usize>> =
        lib_of.iter().map(|&k| (0..bottom_tech.lib_cells[k].pins.len()).rev().collect()).collect();

    let m = p.nets.unwrap_or_else(|| (p.cells as f64 * 0.967).round() as usize).max(1);
    let mut nets = Vec::with_capacity(m);
    let mut attempts = 0;
    while nets.len() < m && attempts < 50 * m {
        attempts += 1;
        let k = degree(&mut rng);
        let driver = rng.random_range(0..p.cells);
        if free_pins[driver].is_empty() {
            continue;
        }
        let (dx, dy) = (slots[driver] % side, slots[driver] / side);
        let radius = (k as f64).sqrt().ceil() as i64 + 1;
        let mut members = vec![driver];
        let mut tries = 0;
        while members.len() < k && tries < 20 * k {
            tries += 1;
            let ox = dx as i64 + rng.random_range(-radius..=radius);
            let oy = dy as i64 + rng.random_range(-radius..=radius);
            if ox < 0 || oy < 0 || ox >= side as i64 || oy >= side as i64 {
                continue;
            }
            let c = at[oy as usize * side + ox as usize];
            if c != usize::MAX && !members.contains(&c) && !free_pins[c].is_empty() {
                members.push(c);
            }
        }
        if members.len() < 2 {
            continue;
        }
        let pins = members
            .iter()
            .map(|&c| {
                let pin = free_pins[c].pop().unwrap();
                NetPin { node: c, pin: format!("p{pin}") }
            })
            .collect();
        nets.push(Net { name: format!("n{}", nets.len()), pins });
    }

    let bottom_area: f64 = lib_of.iter().map(|&k| bottom_tech.lib_cells[k].width * p.row_height).sum();
    let top_area: f64 = lib_of.iter().map(|&k| top_tech.lib_cells[k].width * p.row_height).sum();
    let die_area = 0.5 * (top_area + bottom_area) / (p.fill * (p.top_util + p.bottom_util));
    let rows = (die_area.sqrt() / p.row_height).ceil().max(1.0) as usize;
    let y_max = rows as f64 * p.row_height;
    let x_max = (die_area / y_max).ceil().max(BASE_WIDTHS[kinds - 1] * p.hetero.max(1.0) * 2.0);
    let die = |util: f64, tech: &str| DieSpec {
        x_max,
        y_max,
        max_util: util,
        rows: RowSpec { start_x: 0.0, start_y: 0.0, length: x_max, height: p.row_height, repeat: rows },
        tech: tech.into(),
    };
    let nodes = lib_of
        .iter()
        .enumerate()
        .map(|(i, &k)| Node { name: format!("c{i}"), lib_cell: format!("G{k}") })
        .collect();
    Design::new(DesignParts {
        top: die(p.top_util, "TopTech"),
        bottom: die(p.bottom_util, "BottomTech"),
        technologies: vec![top_tech, bottom_tech],
        nodes,
        nets,
        terminal_size: p.terminal_size,
        terminal_spacing: p.terminal_spacing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{parse_design, write_design};
    use crate::model::Die;

    #[test]
    fn small_design_parses_with_multi_pin_nets() {
        let d = generate(&SynthParams { cells: 100, seed: 7, ..Default::default() }).unwrap();
        let text = write_design(&d);
        let back = parse_design(&text).unwrap();
        assert_eq!(back.num_nodes(), 100);
        for e in 0..back.num_nets() {
            assert!(back.net_pins(e).len() >= 2);
        }
        assert_eq!(write_design(&back), text);
    }

    #[test]
    fn unit_hetero_gives_identical_technologies() {
        let d = generate(&SynthParams { cells: 50, hetero: 1.0, ..Default::default() }).unwrap();
        let p = d.parts();
        assert_eq!(p.technologies[0].lib_cells, p.technologies[1].lib_cells);
        for i in 0..d.num_nodes() {
            assert_eq!(d.node_size(i, Die::Top), d.node_size(i, Die::Bottom));
        }
    }

    #[test]
    fn case_scale_statistics() {
        let d = generate(&SynthParams { cells: 2735, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(d.num_nodes(), 2735);
        let m = d.num_nets() as f64;
        assert!((m - 2645.0).abs() <= 30.0, "{m}");
        let two = (0..d.num_nets()).filter(|&e| d.net_pins(e).len() == 2).count() as f64;
        assert!((two / m - 0.7).abs() < 0.05, "{}", two / m);
        let cap = d.die(Die::Top).capacity() + d.die(Die::Bottom).capacity();
        let need = 0.5 * (d.total_area(Die::Top) + d.total_area(Die::Bottom));
        assert!(need < cap);
    }

    #[test]
    fn deterministic() {
        let a = write_design(&generate(&SynthParams { cells: 300, seed: 5, ..Default::default() }).unwrap());
        let b = write_design(&generate(&SynthParams { cells: 300, seed: 5, ..Default::default() }).unwrap());
        assert_eq!(a, b);
    }
}
