// SPDX-License-Identifier: Apache-2.0

//! Terminal placement for split nets: the optimal region, the assignment at
//! its center, and an exhaustive-scan reference.

use crate::error::{Error, Result};
use crate::evaluate::{exact_net_wl, net_geoms};
use crate::model::{Design, Die};
use crate::wirelength::{Box2, NetBoxes, PinGeom, Span};

/// Middle two values of four.
fn medians(mut v: [f64; 4]) -> Span {
    v.sort_by(f64::total_cmp);
    Span { lo: v[1], hi: v[2] }
}

/// Region of terminal centers minimizing the exact wirelength of a net whose
/// top and bottom pin boxes are given.
pub fn region_of_boxes(top: Box2, bottom: Box2) -> Box2 {
    [0, 1].map(|a| medians([top[a].lo, top[a].hi, bottom[a].lo, bottom[a].hi]))
}

pub fn optimal_region(pins: &[PinGeom]) -> Result<Box2> {
    match NetBoxes::from_pins(pins) {
        Some(NetBoxes { top: Some(t), bottom: Some(b), .. }) => Ok(region_of_boxes(t, b)),
        _ => Err(Error::Domain("optimal region requested for a net that is not split".into())),
    }
}

pub fn center(b: &Box2) -> (f64, f64) {
    ((b[0].lo + b[0].hi) / 2.0, (b[1].lo + b[1].hi) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HbtSlot {
    pub net: usize,
    pub region: Box2,
    pub center: (f64, f64),
}

/// One slot per split net, in net order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HbtAssignment {
    pub slots: Vec<HbtSlot>,
}

impl HbtAssignment {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

pub fn assign_hbts(design: &Design, die: &[Die], x: &[f64], y: &[f64]) -> HbtAssignment {
    let mut slots = Vec::new();
    for e in 0..design.num_nets() {
        let pins = net_geoms(design, e, die, x, y);
        if let Ok(region) = optimal_region(&pins) {
            slots.push(HbtSlot { net: e, region, center: center(&region) });
        }
    }
    HbtAssignment { slots }
}

/// Scans terminal centers on a `pitch` lattice covering the net box grown by
/// one pitch; returns the best center and its exact wirelength.
pub fn brute_force_hbt(pins: &[PinGeom], pitch: f64) -> Result<((f64, f64), f64)> {
    let boxes = NetBoxes::from_pins(pins).filter(NetBoxes::is_split).ok_or_else(|| {
        Error::Domain("terminal scan requested for a net that is not split".into())
    })?;
    if !(pitch > 0.0) {
        return Err(Error::Config(format!("scan pitch must be positive, got {pitch}")));
    }
    let axis = |s: Span| -> Vec<f64> {
        let n = ((s.len() + 2.0 * pitch) / pitch).floor() as usize;
        (0..=n).map(|k| s.lo - pitch + k as f64 * pitch).collect()
    };
    let (xs, ys) = (axis(boxes.full[0]), axis(boxes.full[1]));
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for &tx in &xs {
        for &ty in &ys {
            let w = exact_net_wl(pins, Some((tx, ty)));
            if w < best.1 {
                best = ((tx, ty), w);
            }
        }
    }
    Ok(best)
}
