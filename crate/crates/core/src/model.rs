// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every stage: technologies, dies, the netlist,
//! the continuous placement state and the discrete solution.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Die of a node. `Top` corresponds to partition bit 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Die {
    Bottom = 0,
    Top = 1,
}

impl Die {
    pub const BOTH: [Die; 2] = [Die::Top, Die::Bottom];

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bit(bit: u8) -> Die {
        if bit == 0 {
            Die::Bottom
        } else {
            Die::Top
        }
    }

    pub fn flip(self) -> Die {
        match self {
            Die::Top => Die::Bottom,
            Die::Bottom => Die::Top,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Die::Top => "top",
            Die::Bottom => "bottom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibPin {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibCell {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub pins: Vec<LibPin>,
}

impl LibCell {
    pub fn pin(&self, name: &str) -> Option<&LibPin> {
        self.pins.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Technology {
    pub name: String,
    pub lib_cells: Vec<LibCell>,
    index: HashMap<String, usize>,
}

impl Technology {
    pub fn new(name: impl Into<String>, lib_cells: Vec<LibCell>) -> Result<Self> {
        let name = name.into();
        let mut index = HashMap::with_capacity(lib_cells.len());
        for (i, c) in lib_cells.iter().enumerate() {
            if !(c.width > 0.0 && c.height > 0.0) {
                return Err(Error::Validation(format!(
                    "lib cell {} in technology {name} has non-positive size",
                    c.name
                )));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate lib cell {} in technology {name}",
                    c.name
                )));
            }
            for (k, p) in c.pins.iter().enumerate() {
                if c.pins[..k].iter().any(|q| q.name == p.name) {
                    return Err(Error::Validation(format!(
                        "duplicate pin {} on lib cell {}",
                        p.name, c.name
                    )));
                }
                if !(0.0..=c.width).contains(&p.x) || !(0.0..=c.height).contains(&p.y) {
                    return Err(Error::Validation(format!(
                        "pin {} offset lies outside lib cell {}",
                        p.name, c.name
                    )));
                }
            }
        }
        Ok(Self { name, lib_cells, index })
    }

    pub fn cell(&self, name: &str) -> Option<&LibCell> {
        self.index.get(name).map(|&i| &self.lib_cells[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowSpec {
    pub start_x: f64,
    pub start_y: f64,
    pub length: f64,
    pub height: f64,
    pub repeat: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DieSpec {
    pub x_max: f64,
    pub y_max: f64,
    pub max_util: f64,
    pub rows: RowSpec,
    pub tech: String,
}

impl DieSpec {
    pub fn area(&self) -> f64 {
        self.x_max * self.y_max
    }

    /// Cell area the die may hold.
    pub fn capacity(&self) -> f64 {
        self.area() * self.max_util
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub lib_cell: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetPin {
    pub node: usize,
    pub pin: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub name: String,
    pub pins: Vec<NetPin>,
}

/// Raw design content as read from a file.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignParts {
    pub top: DieSpec,
    pub bottom: DieSpec,
    pub technologies: Vec<Technology>,
    pub nodes: Vec<Node>,
    pub nets: Vec<Net>,
    pub terminal_size: f64,
    pub terminal_spacing: f64,
}

/// Validated design with flattened per-die geometry.
#[derive(Clone, Debug)]
pub struct Design {
    parts: DesignParts,
    node_size: Vec<[(f64, f64); 2]>,
    pin_node: Vec<usize>,
    pin_offset: Vec<[(f64, f64); 2]>,
    net_start: Vec<usize>,
    node_pin_start: Vec<usize>,
    node_pins: Vec<usize>,
    node_net_start: Vec<usize>,
    node_nets: Vec<usize>,
    name_index: HashMap<String, usize>,
    net_index: HashMap<String, usize>,
}

pub const ASSUMPTION_TOLERANCE: f64 = 0.05;

impl Design {
    pub fn new(parts: DesignParts) -> Result<Self> {
        Self::with_tolerance(parts, ASSUMPTION_TOLERANCE)
    }

    pub fn with_tolerance(parts: DesignParts, eps: f64) -> Result<Self> {
        for (die, spec) in [("top", &parts.top), ("bottom", &parts.bottom)] {
            if !(spec.max_util > 0.0 && spec.max_util <= 1.0) {
                return Err(Error::Validation(format!(
                    "{die} die utilization {} outside (0,1]",
                    spec.max_util
                )));
            }
            if !(spec.x_max > 0.0 && spec.y_max > 0.0) {
                return Err(Error::Validation(format!("{die} die has empty extent")));
            }
            let r = &spec.rows;
            let eps_len = 1e-9 * spec.x_max.max(spec.y_max);
            if r.height <= 0.0
                || r.length <= 0.0
                || r.start_x < -eps_len
                || r.start_y < -eps_len
                || r.start_x + r.length > spec.x_max + eps_len
                || r.start_y + r.height * r.repeat as f64 > spec.y_max + eps_len
            {
                return Err(Error::Validation(format!("{die} die rows exceed the die bounds")));
            }
        }
        if parts.top.x_max != parts.bottom.x_max
            || (parts.top.y_max / parts.bottom.y_max - 1.0).abs() >= eps
        {
            return Err(Error::Validation(format!(
                "die outlines differ: top {}x{}, bottom {}x{}",
                parts.top.x_max, parts.top.y_max, parts.bottom.x_max, parts.bottom.y_max
            )));
        }
        if !(parts.terminal_size > 0.0) || parts.terminal_spacing < 0.0 {
            return Err(Error::Validation("terminal size must be positive".into()));
        }
        let tech = |name: &str| -> Result<&Technology> {
            parts
                .technologies
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Validation(format!("unknown technology {name}")))
        };
        let techs = [tech(&parts.bottom.tech)?, tech(&parts.top.tech)?];

        let mut name_index = HashMap::with_capacity(parts.nodes.len());
        let mut node_size = Vec::with_capacity(parts.nodes.len());
        let mut cells: Vec<[&LibCell; 2]> = Vec::with_capacity(parts.nodes.len());
        for (i, n) in parts.nodes.iter().enumerate() {
            if name_index.insert(n.name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate instance {}", n.name)));
            }
            let mut pair = [None, None];
            for d in 0..2 {
                pair[d] = Some(techs[d].cell(&n.lib_cell).ok_or_else(|| {
                    Error::Config(format!(
                        "instance {}: lib cell {} missing in technology {}",
                        n.name, n.lib_cell, techs[d].name
                    ))
                })?);
            }
            let pair = [pair[0].unwrap(), pair[1].unwrap()];
            node_size.push([(pair[0].width, pair[0].height), (pair[1].width, pair[1].height)]);
            cells.push(pair);
        }

        let mut net_index = HashMap::with_capacity(parts.nets.len());
        let mut pin_node = Vec::new();
        let mut pin_offset = Vec::new();
        let mut net_start = vec![0];
        for net in &parts.nets {
            if net_index.insert(net.name.clone(), net_start.len() - 1).is_some() {
                return Err(Error::Validation(format!("duplicate net {}", net.name)));
            }
            if net.pins.is_empty() {
                return Err(Error::Validation(format!("net {} has no pins", net.name)));
            }
            for p in &net.pins {
                let pair = cells.get(p.node).ok_or_else(|| {
                    Error::Validation(format!("net {} references node #{}", net.name, p.node))
                })?;
                let mut off = [(0.0, 0.0); 2];
                for d in 0..2 {
                    let lp = pair[d].pin(&p.pin).ok_or_else(|| {
                        Error::Validation(format!(
                            "net {}: pin {}/{} missing in technology {}",
                            net.name, parts.nodes[p.node].name, p.pin, techs[d].name
                        ))
                    })?;
                    off[d] = (lp.x, lp.y);
                }
                pin_node.push(p.node);
                pin_offset.push(off);
            }
            net_start.push(pin_node.len());
        }

        let n = parts.nodes.len();
        let (node_pin_start, node_pins) = csr(n, pin_node.iter().copied().enumerate());
        let mut incid: Vec<(usize, usize)> = Vec::new();
        for e in 0..parts.nets.len() {
            for p in net_start[e]..net_start[e + 1] {
                incid.push((pin_node[p], e));
            }
        }
        incid.sort_unstable();
        incid.dedup();
        let (node_net_start, node_nets) = csr(n, incid.iter().map(|&(v, e)| (e, v)));

        Ok(Self {
            parts,
            node_size,
            pin_node,
            pin_offset,
            net_start,
            node_pin_start,
            node_pins,
            node_net_start,
            node_nets,
            name_index,
            net_index,
        })
    }

    pub fn parts(&self) -> &DesignParts {
        &self.parts
    }

    pub fn die(&self, die: Die) -> &DieSpec {
        match die {
            Die::Top => &self.parts.top,
            Die::Bottom => &self.parts.bottom,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.parts.nodes.len()
    }

    pub fn num_nets(&self) -> usize {
        self.parts.nets.len()
    }

    pub fn num_pins(&self) -> usize {
        self.pin_node.len()
    }

    pub fn node_name(&self, i: usize) -> &str {
        &self.parts.nodes[i].name
    }

    pub fn net_name(&self, e: usize) -> &str {
        &self.parts.nets[e].name
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn net_by_name(&self, name: &str) -> Option<usize> {
        self.net_index.get(name).copied()
    }

    pub fn node_size(&self, i: usize, die: Die) -> (f64, f64) {
        self.node_size[i][die.index()]
    }

    pub fn node_area(&self, i: usize, die: Die) -> f64 {
        let (w, h) = self.node_size(i, die);
        w * h
    }

    pub fn net_pins(&self, e: usize) -> Range<usize> {
        self.net_start[e]..self.net_start[e + 1]
    }

    pub fn pin_node(&self, p: usize) -> usize {
        self.pin_node[p]
    }

    pub fn pin_offset(&self, p: usize, die: Die) -> (f64, f64) {
        self.pin_offset[p][die.index()]
    }

    pub fn node_pins(&self, i: usize) -> &[usize] {
        &self.node_pins[self.node_pin_start[i]..self.node_pin_start[i + 1]]
    }

    /// Distinct nets incident to node `i`, ascending.
    pub fn node_nets(&self, i: usize) -> &[usize] {
        &self.node_nets[self.node_net_start[i]..self.node_net_start[i + 1]]
    }

    pub fn terminal_size(&self) -> f64 {
        self.parts.terminal_size
    }

    pub fn terminal_spacing(&self) -> f64 {
        self.parts.terminal_spacing
    }

    /// Default cuboid height: twice the mean row height of the two dies.
    pub fn default_z_max(&self) -> f64 {
        self.parts.top.rows.height + self.parts.bottom.rows.height
    }

    /// Total movable area if every node were placed on `die`.
    pub fn total_area(&self, die: Die) -> f64 {
        (0..self.num_nodes()).map(|i| self.node_area(i, die)).sum()
    }
}

fn csr(n: usize, items: impl Iterator<Item = (usize, usize)> + Clone) -> (Vec<usize>, Vec<usize>) {
    let mut start = vec![0usize; n + 1];
    for (_, owner) in items.clone() {
        start[owner + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut out = vec![0usize; start[n]];
    for (val, owner) in items {
        out[fill[owner]] = val;
        fill[owner] += 1;
    }
    (start, out)
}

/// Rounds normalized depth to a die: bottom iff `z <= z_max/4`.
pub fn tentative_partition(z: &[f64], z_max: f64) -> Result<Vec<Die>> {
    let quarter = z_max / 4.0;
    let half = z_max / 2.0;
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            if !(0.0..=half).contains(&zi) {
                Err(Error::Domain(format!("node #{i} has z = {zi} outside [0, {half}]")))
            } else if zi <= quarter {
                Ok(Die::Bottom)
            } else {
                Ok(Die::Top)
            }
        })
        .collect()
}

/// 1 when the pins of a net sit on both dies.
pub fn net_cut(dies: impl IntoIterator<Item = Die>) -> u8 {
    let (mut lo, mut hi) = (1u8, 0u8);
    for d in dies {
        lo = lo.min(d.bit());
        hi = hi.max(d.bit());
    }
    hi.saturating_sub(lo)
}

/// Pinless square node absorbing whitespace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Filler {
    pub home: Die,
    pub side: f64,
}

/// Continuous 3D placement of design nodes followed by fillers.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub z_max: f64,
    pub partition: Vec<Die>,
    pub width: Vec<f64>,
    pub height: Vec<f64>,
    pub pin_dx: Vec<f64>,
    pub pin_dy: Vec<f64>,
    pub num_cells: usize,
    pub fillers: Vec<Filler>,
}

impl PlacementState {
    /// Builds a state from corner coordinates; partition and attributes are resolved.
    pub fn new(
        design: &Design,
        fillers: Vec<Filler>,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        z_max: f64,
    ) -> Result<Self> {
        let n = design.num_nodes() + fillers.len();
        if x.len() != n || y.len() != n || z.len() != n {
            return Err(Error::Validation(format!("placement vectors must have {n} entries")));
        }
        if !(z_max > 0.0) {
            return Err(Error::Config(format!("z_max must be positive, got {z_max}")));
        }
        let mut s = Self {
            x,
            y,
            z,
            z_max,
            partition: vec![Die::Bottom; n],
            width: vec![0.0; n],
            height: vec![0.0; n],
            pin_dx: vec![0.0; design.num_pins()],
            pin_dy: vec![0.0; design.num_pins()],
            num_cells: design.num_nodes(),
            fillers,
        };
        s.refresh_partition()?;
        s.apply_technology(design);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_filler(&self, i: usize) -> bool {
        i >= self.num_cells
    }

    /// Node depth; every node spans half the cuboid.
    pub fn depth(&self) -> f64 {
        self.z_max / 2.0
    }

    /// z offset shared by every pin.
    pub fn pin_z_offset(&self) -> f64 {
        self.z_max / 4.0
    }

    pub fn refresh_partition(&mut self) -> Result<()> {
        self.partition = tentative_partition(&self.z, self.z_max)?;
        Ok(())
    }

    /// Resolves sizes and pin offsets from the technology of each node's die.
    pub fn apply_technology(&mut self, design: &Design) {
        for i in 0..self.num_cells {
            let (w, h) = design.node_size(i, self.partition[i]);
            self.width[i] = w;
            self.height[i] = h;
        }
        for (k, f) in self.fillers.iter().enumerate() {
            self.width[self.num_cells + k] = f.side;
            self.height[self.num_cells + k] = f.side;
        }
        for p in 0..design.num_pins() {
            let (dx, dy) = design.pin_offset(p, self.partition[design.pin_node(p)]);
            self.pin_dx[p] = dx;
            self.pin_dy[p] = dy;
        }
    }

    pub fn pin_pos(&self, design: &Design, p: usize) -> (f64, f64) {
        let v = design.pin_node(p);
        (self.x[v] + self.pin_dx[p], self.y[v] + self.pin_dy[p])
    }

    /// Volume of a node: resolved planar area times depth.
    pub fn charge(&self, i: usize) -> f64 {
        self.width[i] * self.height[i] * self.depth()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Terminal {
    pub net: usize,
    /// Lower-left corner.
    pub x: f64,
    pub y: f64,
}

/// Discrete result: die and lower-left corner per design node plus terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub die: Vec<Die>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub terminals: Vec<Terminal>,
}

impl Solution {
    pub fn pin_pos(&self, design: &Design, p: usize) -> (f64, f64) {
        let v = design.pin_node(p);
        let (dx, dy) = design.pin_offset(p, self.die[v]);
        (self.x[v] + dx, self.y[v] + dy)
    }

    pub fn is_split(&self, design: &Design, e: usize) -> bool {
        net_cut(design.net_pins(e).map(|p| self.die[design.pin_node(p)])) == 1
    }

    pub fn terminal_center(&self, design: &Design, t: &Terminal) -> (f64, f64) {
        let h = design.terminal_size() / 2.0;
        (t.x + h, t.y + h)
    }
}
