// SPDX-License-Identifier: Apache-2.0

//! Text formats: design input, solution output, and SVG snapshots.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{
    Design, DesignParts, Die, DieSpec, LibCell, LibPin, Net, NetPin, Node, PlacementState, RowSpec,
    Solution, Technology, Terminal,
};

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
                .filter(|(_, t)| !t.is_empty()),
        );
        Self { inner: it.peekable(), last: 0 }
    }

    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        let r = self.inner.next();
        if let Some((l, _)) = &r {
            self.last = *l;
        }
        r
    }

    /// Next line, which must start with `keyword` and carry `arity` arguments.
    fn expect(&mut self, keyword: &str, arity: usize, context: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.inner.peek() {
            Some((l, t)) if t[0] == keyword => {
                if t.len() != arity + 1 {
                    return Err(Error::parse(*l, format!("{keyword} expects {arity} arguments, got {}", t.len() - 1)));
                }
                Ok(self.next().unwrap())
            }
            Some((l, t)) => Err(Error::parse(*l, format!("expected {keyword} ({context}), found {}", t[0]))),
            None => Err(Error::parse(self.last + 1, format!("unexpected end of input: expected {keyword} ({context})"))),
        }
    }
}

fn num(line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("invalid number {tok:?}")))
}

fn count(line: usize, tok: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::parse(line, format!("invalid count {tok:?}")))
}

fn args(line: usize, t: &[&str], arity: usize) -> Result<()> {
    if t.len() != arity + 1 {
        return Err(Error::parse(line, format!("{} expects {arity} arguments, got {}", t[0], t.len() - 1)));
    }
    Ok(())
}

#[derive(Default)]
struct DieDraft {
    util: Option<f64>,
    rows: Option<RowSpec>,
    tech: Option<String>,
}

pub fn parse_design(text: &str) -> Result<Design> {
    let mut lines = Lines::new(text);
    let mut techs: Vec<Technology> = Vec::new();
    let mut die_size: Option<(f64, f64)> = None;
    let mut dies = [DieDraft::default(), DieDraft::default()];
    let mut term_size = None;
    let mut term_spacing = None;
    let mut nodes: Option<Vec<Node>> = None;
    let mut nets: Option<Vec<Net>> = None;

    while let Some((line, t)) = lines.next() {
        let key = t[0];
        let die_of = |k: &str| if k.starts_with("Top") { Die::Top } else { Die::Bottom };
        match key {
            "NumTechnologies" => args(line, &t, 1)?,
            "Technology" => {
                args(line, &t, 2)?;
                if techs.iter().any(|x| x.name == t[1]) {
                    return Err(Error::parse(line, format!("duplicate technology {}", t[1])));
                }
                let n = count(line, t[2])?;
                let mut cells = Vec::with_capacity(n);
                for _ in 0..n {
                    let (l, c) = lines.expect("LibCell", 4, &format!("technology {} declares {n} lib cells", t[1]))?;
                    let np = count(l, c[4])?;
                    let mut pins = Vec::with_capacity(np);
                    for _ in 0..np {
                        let (pl, p) = lines.expect("Pin", 3, &format!("lib cell {} declares {np} pins", c[1]))?;
                        pins.push(LibPin { name: p[1].to_string(), x: num(pl, p[2])?, y: num(pl, p[3])? });
                    }
                    cells.push(LibCell { name: c[1].to_string(), width: num(l, c[2])?, height: num(l, c[3])?, pins });
                }
                techs.push(Technology::new(t[1], cells).map_err(|e| Error::parse(line, e.to_string()))?);
            }
            "DieSize" => {
                args(line, &t, 4)?;
                let v: Vec<f64> = t[1..].iter().map(|s| num(line, s)).collect::<Result<_>>()?;
                if v[0] != 0.0 || v[1] != 0.0 {
                    return Err(Error::parse(line, "die origin must be (0, 0)"));
                }
                die_size = Some((v[2], v[3]));
            }
            "TopDieMaxUtil" | "BottomDieMaxUtil" => {
                args(line, &t, 1)?;
                let u = num(line, t[1])? / 100.0;
                if !(u > 0.0 && u <= 1.0) {
                    return Err(Error::parse(line, format!("utilization {} outside (0, 100]", t[1])));
                }
                dies[die_of(key).index()].util = Some(u);
            }
            "TopDieRows" | "BottomDieRows" => {
                args(line, &t, 5)?;
                dies[die_of(key).index()].rows = Some(RowSpec {
                    start_x: num(line, t[1])?,
                    start_y: num(line, t[2])?,
                    length: num(line, t[3])?,
                    height: num(line, t[4])?,
                    repeat: count(line, t[5])?,
                });
            }
            "TopDieTech" | "BottomDieTech" => {
                args(line, &t, 1)?;
                dies[die_of(key).index()].tech = Some(t[1].to_string());
            }
            "TerminalSize" => {
                args(line, &t, 1)?;
                term_size = Some(num(line, t[1])?);
            }
            "TerminalSpacing" => {
                args(line, &t, 1)?;
                term_spacing = Some(num(line, t[1])?);
            }
            "NumInstances" => {
                args(line, &t, 1)?;
                let n = count(line, t[1])?;
                let mut v = Vec::with_capacity(n);
                for k in 0..n {
                    let ctx = format!("NumInstances declares {n} but only {k} were listed");
                    let (_, i) = lines.expect("Inst", 2, &ctx)?;
                    v.push(Node { name: i[1].to_string(), lib_cell: i[2].to_string() });
                }
                nodes = Some(v);
            }
            "NumNets" => {
                args(line, &t, 1)?;
                let inst = nodes
                    .as_ref()
                    .ok_or_else(|| Error::parse(line, "NumNets must follow NumInstances"))?;
                let index: std::collections::HashMap<&str, usize> =
                    inst.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
                let m = count(line, t[1])?;
                let mut v = Vec::with_capacity(m);
                for k in 0..m {
                    let ctx = format!("NumNets declares {m} but only {k} were listed");
                    let (nl, n) = lines.expect("Net", 2, &ctx)?;
                    let np = count(nl, n[2])?;
                    let mut pins = Vec::with_capacity(np);
                    for j in 0..np {
                        let ctx = format!("net {} declares {np} pins but only {j} were listed", n[1]);
                        let (pl, p) = lines.expect("Pin", 1, &ctx)?;
                        let (inst_name, pin) = p[1]
                            .split_once('/')
                            .ok_or_else(|| Error::parse(pl, format!("pin reference {} lacks '/'", p[1])))?;
                        let node = *index
                            .get(inst_name)
                            .ok_or_else(|| Error::parse(pl, format!("unknown instance {inst_name}")))?;
                        pins.push(NetPin { node, pin: pin.to_string() });
                    }
                    v.push(Net { name: n[1].to_string(), pins });
                }
                nets = Some(v);
            }
            "LibCell" | "Pin" | "Inst" | "Net" => {
                return Err(Error::parse(line, format!("{key} outside its section (count mismatch?)")));
            }
            other => return Err(Error::parse(line, format!("unknown directive {other}"))),
        }
    }

    let end = lines.last + 1;
    let missing = |what: &str| Error::parse(end, format!("missing {what}"));
    let (x_max, y_max) = die_size.ok_or_else(|| missing("DieSize"))?;
    let mut specs = Vec::new();
    for d in [Die::Bottom, Die::Top] {
        let draft = &mut dies[d.index()];
        let prefix = if d == Die::Top { "TopDie" } else { "BottomDie" };
        specs.push(DieSpec {
            x_max,
            y_max,
            max_util: draft.util.ok_or_else(|| missing(&format!("{prefix}MaxUtil")))?,
            rows: draft.rows.ok_or_else(|| missing(&format!("{prefix}Rows")))?,
            tech: draft.tech.take().ok_or_else(|| missing(&format!("{prefix}Tech")))?,
        });
    }
    let top = specs.pop().unwrap();
    let bottom = specs.pop().unwrap();
    Design::new(DesignParts {
        top,
        bottom,
        technologies: techs,
        nodes: nodes.ok_or_else(|| missing("NumInstances"))?,
        nets: nets.ok_or_else(|| missing("NumNets"))?,
        terminal_size: term_size.ok_or_else(|| missing("TerminalSize"))?,
        terminal_spacing: term_spacing.ok_or_else(|| missing("TerminalSpacing"))?,
    })
}

/// Shortest decimal form, trimmed to ten fractional digits.
fn fmt_num(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn write_design(design: &Design) -> String {
    let p = design.parts();
    let mut o = String::new();
    let _ = writeln!(o, "NumTechnologies {}", p.technologies.len());
    for t in &p.technologies {
        let _ = writeln!(o, "Technology {} {}", t.name, t.lib_cells.len());
        for c in &t.lib_cells {
            let _ = writeln!(o, "LibCell {} {} {} {}", c.name, fmt_num(c.width), fmt_num(c.height), c.pins.len());
            for pin in &c.pins {
                let _ = writeln!(o, "Pin {} {} {}", pin.name, fmt_num(pin.x), fmt_num(pin.y));
            }
        }
    }
    o.push('\n');
    let _ = writeln!(o, "DieSize 0 0 {} {}", fmt_num(p.top.x_max), fmt_num(p.top.y_max));
    let _ = writeln!(o, "TopDieMaxUtil {}", fmt_num(p.top.max_util * 100.0));
    let _ = writeln!(o, "BottomDieMaxUtil {}", fmt_num(p.bottom.max_util * 100.0));
    for (name, d) in [("TopDieRows", &p.top), ("BottomDieRows", &p.bottom)] {
        let r = &d.rows;
        let _ = writeln!(
            o,
            "{name} {} {} {} {} {}",
            fmt_num(r.start_x),
            fmt_num(r.start_y),
            fmt_num(r.length),
            fmt_num(r.height),
            r.repeat
        );
    }
    let _ = writeln!(o, "TopDieTech {}", p.top.tech);
    let _ = writeln!(o, "BottomDieTech {}", p.bottom.tech);
    let _ = writeln!(o, "TerminalSize {}", fmt_num(p.terminal_size));
    let _ = writeln!(o, "TerminalSpacing {}", fmt_num(p.terminal_spacing));
    o.push('\n');
    let _ = writeln!(o, "NumInstances {}", p.nodes.len());
    for n in &p.nodes {
        let _ = writeln!(o, "Inst {} {}", n.name, n.lib_cell);
    }
    o.push('\n');
    let _ = writeln!(o, "NumNets {}", p.nets.len());
    for net in &p.nets {
        let _ = writeln!(o, "Net {} {}", net.name, net.pins.len());
        for pin in &net.pins {
            let _ = writeln!(o, "Pin {}/{}", p.nodes[pin.node].name, pin.pin);
        }
    }
    o
}

/// Half-up rounding used for every output coordinate.
pub fn round_coord(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

pub fn write_solution(design: &Design, sol: &Solution) -> String {
    let mut o = String::new();
    for die in [Die::Top, Die::Bottom] {
        let members: Vec<usize> = (0..design.num_nodes()).filter(|&i| sol.die[i] == die).collect();
        let head = if die == Die::Top { "TopDiePlacement" } else { "BottomDiePlacement" };
        let _ = writeln!(o, "{head} {}", members.len());
        for i in members {
            let _ = writeln!(o, "Inst {} {} {}", design.node_name(i), round_coord(sol.x[i]), round_coord(sol.y[i]));
        }
    }
    let mut terms: Vec<&Terminal> = sol.terminals.iter().collect();
    terms.sort_by_key(|t| t.net);
    let _ = writeln!(o, "NumTerminals {}", terms.len());
    for t in terms {
        let _ = writeln!(o, "Terminal {} {} {}", design.net_name(t.net), round_coord(t.x), round_coord(t.y));
    }
    o
}

pub fn parse_solution(text: &str, design: &Design) -> Result<Solution> {
    let mut lines = Lines::new(text);
    let n = design.num_nodes();
    let mut placed: Vec<Option<(Die, f64, f64)>> = vec![None; n];
    let mut terminals = Vec::new();
    while let Some((line, t)) = lines.next() {
        match t[0] {
            "TopDiePlacement" | "BottomDiePlacement" => {
                args(line, &t, 1)?;
                let die = if t[0] == "TopDiePlacement" { Die::Top } else { Die::Bottom };
                let k = count(line, t[1])?;
                for j in 0..k {
                    let ctx = format!("{} declares {k} but only {j} were listed", t[0]);
                    let (l, i) = lines.expect("Inst", 3, &ctx)?;
                    let v = design
                        .node_by_name(i[1])
                        .ok_or_else(|| Error::parse(l, format!("unknown instance {}", i[1])))?;
                    if placed[v].is_some() {
                        return Err(Error::parse(l, format!("instance {} placed twice", i[1])));
                    }
                    placed[v] = Some((die, num(l, i[2])?, num(l, i[3])?));
                }
            }
            "NumTerminals" => {
                args(line, &t, 1)?;
                let k = count(line, t[1])?;
                for j in 0..k {
                    let ctx = format!("NumTerminals declares {k} but only {j} were listed");
                    let (l, i) = lines.expect("Terminal", 3, &ctx)?;
                    let net = design
                        .net_by_name(i[1])
                        .ok_or_else(|| Error::parse(l, format!("unknown net {}", i[1])))?;
                    terminals.push(Terminal { net, x: num(l, i[2])?, y: num(l, i[3])? });
                }
            }
            other => return Err(Error::parse(line, format!("unexpected {other}"))),
        }
    }
    let mut sol = Solution { die: Vec::with_capacity(n), x: Vec::with_capacity(n), y: Vec::with_capacity(n), terminals };
    for (i, p) in placed.into_iter().enumerate() {
        let (d, x, y) =
            p.ok_or_else(|| Error::Validation(format!("instance {} is not placed", design.node_name(i))))?;
        sol.die.push(d);
        sol.x.push(x);
        sol.y.push(y);
    }
    Ok(sol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DieView {
    Top,
    Bottom,
    Both,
}

impl DieView {
    fn shows(self, d: Die) -> bool {
        match self {
            DieView::Both => true,
            DieView::Top => d == Die::Top,
            DieView::Bottom => d == Die::Bottom,
        }
    }
}

pub const TOP_COLOR: &str = "#d62728";
pub const BOTTOM_COLOR: &str = "#1f77b4";
pub const FILLER_COLOR: &str = "#b0b0b0";
pub const TERMINAL_COLOR: &str = "#2ca02c";

struct Svg {
    out: String,
    y_max: f64,
}

impl Svg {
    fn new(x_max: f64, y_max: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}" width="800" height="{}">"#,
            fmt_num(x_max),
            fmt_num(y_max),
            (800.0 * y_max / x_max).round().max(1.0)
        );
        let _ = writeln!(
            out,
            r#"<rect class="die" x="0" y="0" width="{}" height="{}" fill="white" stroke="black" stroke-width="{}"/>"#,
            fmt_num(x_max),
            fmt_num(y_max),
            fmt_num(x_max / 400.0)
        );
        Self { out, y_max }
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}" fill-opacity="0.6"/>"#,
            fmt_num(x),
            fmt_num(self.y_max - y - h),
            fmt_num(w),
            fmt_num(h)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

pub fn render_solution_svg(design: &Design, sol: &Solution, view: DieView) -> String {
    let top = design.die(Die::Top);
    let mut svg = Svg::new(top.x_max, top.y_max);
    for i in 0..design.num_nodes() {
        let d = sol.die[i];
        if view.shows(d) {
            let (w, h) = design.node_size(i, d);
            let color = if d == Die::Top { TOP_COLOR } else { BOTTOM_COLOR };
            svg.rect(d.name(), sol.x[i], sol.y[i], w, h, color);
        }
    }
    let s = design.terminal_size();
    for t in &sol.terminals {
        svg.rect("terminal", t.x, t.y, s, s, TERMINAL_COLOR);
    }
    svg.finish()
}

pub fn render_state_svg(design: &Design, state: &PlacementState, view: DieView) -> String {
    let top = design.die(Die::Top);
    let mut svg = Svg::new(top.x_max, top.y_max);
    for i in 0..state.len() {
        let d = state.partition[i];
        if view.shows(d) {
            let (class, color) = if state.is_filler(i) {
                ("filler", FILLER_COLOR)
            } else if d == Die::Top {
                ("top", TOP_COLOR)
            } else {
                ("bottom", BOTTOM_COLOR)
            };
            svg.rect(class, state.x[i], state.y[i], state.width[i], state.height[i], color);
        }
    }
    svg.finish()
}
