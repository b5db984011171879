// SPDX-License-Identifier: Apache-2.0

//! End-to-end placement: global placement, terminal assignment,
//! legalization and detailed placement.

use crate::detail_place::{refine_pipeline, DetailOptions};
use crate::error::Result;
use crate::evaluate::exact_d2d_wl;
use crate::global_place::{run_global_place, GpConfig, GpResult};
use crate::hbt::assign_hbts;
use crate::legalize::{legalize_cells, legalize_hbts};
use crate::model::{Design, Solution};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowOptions {
    pub gp: GpConfig,
    pub detail: DetailOptions,
    pub skip_dp: bool,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub solution: Solution,
    pub gp: GpResult,
    /// Exact wirelength right after legalization.
    pub legal_wl: f64,
    /// Exact wirelength before refinement and after each refinement round;
    /// empty when detailed placement is skipped.
    pub refine_history: Vec<f64>,
    pub swaps: usize,
    pub reorders: usize,
}

pub fn place(design: &Design, opts: &FlowOptions) -> Result<FlowResult> {
    let gp = run_global_place(design, &opts.gp)?;
    let n = design.num_nodes();
    let (gx, gy) = (&gp.state.x[..n], &gp.state.y[..n]);
    let (x, y) = legalize_cells(design, &gp.partition, gx, gy, &opts.detail.legalize)?;
    let assignment = assign_hbts(design, &gp.partition, &x, &y);
    let terminals = legalize_hbts(design, &assignment, &opts.detail.legalize)?;
    let legal = Solution { die: gp.partition.clone(), x, y, terminals };
    let legal_wl = exact_d2d_wl(design, &legal)?.0;
    if opts.skip_dp {
        return Ok(FlowResult { solution: legal, gp, legal_wl, refine_history: Vec::new(), swaps: 0, reorders: 0 });
    }
    let refined = refine_pipeline(design, &legal, &opts.detail)?;
    Ok(FlowResult {
        solution: refined.solution,
        gp,
        legal_wl,
        refine_history: refined.history,
        swaps: refined.swaps,
        reorders: refined.reorders,
    })
}
