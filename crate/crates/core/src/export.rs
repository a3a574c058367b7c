//! CSV writers for sweep results. Values use `f64`'s shortest round-trip
//! formatting.

use std::io::Write;

use crate::dynamics::RoutingModel;
use crate::graph::NoirGraph;
use crate::sweep::{IterationRecord, SweepState, ZetaRow};

pub fn trajectory_header(g: &NoirGraph, include_lambda: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(g.inlets().map(|j| format!("u_{j}")));
    h.extend(g.interior().map(|i| format!("x_{i}")));
    h.push("z_net".into());
    if include_lambda {
        h.extend(g.interior().map(|i| format!("lambda_{i}")));
    }
    h
}

/// One row per grid point: time, inlet flows, densities, net outlet flow and
/// optionally the co-state.
pub fn write_trajectory<W: Write>(
    out: W,
    g: &NoirGraph,
    rm: &RoutingModel,
    state: &SweepState,
    include_lambda: bool,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(g, include_lambda))?;
    let z = state.net_outlet_outflow(rm);
    let mut row = Vec::new();
    for (k, zk) in z.iter().enumerate() {
        row.clear();
        row.push(state.grid.time(k).to_string());
        row.extend(state.u[k].iter().map(f64::to_string));
        row.extend(state.x[k].iter().map(f64::to_string));
        row.push(zk.to_string());
        if include_lambda {
            row.extend(state.lambda[k].iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics<W: Write>(out: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "delta_u", "cost", "terminal_residual", "boundary_active"])?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.delta_u.to_string(),
            r.cost.to_string(),
            r.terminal_residual.to_string(),
            r.boundary_active.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_zeta_table<W: Write>(out: W, rows: &[ZetaRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["zeta", "max_abs_lambda0"])?;
    for r in rows {
        w.write_record([r.zeta.to_string(), r.max_abs_lambda0.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
