//! CSV and JSON-sidecar export. All floating-point output uses 17
//! significant digits so runs can be audited byte-for-byte.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{EscapeErrorRow, PinnRow, XiEstimate};
use crate::error::Result;
use crate::fk::DensityEstimate;
use crate::grid::fmt17;
use crate::mc::Histogram;
use crate::quadrature::Field2d;

/// Write a density estimate as CSV: `t,x_0,...,x_{d-1},p,stderr,escape_fraction`,
/// one row per (time, node), time-major.
pub fn write_density_csv(path: &Path, est: &DensityEstimate) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "t")?;
    for a in 0..est.dim {
        write!(w, ",x_{a}")?;
    }
    writeln!(w, ",p,stderr,escape_fraction")?;
    let n = est.n_nodes();
    for (jt, &t) in est.times.iter().enumerate() {
        for k in 0..n {
            let row = jt * n + k;
            write!(w, "{}", fmt17(t))?;
            for v in est.node(k) {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(
                w,
                ",{},{},{}",
                fmt17(est.values[row]),
                fmt17(est.stderr[row]),
                fmt17(est.escape_fraction[row])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Histogram CSV in the same shape as a density estimate, with Poisson
/// standard errors and a constant outside-domain fraction column.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "t")?;
    for a in 0..hist.dim() {
        write!(w, ",x_{a}")?;
    }
    writeln!(w, ",p,stderr,escape_fraction")?;
    let outside = 1.0 - hist.fraction_inside();
    for flat in 0..hist.n_boxes() {
        write!(w, "{}", fmt17(hist.t()))?;
        for v in hist.center(flat) {
            write!(w, ",{}", fmt17(v))?;
        }
        writeln!(
            w,
            ",{},{},{}",
            fmt17(hist.density(flat)),
            fmt17(hist.density_stderr(flat)),
            fmt17(outside)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Containment curve CSV: `t,xi,stderr`.
pub fn write_xi_csv(path: &Path, xi: &XiEstimate) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,xi,stderr")?;
    for j in 0..xi.t_values.len() {
        writeln!(
            w,
            "{},{},{}",
            fmt17(xi.t_values[j]),
            fmt17(xi.xi[j]),
            fmt17(xi.stderr[j])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Escape study CSV: `epsilon,avg_abs_error`.
pub fn write_escape_study_csv(path: &Path, rows: &[EscapeErrorRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epsilon,avg_abs_error")?;
    for r in rows {
        writeln!(w, "{},{}", fmt17(r.epsilon), fmt17(r.avg_abs_error))?;
    }
    w.flush()?;
    Ok(())
}

/// Pathology table CSV: `k,J,bound,sup_gap`.
pub fn write_pinn_csv(path: &Path, rows: &[PinnRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,J,bound,sup_gap")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt17(r.k),
            fmt17(r.j_value),
            fmt17(r.bound),
            fmt17(r.sup_gap)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// 2D field CSV: `x,y,value`.
pub fn write_field2d_csv(path: &Path, field: &Field2d) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,value")?;
    for flat in 0..field.grid.len() {
        let node = field.grid.node(flat);
        writeln!(
            w,
            "{},{},{}",
            fmt17(node[0]),
            fmt17(node[1]),
            fmt17(field.values[flat])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON sidecar next to a CSV.
pub fn write_sidecar<T: Serialize>(path: &Path, meta: &T) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, meta)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
