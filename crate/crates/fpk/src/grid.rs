//! Regular node grids: indexing, multilinear interpolation and the text
//! file format used to exchange tabulated log-densities.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grid axis: `count` nodes evenly spaced on [min, max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidArgument(format!(
                "axis range must be finite with min < max, got [{min}, {max}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "axis needs at least 2 nodes, got {count}"
            )));
        }
        Ok(Axis { min, max, count })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.min + self.spacing() * i as f64
    }
}

/// A d-dimensional node grid, linearized row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularGrid {
    axes: Vec<Axis>,
}

impl RegularGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        Ok(RegularGrid { axes })
    }

    /// Uniform grid with `counts[a]` nodes spanning `lo[a]..hi[a]` per axis.
    pub fn from_bounds(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(Error::InvalidArgument(
                "grid bounds and counts must have equal lengths".into(),
            ));
        }
        let axes = lo
            .iter()
            .zip(hi)
            .zip(counts)
            .map(|((&min, &max), &count)| Axis::new(min, max, count))
            .collect::<Result<Vec<_>>>()?;
        RegularGrid::new(axes)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    #[inline]
    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Decompose a flat index into per-axis indices (last axis fastest).
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.dim());
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.axes[a].count;
            flat /= self.axes[a].count;
        }
    }

    /// Flat index of per-axis indices.
    #[inline]
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.axes[a].count);
            flat = flat * self.axes[a].count + i;
        }
        flat
    }

    /// Coordinates of the node at a flat index.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a].node(i))
            .collect()
    }

    pub fn node_into(&self, flat: usize, idx_scratch: &mut [usize], out: &mut [f64]) {
        self.unravel(flat, idx_scratch);
        for a in 0..self.dim() {
            out[a] = self.axes[a].node(idx_scratch[a]);
        }
    }

    /// Whether `x` lies inside the grid extent (inclusive faces).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.axes)
            .all(|(&v, ax)| v >= ax.min && v <= ax.max)
    }

    /// Multilinear interpolation of node values at `x`, clamping coordinates
    /// to the grid extent (constant extrapolation outside).
    pub fn interpolate_clamped(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        debug_assert_eq!(x.len(), self.dim());
        let d = self.dim();
        debug_assert!(d <= 16, "interpolation limited to 16 axes");
        let mut base = [0usize; 16];
        let mut frac = [0f64; 16];
        for a in 0..d {
            let ax = &self.axes[a];
            let mut u = ((x[a] - ax.min) / ax.spacing()).clamp(0.0, (ax.count - 1) as f64);
            // Snap queries that sit a few ulps from a node onto it, so node
            // lookups return stored values bit-exactly.
            let r = u.round();
            if (u - r).abs() <= 8.0 * f64::EPSILON * u.abs().max(1.0) {
                u = r;
            }
            let mut i = u.floor() as usize;
            if i >= ax.count - 1 {
                i = ax.count - 2;
            }
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let hi = (corner >> a) & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.axes[a].count + base[a] + hi as usize;
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }
}

/// Write a tabulated log-density to the plain-text grid format:
/// `dim=<d>`, one `axis=<i> min=<f> max=<f> count=<n>` line per axis, then
/// one value per line in row-major order with the last axis fastest.
pub fn write_grid_file(path: &Path, grid: &RegularGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} nodes but {} values were supplied",
            grid.len(),
            values.len()
        )));
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "dim={}", grid.dim())?;
    for (i, ax) in grid.axes().iter().enumerate() {
        writeln!(
            w,
            "axis={} min={} max={} count={}",
            i,
            fmt17(ax.min),
            fmt17(ax.max),
            ax.count
        )?;
    }
    for v in values {
        writeln!(w, "{}", fmt17(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a grid file written by [`write_grid_file`].
pub fn read_grid_file(path: &Path) -> Result<(RegularGrid, Vec<f64>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::GridFormat("empty file".into()))??;
    let dim: usize = header
        .strip_prefix("dim=")
        .ok_or_else(|| Error::GridFormat(format!("expected `dim=<d>`, got `{header}`")))?
        .trim()
        .parse()
        .map_err(|e| Error::GridFormat(format!("bad dim: {e}")))?;
    if dim == 0 {
        return Err(Error::GridFormat("dim must be positive".into()));
    }

    let mut axes = Vec::with_capacity(dim);
    for i in 0..dim {
        let line = lines
            .next()
            .ok_or_else(|| Error::GridFormat(format!("missing axis line {i}")))??;
        axes.push(parse_axis_line(&line, i)?);
    }
    let grid = RegularGrid::new(axes)?;

    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|e| Error::GridFormat(format!("bad value `{t}`: {e}")))?;
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(Error::GridFormat(format!(
            "expected {} values, found {}",
            grid.len(),
            values.len()
        )));
    }
    Ok((grid, values))
}

fn parse_axis_line(line: &str, expect_idx: usize) -> Result<Axis> {
    let mut idx = None;
    let mut min = None;
    let mut max = None;
    let mut count = None;
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::GridFormat(format!("bad axis token `{tok}`")))?;
        match k {
            "axis" => idx = Some(v.parse::<usize>()),
            "min" => min = Some(v.parse::<f64>()),
            "max" => max = Some(v.parse::<f64>()),
            "count" => count = Some(v.parse::<usize>()),
            other => return Err(Error::GridFormat(format!("unknown axis key `{other}`"))),
        }
    }
    let bad = |what: &str| Error::GridFormat(format!("axis line `{line}`: bad {what}"));
    let idx = idx.ok_or_else(|| bad("index"))?.map_err(|_| bad("index"))?;
    if idx != expect_idx {
        return Err(Error::GridFormat(format!(
            "axis lines out of order: expected {expect_idx}, got {idx}"
        )));
    }
    let min = min.ok_or_else(|| bad("min"))?.map_err(|_| bad("min"))?;
    let max = max.ok_or_else(|| bad("max"))?.map_err(|_| bad("max"))?;
    let count = count.ok_or_else(|| bad("count"))?.map_err(|_| bad("count"))?;
    Axis::new(min, max, count)
}

/// Decimal float with 17 significant digits (round-trips f64 exactly).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip_last_axis_fastest() {
        let g = RegularGrid::from_bounds(&[0.0, 0.0], &[1.0, 2.0], &[3, 4]).unwrap();
        assert_eq!(g.len(), 12);
        // flat index 1 advances the *last* axis.
        assert_eq!(g.node(0), vec![0.0, 0.0]);
        assert_eq!(g.node(1)[1], 2.0 / 3.0);
        assert_eq!(g.node(4), vec![0.5, 0.0]);
        let mut idx = [0usize; 2];
        for flat in 0..g.len() {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
        }
    }

    #[test]
    fn interpolation_exact_on_affine_data() {
        let g = RegularGrid::from_bounds(&[-1.0, 0.0], &[1.0, 2.0], &[5, 7]).unwrap();
        let f = |x: &[f64]| 3.0 + 2.0 * x[0] - 0.5 * x[1];
        let values: Vec<f64> = (0..g.len()).map(|i| f(&g.node(i))).collect();
        for &x in &[[-0.3, 0.7], [0.99, 1.99], [-1.0, 0.0], [0.123, 1.456]] {
            let v = g.interpolate_clamped(&values, &x);
            assert!((v - f(&x)).abs() < 1e-12, "{x:?}: {v}");
        }
        // Clamping: outside queries equal nearest-face values.
        let v = g.interpolate_clamped(&values, &[5.0, -3.0]);
        assert!((v - f(&[1.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn interpolation_at_nodes_is_bit_exact() {
        let g = RegularGrid::from_bounds(&[0.0, -2.0, 1.0], &[1.0, 2.0, 4.0], &[4, 5, 3]).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        for flat in 0..g.len() {
            let x = g.node(flat);
            assert_eq!(g.interpolate_clamped(&values, &x), values[flat]);
        }
    }

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pinf.grid");
        let g = RegularGrid::from_bounds(&[-3.0, -3.0], &[3.0, 3.0], &[11, 13]).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|i| -((i as f64) * 0.137).cos()).collect();
        write_grid_file(&path, &g, &values).unwrap();
        let (g2, v2) = read_grid_file(&path).unwrap();
        assert_eq!(g, g2);
        assert_eq!(values, v2);
    }

    #[test]
    fn grid_file_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.grid");
        std::fs::write(&path, "dim=2\naxis=0 min=0 max=1 count=3\n").unwrap();
        assert!(matches!(read_grid_file(&path), Err(Error::GridFormat(_))));
        std::fs::write(&path, "size=2\n").unwrap();
        assert!(matches!(read_grid_file(&path), Err(Error::GridFormat(_))));
    }
}
