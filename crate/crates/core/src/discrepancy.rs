//! Discrepancy function and squared L2-discrepancy of concrete point sets.

use crate::error::{Error, Result};
use crate::geometry::DomainBox;
use crate::quadrature::{CompensatedSum, GaussLegendre};
use crate::sampling::PointSet;

/// Largest point set accepted by [`l2_sq_quadrature`].
pub const QUADRATURE_MAX_POINTS: usize = 1_000;
/// Largest dimension accepted by [`l2_sq_quadrature`].
pub const QUADRATURE_MAX_DIM: usize = 3;
/// Largest number of grid cells accepted by [`l2_sq_quadrature`].
pub const QUADRATURE_MAX_CELLS: usize = 10_000_000;

/// `#{p ∈ P : p ≤ x} / N − |K ∩ (−∞, x]| / |K|`, counting closed boxes.
pub fn local_discrepancy(points: &PointSet, x: &[f64], domain: &DomainBox) -> f64 {
    let count = points
        .points()
        .filter(|p| p.iter().zip(x).all(|(pk, xk)| pk <= xk))
        .count();
    count as f64 / points.len() as f64 - domain.relative_corner_volume(x)
}

/// Squared L2-discrepancy of a point set in `[0, 1]^d` by Warnock's formula:
///
/// ```text
/// 3⁻ᵈ − (2/N) Σ_i Π_k (1 − x_ik²)/2 + (1/N²) Σ_{i,j} Π_k (1 − max(x_ik, x_jk))
/// ```
pub fn l2_sq_warnock(points: &PointSet) -> Result<f64> {
    warnock_coords(points.dim(), points.coords())
}

/// Warnock's formula on raw row-major coordinates.
pub fn warnock_coords(dim: usize, coords: &[f64]) -> Result<f64> {
    if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(format!(
            "{} coordinates do not form points of dimension {dim}",
            coords.len()
        )));
    }
    if let Some(pos) = coords.iter().position(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::CoordinateOutOfRange {
            point: pos / dim,
            value: coords[pos],
        });
    }
    let n = coords.len() / dim;
    let rows: Vec<&[f64]> = coords.chunks_exact(dim).collect();

    let mut single = CompensatedSum::new();
    let mut diagonal = CompensatedSum::new();
    let mut off_diagonal = CompensatedSum::new();
    for (i, row) in rows.iter().enumerate() {
        single.add(row.iter().map(|x| 0.5 * (1.0 - x * x)).product());
        diagonal.add(row.iter().map(|x| 1.0 - x).product());
        let mut partial = CompensatedSum::new();
        for other in &rows[i + 1..] {
            partial.add(
                row.iter()
                    .zip(other.iter())
                    .map(|(a, b)| 1.0 - a.max(*b))
                    .product(),
            );
        }
        off_diagonal.merge(partial);
    }
    let nf = n as f64;
    let mut total = CompensatedSum::new();
    total.add(3f64.powi(-(dim as i32)));
    total.add(-2.0 / nf * single.value());
    total.add(diagonal.value() / (nf * nf));
    total.add(2.0 * off_diagonal.value() / (nf * nf));
    Ok(total.value().max(0.0))
}

/// Squared L2-discrepancy on a box `K`, normalized by `|K|`, by direct
/// integration of `d_P(x)²`.
///
/// Each axis is cut at every point coordinate; on each resulting cell the
/// count is constant and `d_P²` is a polynomial of degree two per axis, so a
/// two-point Gauss rule per axis is exact.
pub fn l2_sq_quadrature(points: &PointSet, domain: &DomainBox) -> Result<f64> {
    let d = points.dim();
    let n = points.len();
    if d != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: d,
        });
    }
    if d > QUADRATURE_MAX_DIM || n > QUADRATURE_MAX_POINTS {
        return Err(Error::SizeLimit(format!(
            "quadrature oracle handles d ≤ {QUADRATURE_MAX_DIM} and N ≤ {QUADRATURE_MAX_POINTS}, got d = {d}, N = {n}"
        )));
    }

    // Breakpoints per axis.
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(d);
    for axis in 0..d {
        let (lo, hi) = (domain.lower()[axis], domain.upper()[axis]);
        let mut axis_cuts = vec![lo, hi];
        axis_cuts.extend(points.points().map(|p| p[axis]).filter(|&c| c > lo && c < hi));
        axis_cuts.sort_by(f64::total_cmp);
        axis_cuts.dedup();
        cuts.push(axis_cuts);
    }
    let shape: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let cells = shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .filter(|&c| c <= QUADRATURE_MAX_CELLS)
        .ok_or_else(|| Error::SizeLimit(format!("more than {QUADRATURE_MAX_CELLS} quadrature cells")))?;
    let mut strides = vec![1usize; d];
    for axis in (0..d.saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }

    // Each point is counted in every cell whose lower corner dominates it.
    let mut counts = vec![0u32; cells];
    'points: for p in points.points() {
        let mut flat = 0;
        for axis in 0..d {
            if p[axis] >= domain.upper()[axis] {
                continue 'points;
            }
            let idx = cuts[axis].partition_point(|&c| c < p[axis]);
            flat += idx.min(shape[axis] - 1) * strides[axis];
        }
        counts[flat] += 1;
    }
    for axis in 0..d {
        for flat in 0..cells {
            if !(flat / strides[axis]).is_multiple_of(shape[axis]) {
                counts[flat] += counts[flat - strides[axis]];
            }
        }
    }

    let rule = GaussLegendre::new(2);
    let axis_rules: Vec<Vec<Vec<(f64, f64)>>> = (0..d)
        .map(|axis| {
            let (lo, side) = (domain.lower()[axis], domain.side(axis));
            cuts[axis]
                .windows(2)
                .map(|w| {
                    rule.mapped(w[0], w[1])
                        .map(|(x, wt)| ((x - lo) / side, wt))
                        .collect()
                })
                .collect()
        })
        .collect();

    let nf = n as f64;
    let mut total = CompensatedSum::new();
    let mut cell = vec![0usize; d];
    let nodes_per_cell = 1usize << d;
    for &count in &counts {
        let fraction = count as f64 / nf;
        let mut cell_sum = 0.0;
        for node in 0..nodes_per_cell {
            let mut volume = 1.0;
            let mut weight = 1.0;
            for axis in 0..d {
                let (x, w) = axis_rules[axis][cell[axis]][(node >> axis) & 1];
                volume *= x;
                weight *= w;
            }
            let local = fraction - volume;
            cell_sum += weight * local * local;
        }
        total.add(cell_sum);
        for axis in (0..d).rev() {
            cell[axis] += 1;
            if cell[axis] < shape[axis] {
                break;
            }
            cell[axis] = 0;
        }
    }
    Ok(total.value() / domain.volume())
}
