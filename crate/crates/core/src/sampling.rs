//! Stratified and i.i.d. uniform samples.
//!
//! Randomness is counter-addressed: replication `r` of a run with seed `s`
//! reads ChaCha8 stream `r` under key `s`, and stratum `i` starts at word
//! `2 d i` of that stream. Every stratum consumes exactly `d` uniforms
//! (two 32-bit words each), so any stratum of any replication can be drawn
//! in isolation and the result does not depend on traversal order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Orientation, Partition, Stratum};

/// Source stratum of a sample point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Stratum(usize),
    Iid,
}

/// `N` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    provenance: Vec<Provenance>,
    seed: u64,
    partition_hash: Option<u64>,
}

impl PointSet {
    /// Builds a point set from rows; all rows must share one dimension.
    pub fn from_rows(rows: Vec<Vec<f64>>, provenance: Vec<Provenance>, seed: u64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidParameter("point set needs at least one point".into()));
        }
        if provenance.len() != rows.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} provenance entries",
                rows.len(),
                provenance.len()
            )));
        }
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend(row);
        }
        Ok(Self {
            dim,
            coords,
            provenance,
            seed,
            partition_hash: None,
        })
    }

    /// Points without provenance information (marked i.i.d.).
    pub fn from_points(rows: Vec<Vec<f64>>) -> Result<Self> {
        let provenance = vec![Provenance::Iid; rows.len()];
        Self::from_rows(rows, provenance, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn partition_hash(&self) -> Option<u64> {
        self.partition_hash
    }
}

/// Random stream for one replication, positioned at a stratum.
pub fn substream(seed: u64, replication: u64, index: usize, dim: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng.set_word_pos(2 * dim as u128 * index as u128);
    rng
}

/// Uniform point in `stratum`, consuming exactly `d` uniforms from `rng`.
pub fn sample_stratum<R: RngCore>(stratum: &Stratum, rng: &mut R) -> Vec<f64> {
    match stratum {
        Stratum::Box(cell) => cell
            .lower()
            .iter()
            .zip(cell.sides())
            .map(|(lo, side)| lo + side * rng.gen::<f64>())
            .collect(),
        Stratum::Prism(prism) => {
            let mut u = rng.gen::<f64>();
            let mut v = rng.gen::<f64>();
            // Fold the unit square onto the triangle u + v ≤ 1.
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            if prism.orientation() == Orientation::Upper {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let a = prism.anchor();
            let b = prism.halfwidth();
            let mut point = Vec::with_capacity(a.len());
            point.push(a[0] + 2.0 * b * u);
            point.push(a[1] + b * v);
            for &lo in &a[2..] {
                point.push(lo + b * rng.gen::<f64>());
            }
            point
        }
    }
}

/// Draws the point of stratum `index` for the given replication directly
/// from its counter position.
pub fn sample_stratum_at(partition: &Partition, seed: u64, replication: u64, index: usize) -> Vec<f64> {
    let mut rng = substream(seed, replication, index, partition.dim());
    sample_stratum(&partition.strata()[index], &mut rng)
}

fn check_samplable(partition: &Partition) -> Result<()> {
    partition.check_shapes()?;
    if let Some((index, relative)) = partition.equivolume_violation() {
        return Err(Error::NotEquivolume { index, relative });
    }
    Ok(())
}

/// One uniform point per stratum, keyed by `(seed, 0, stratum index)`.
pub fn stratified_sample(partition: &Partition, seed: u64) -> Result<PointSet> {
    check_samplable(partition)?;
    Ok(stratified_replication(partition, seed, 0))
}

/// Replication `replication` of the stratified sample. Assumes a checked
/// partition.
pub(crate) fn stratified_replication(partition: &Partition, seed: u64, replication: u64) -> PointSet {
    let d = partition.dim();
    let mut rng = substream(seed, replication, 0, d);
    let mut coords = Vec::with_capacity(partition.len() * d);
    for stratum in partition.strata() {
        coords.extend(sample_stratum(stratum, &mut rng));
    }
    PointSet {
        dim: d,
        coords,
        provenance: (0..partition.len()).map(Provenance::Stratum).collect(),
        seed,
        partition_hash: Some(partition.identity_hash()),
    }
}

/// `n` independent uniform points in `[0, 1]^d`.
pub fn iid_sample(n: usize, d: usize, seed: u64) -> Result<PointSet> {
    iid_replication(n, d, seed, 0)
}

pub fn iid_replication(n: usize, d: usize, seed: u64, replication: u64) -> Result<PointSet> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "i.i.d. sample needs N ≥ 1 and d ≥ 1, got N = {n}, d = {d}"
        )));
    }
    let mut rng = substream(seed, replication, 0, d);
    let coords = (0..n * d).map(|_| rng.gen::<f64>()).collect();
    Ok(PointSet {
        dim: d,
        coords,
        provenance: vec![Provenance::Iid; n],
        seed,
        partition_hash: None,
    })
}
