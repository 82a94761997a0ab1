//! Builders for jittered grids and their triangle-pair modifications.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::in_improvement_region;
use crate::geometry::{BoxStratum, DomainBox, Orientation, Partition, Stratum, TrianglePrism};

/// Default cap on `m^d` for grid builders.
pub const DEFAULT_MAX_STRATA: usize = 10_000_000;

/// Position of a horizontally adjacent cell pair, measured from the upper
/// right corner of the unit square in grid steps: `z1 = i / m`, `z2 = j / m`.
///
/// The modified rectangle is `[1 − z1 − 2/m, 1 − z1] × [1 − z2 − 1/m, 1 − z2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairPosition {
    pub i: usize,
    pub j: usize,
}

impl PairPosition {
    pub const CORNER: PairPosition = PairPosition { i: 0, j: 0 };

    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    /// Snaps real coordinates onto the `1/m` grid, rejecting off-grid input.
    pub fn from_z(m: usize, z1: f64, z2: f64) -> Result<Self> {
        let snap = |z: f64| -> Result<usize> {
            let scaled = z * m as f64;
            let rounded = scaled.round();
            if rounded < 0.0 || (scaled - rounded).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "z = {z} is not a multiple of 1/{m}"
                )));
            }
            Ok(rounded as usize)
        };
        let position = Self::new(snap(z1)?, snap(z2)?);
        position.check(m)?;
        Ok(position)
    }

    pub fn z1(&self, m: usize) -> f64 {
        self.i as f64 / m as f64
    }

    pub fn z2(&self, m: usize) -> f64 {
        self.j as f64 / m as f64
    }

    pub fn is_admissible(&self, m: usize) -> bool {
        m >= 2 && self.i + 2 <= m && self.j < m
    }

    pub fn check(&self, m: usize) -> Result<()> {
        if self.is_admissible(m) {
            Ok(())
        } else {
            Err(Error::PositionOutOfRange {
                m,
                i: self.i,
                j: self.j,
            })
        }
    }

    /// Grid column of the left cell and row of both cells.
    pub fn cells(&self, m: usize) -> (usize, usize) {
        (m - self.i - 2, m - self.j - 1)
    }
}

/// Every admissible position on the `m × m` grid, `i` major.
pub fn admissible_positions(m: usize) -> Vec<PairPosition> {
    if m < 2 {
        return Vec::new();
    }
    (0..=m - 2)
        .flat_map(|i| (0..m).map(move |j| PairPosition::new(i, j)))
        .collect()
}

/// Column offsets `i ∈ {0, 2, …, 2⌊(m−2)/2⌋}` used by the multi-site schemes.
pub fn every_second_column(m: usize) -> Vec<usize> {
    if m < 2 {
        return Vec::new();
    }
    (0..=m - 2).step_by(2).collect()
}

/// Named partitions of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    Jittered,
    P00,
    P01,
    P10,
    P11,
    TopRow,
    All,
}

impl VariantName {
    pub const ALL: [VariantName; 7] = [
        VariantName::Jittered,
        VariantName::P11,
        VariantName::P01,
        VariantName::P10,
        VariantName::P00,
        VariantName::TopRow,
        VariantName::All,
    ];

    /// Pair positions modified by this variant.
    pub fn positions(self, m: usize) -> Vec<PairPosition> {
        if m < 2 {
            return Vec::new();
        }
        match self {
            VariantName::Jittered => Vec::new(),
            VariantName::P11 => vec![PairPosition::new(0, 0)],
            VariantName::P01 => vec![PairPosition::new(m - 2, 0)],
            VariantName::P10 => vec![PairPosition::new(0, m - 1)],
            VariantName::P00 => vec![PairPosition::new(m - 2, m - 1)],
            VariantName::TopRow => every_second_column(m)
                .into_iter()
                .map(|i| PairPosition::new(i, 0))
                .collect(),
            VariantName::All => every_second_column(m)
                .into_iter()
                .flat_map(|i| (0..m).map(move |j| PairPosition::new(i, j)))
                .filter(|z| in_improvement_region(m, *z))
                .collect(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VariantName::Jittered => "jittered",
            VariantName::P00 => "p00",
            VariantName::P01 => "p01",
            VariantName::P10 => "p10",
            VariantName::P11 => "p11",
            VariantName::TopRow => "toprow",
            VariantName::All => "all",
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jittered" | "jit" => Ok(VariantName::Jittered),
            "p00" => Ok(VariantName::P00),
            "p01" => Ok(VariantName::P01),
            "p10" => Ok(VariantName::P10),
            "p11" => Ok(VariantName::P11),
            "toprow" => Ok(VariantName::TopRow),
            "all" => Ok(VariantName::All),
            other => Err(Error::Parse(format!("unknown partition variant `{other}`"))),
        }
    }
}

fn grid_size(m: usize, d: usize, cap: usize) -> Result<usize> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "jittered grid needs m ≥ 1 and d ≥ 1, got m = {m}, d = {d}"
        )));
    }
    let requested = (m as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::TooManyStrata { requested, cap });
    }
    Ok(requested as usize)
}

/// Lexicographic cell index with axis 0 most significant.
fn flat_index(m: usize, cell: &[usize]) -> usize {
    cell.iter().fold(0, |acc, &c| acc * m + c)
}

/// `m^d` congruent cubes of side `1/m` on `[0, 1]^d`, in lexicographic order.
pub fn jittered(m: usize, d: usize) -> Result<Partition> {
    jittered_with_cap(m, d, DEFAULT_MAX_STRATA)
}

pub fn jittered_with_cap(m: usize, d: usize, cap: usize) -> Result<Partition> {
    let count = grid_size(m, d, cap)?;
    let side = 1.0 / m as f64;
    let mut strata = Vec::with_capacity(count);
    let mut cell = vec![0usize; d];
    for _ in 0..count {
        let lower = cell.iter().map(|&c| c as f64 / m as f64).collect();
        strata.push(Stratum::Box(BoxStratum::new(lower, vec![side; d])?));
        for axis in (0..d).rev() {
            cell[axis] += 1;
            if cell[axis] < m {
                break;
            }
            cell[axis] = 0;
        }
    }
    Partition::new(DomainBox::unit(d), strata)
}

/// Jittered grid with the cell pair at each position replaced by two
/// triangular prisms. The Lower prism takes the left cell's index and the
/// Upper prism the right cell's.
pub fn modified_pair(m: usize, d: usize, positions: &[PairPosition]) -> Result<Partition> {
    if d < 2 {
        return Err(Error::Unsupported("pair modifications need d ≥ 2".into()));
    }
    for z in positions {
        z.check(m)?;
        if d > 2 && *z != PairPosition::CORNER {
            return Err(Error::Unsupported(format!(
                "in d = {d} only the corner position (0, 0) is supported, got ({}, {})",
                z.i, z.j
            )));
        }
    }

    let mut claimed: Vec<Option<usize>> = vec![None; m * m];
    for (k, z) in positions.iter().enumerate() {
        let (col, row) = z.cells(m);
        for c in [col, col + 1] {
            if let Some(first) = claimed[c * m + row].replace(k) {
                return Err(Error::OverlappingPositions { first, second: k });
            }
        }
    }

    let base = jittered(m, d)?;
    let mut strata = base.strata().to_vec();
    let b = 1.0 / m as f64;
    for z in positions {
        let (col, row) = z.cells(m);
        let mut cell = vec![m - 1; d];
        cell[0] = col;
        cell[1] = row;
        let anchor: Vec<f64> = cell.iter().map(|&c| c as f64 / m as f64).collect();
        let left = flat_index(m, &cell);
        cell[0] = col + 1;
        let right = flat_index(m, &cell);
        strata[left] = Stratum::Prism(TrianglePrism::new(anchor.clone(), b, Orientation::Lower)?);
        strata[right] = Stratum::Prism(TrianglePrism::new(anchor, b, Orientation::Upper)?);
    }
    Partition::new(DomainBox::unit(d), strata)
}

/// The two ways of splitting the rectangle `[0, 2b] × [0, b]^{d−1}` into two
/// equal-volume strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSplit {
    /// Two cubes side by side.
    Squares,
    /// Two triangular prisms cut along the `(x1, x2)` diagonal.
    Triangles,
}

/// Two-stratum partition of `[0, 2b] × [0, b]^{d−1}`.
pub fn pair_rectangle(d: usize, b: f64, split: PairSplit) -> Result<Partition> {
    if d < 2 {
        return Err(Error::Unsupported("pair rectangles need d ≥ 2".into()));
    }
    let mut upper = vec![b; d];
    upper[0] = 2.0 * b;
    let domain = DomainBox::new(vec![0.0; d], upper)?;
    let strata = match split {
        PairSplit::Squares => {
            let mut right = vec![0.0; d];
            right[0] = b;
            vec![
                Stratum::Box(BoxStratum::new(vec![0.0; d], vec![b; d])?),
                Stratum::Box(BoxStratum::new(right, vec![b; d])?),
            ]
        }
        PairSplit::Triangles => vec![
            Stratum::Prism(TrianglePrism::new(vec![0.0; d], b, Orientation::Lower)?),
            Stratum::Prism(TrianglePrism::new(vec![0.0; d], b, Orientation::Upper)?),
        ],
    };
    Partition::new(domain, strata)
}

/// The named two-dimensional variants.
pub fn variant(m: usize, name: VariantName) -> Result<Partition> {
    if m < 2 && name != VariantName::Jittered {
        return Err(Error::InvalidParameter(format!(
            "variant {name} needs m ≥ 2, got {m}"
        )));
    }
    let positions = name.positions(m);
    debug_assert_eq!(
        positions.iter().collect::<HashSet<_>>().len(),
        positions.len()
    );
    if positions.is_empty() {
        jittered(m, 2)
    } else {
        modified_pair(m, 2, &positions)
    }
}
