//! Monte-Carlo estimation and reproduction of the reference tables.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::discrepancy::warnock_coords;
use crate::error::{Error, Result};
use crate::expectation::{expected_l2_sq, variant_closed_form};
use crate::geometry::Partition;
use crate::io::load_partition;
use crate::partitions::{jittered, variant, VariantName};
use crate::quadrature::CompensatedSum;
use crate::sampling::stratified_replication;

/// Relative tolerance between analytic values and the reference tables.
pub const TABLE_REL_TOL: f64 = 0.01;
/// Standard errors allowed between a Monte-Carlo mean and the analytic value.
pub const MC_SIGMAS: f64 = 4.0;
/// Combined standard errors a difference must exceed before its sign counts.
pub const SIGN_SIGMAS: f64 = 6.0;

/// Reference table 1: empirical means over 1000 samples, columns
/// jittered, P11, P01, P10, P00.
pub const TABLE1_COLUMNS: [VariantName; 5] = [
    VariantName::Jittered,
    VariantName::P11,
    VariantName::P01,
    VariantName::P10,
    VariantName::P00,
];
pub const TABLE1_REFERENCE: [(usize, [f64; 5]); 3] = [
    (7, [0.000476834, 0.00047629, 0.000473918, 0.000486402, 0.000481983]),
    (10, [0.00016377, 0.000163685, 0.000162913, 0.000165225, 0.000165369]),
    (14, [0.0000599499, 0.0000599455, 0.0000598861, 0.0000601582, 0.0000602246]),
];
pub const TABLE1_REPLICATIONS: usize = 1_000;

/// Reference table 2: empirical means over 10000 samples at `m = 10`.
pub const TABLE2_COLUMNS: [VariantName; 4] = [
    VariantName::Jittered,
    VariantName::P01,
    VariantName::TopRow,
    VariantName::All,
];
pub const TABLE2_REFERENCE: [(usize, [f64; 4]); 1] =
    [(10, [0.00016366, 0.000163152, 0.000162172, 0.00016101])];
pub const TABLE2_REPLICATIONS: usize = 10_000;

/// Which partition to build.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSelector {
    Named(VariantName),
    File(PathBuf),
}

impl PartitionSelector {
    pub fn build(&self, m: usize, d: usize) -> Result<Partition> {
        match self {
            PartitionSelector::Named(VariantName::Jittered) => jittered(m, d),
            PartitionSelector::Named(name) => {
                if d != 2 {
                    return Err(Error::Unsupported(format!(
                        "variant {name} is defined for d = 2 only"
                    )));
                }
                variant(m, *name)
            }
            PartitionSelector::File(path) => load_partition(path),
        }
    }
}

impl FromStr for PartitionSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("file:") {
            Some(path) => Ok(PartitionSelector::File(PathBuf::from(path))),
            None => Ok(PartitionSelector::Named(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub partition: PartitionSelector,
    pub m: usize,
    pub d: usize,
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<McEstimate> {
        self.validate()?;
        let partition = self.partition.build(self.m, self.d)?;
        mc_expected_with_workers(&partition, self.replications, self.seed, self.workers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `√R`.
    pub stderr: f64,
    /// Sample standard deviation of one replication.
    pub std_dev: f64,
    pub replications: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `(mean − target) / stderr`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

/// Mean squared L2-discrepancy over `replications` stratified samples.
pub fn mc_expected(partition: &Partition, replications: usize, seed: u64) -> Result<McEstimate> {
    mc_expected_with_workers(partition, replications, seed, 0)
}

/// As [`mc_expected`], on a dedicated pool of `workers` threads. The result
/// does not depend on `workers`.
pub fn mc_expected_with_workers(
    partition: &Partition,
    replications: usize,
    seed: u64,
    workers: usize,
) -> Result<McEstimate> {
    if replications < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replications, got {replications}"
        )));
    }
    partition.check_shapes()?;
    if let Some((index, relative)) = partition.equivolume_violation() {
        return Err(Error::NotEquivolume { index, relative });
    }

    let domain = partition.domain();
    let unit = domain.lower().iter().all(|&v| v == 0.0) && domain.upper().iter().all(|&v| v == 1.0);
    let one = |r: usize| -> Result<f64> {
        let sample = stratified_replication(partition, seed, r as u64);
        if unit {
            warnock_coords(sample.dim(), sample.coords())
        } else {
            let coords: Vec<f64> = sample.points().flat_map(|p| domain.to_unit(p)).collect();
            warnock_coords(sample.dim(), &coords)
        }
    };
    let values: Vec<f64> = if workers == 0 {
        (0..replications).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(|| (0..replications).into_par_iter().map(one).collect::<Result<_>>())?
    };

    let rf = replications as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / rf;
    let sq = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    let std_dev = (sq / (rf - 1.0)).sqrt();
    Ok(McEstimate {
        mean,
        stderr: std_dev / rf.sqrt(),
        std_dev,
        replications,
        seed,
    })
}

/// Outcome of comparing two Monte-Carlo means against an analytic gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignCheck {
    Agree,
    Disagree,
    Inconclusive,
}

/// Sign of `baseline.mean − modified.mean` against `analytic_gain`, counted
/// only when the gain exceeds [`SIGN_SIGMAS`] combined standard errors.
pub fn compare_sign(baseline: &McEstimate, modified: &McEstimate, analytic_gain: f64) -> SignCheck {
    let combined = baseline.stderr.hypot(modified.stderr);
    if analytic_gain.abs() <= SIGN_SIGMAS * combined {
        return SignCheck::Inconclusive;
    }
    let empirical = baseline.mean - modified.mean;
    if empirical.signum() == analytic_gain.signum() {
        SignCheck::Agree
    } else {
        SignCheck::Disagree
    }
}

/// Per-cell seed, so that cells are sampled independently.
fn cell_seed(seed: u64, m: usize, name: VariantName) -> u64 {
    let mut x = seed ^ ((m as u64) << 32) ^ (name as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub variant: VariantName,
    pub m: usize,
    pub n: usize,
    /// Engine value.
    pub analytic: f64,
    /// Jittered closed form minus per-position gains.
    pub closed_form: f64,
    pub reference: f64,
    /// `(analytic − reference) / reference`.
    pub rel_dev: f64,
    pub mc: Option<McEstimate>,
}

impl TableCell {
    pub fn analytic_within(&self, tol: f64) -> bool {
        self.rel_dev.abs() <= tol
    }

    pub fn mc_consistent(&self) -> bool {
        self.mc
            .is_none_or(|mc| mc.z_score(self.analytic).abs() < MC_SIGMAS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub table: u8,
    pub replications: usize,
    pub seed: u64,
    pub reference_replications: usize,
    pub cells: Vec<TableCell>,
}

/// Columns, rows of `(m, reference values)`, and the reference replication count.
type Layout = (Vec<VariantName>, Vec<(usize, Vec<f64>)>, usize);

fn reference_layout(which: u8) -> Result<Layout> {
    match which {
        1 => Ok((
            TABLE1_COLUMNS.to_vec(),
            TABLE1_REFERENCE.iter().map(|(m, r)| (*m, r.to_vec())).collect(),
            TABLE1_REPLICATIONS,
        )),
        2 => Ok((
            TABLE2_COLUMNS.to_vec(),
            TABLE2_REFERENCE.iter().map(|(m, r)| (*m, r.to_vec())).collect(),
            TABLE2_REPLICATIONS,
        )),
        other => Err(Error::InvalidParameter(format!("no table {other}; choose 1 or 2"))),
    }
}

/// Analytic values for every cell of a reference table, with Monte-Carlo
/// estimates when `replications > 0`.
pub fn run_table(which: u8, replications: usize, seed: u64, workers: usize) -> Result<TableReport> {
    let (columns, rows, reference_replications) = reference_layout(which)?;
    let mut cells = Vec::new();
    for (m, reference) in rows {
        for (name, reference) in columns.iter().zip(reference) {
            let partition = variant(m, *name)?;
            let analytic = expected_l2_sq(&partition)?.value;
            let closed_form = variant_closed_form(m, *name)?.value;
            let mc = if replications > 0 {
                Some(mc_expected_with_workers(
                    &partition,
                    replications,
                    cell_seed(seed, m, *name),
                    workers,
                )?)
            } else {
                None
            };
            cells.push(TableCell {
                variant: *name,
                m,
                n: m * m,
                analytic,
                closed_form,
                reference,
                rel_dev: (analytic - reference) / reference,
                mc,
            });
        }
    }
    Ok(TableReport {
        table: which,
        replications,
        seed,
        reference_replications,
        cells,
    })
}

impl TableReport {
    pub fn cell(&self, m: usize, name: VariantName) -> Option<&TableCell> {
        self.cells.iter().find(|c| c.m == m && c.variant == name)
    }

    /// Human-readable descriptions of every tolerance failure.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for cell in &self.cells {
            if !cell.analytic_within(TABLE_REL_TOL) {
                out.push(format!(
                    "N={} {}: analytic {:.6e} deviates {:+.3}% from reference {:.6e}",
                    cell.n,
                    cell.variant,
                    cell.analytic,
                    100.0 * cell.rel_dev,
                    cell.reference
                ));
            }
            if !cell.mc_consistent() {
                let mc = cell.mc.expect("checked above");
                out.push(format!(
                    "N={} {}: Monte-Carlo mean {:.6e} is {:.2} standard errors from analytic {:.6e}",
                    cell.n,
                    cell.variant,
                    mc.mean,
                    mc.z_score(cell.analytic),
                    cell.analytic
                ));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "table,N,partition,analytic,closed_form,reference,rel_dev,mc_mean,mc_stderr,mc_z\n",
        );
        for c in &self.cells {
            let (mean, stderr, z) = c.mc.map_or((String::new(), String::new(), String::new()), |mc| {
                (
                    format!("{:.10e}", mc.mean),
                    format!("{:.4e}", mc.stderr),
                    format!("{:.3}", mc.z_score(c.analytic)),
                )
            });
            let _ = writeln!(
                out,
                "{},{},{},{:.10e},{:.10e},{:e},{:.6},{},{},{}",
                self.table, c.n, c.variant, c.analytic, c.closed_form, c.reference, c.rel_dev, mean, stderr, z
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "table {} ({} replications per cell, seed {}; reference used {})\n",
            self.table, self.replications, self.seed, self.reference_replications
        );
        let _ = writeln!(
            out,
            "{:>5} {:>9} {:>16} {:>16} {:>9} {:>16} {:>11} {:>7}",
            "N", "partition", "analytic", "reference", "rel_dev", "mc_mean", "mc_stderr", "z"
        );
        for c in &self.cells {
            let (mean, stderr, z) = c.mc.map_or(("-".into(), "-".into(), "-".into()), |mc| {
                (
                    format!("{:.9e}", mc.mean),
                    format!("{:.3e}", mc.stderr),
                    format!("{:+.2}", mc.z_score(c.analytic)),
                )
            });
            let _ = writeln!(
                out,
                "{:>5} {:>9} {:>16.9e} {:>16.9e} {:>8.3}% {:>16} {:>11} {:>7}",
                c.n,
                c.variant.label(),
                c.analytic,
                c.reference,
                100.0 * c.rel_dev,
                mean,
                stderr,
                z
            );
        }
        out
    }
}

/// One analytic-versus-reference comparison with its noise budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: String,
    pub analytic: f64,
    pub reference: f64,
    pub rel_dev: f64,
    /// [`MC_SIGMAS`] standard errors of a mean over the reference's
    /// replication count, using the measured per-sample spread.
    pub noise_budget: f64,
    pub within_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub table: u8,
    pub replications: usize,
    pub seed: u64,
    pub reference_replications: usize,
    pub values: Vec<Prediction>,
    pub gains: Vec<Prediction>,
    pub notes: Vec<String>,
}

impl PredictionReport {
    pub fn gain(&self, label: &str) -> Option<&Prediction> {
        self.gains.iter().find(|p| p.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,label,analytic,reference,rel_dev,noise_budget,within_noise\n");
        for (kind, list) in [("value", &self.values), ("gain", &self.gains)] {
            for p in list {
                let _ = writeln!(
                    out,
                    "{kind},{},{:.10e},{:e},{:.6},{:.4e},{}",
                    p.label, p.analytic, p.reference, p.rel_dev, p.noise_budget, p.within_noise
                );
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "predictions for table {} (spread measured from {} replications, seed {}; reference used {})\n",
            self.table, self.replications, self.seed, self.reference_replications
        );
        for (title, list) in [("values", &self.values), ("gains", &self.gains)] {
            let _ = writeln!(out, "{title}:");
            for p in list {
                let _ = writeln!(
                    out,
                    "  {:<22} analytic {:>13.6e}  reference {:>13.6e}  dev {:>+9.3}%  budget {:.3e}  {}",
                    p.label,
                    p.analytic,
                    p.reference,
                    100.0 * p.rel_dev,
                    p.noise_budget,
                    if p.within_noise { "within noise budget" } else { "OUTSIDE noise budget" }
                );
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

/// Compares analytic values and gains with a reference table, judging each
/// deviation against the Monte-Carlo noise the reference's replication count
/// implies. The per-sample spread is measured with `replications` samples.
pub fn predict_vs_table(which: u8, replications: usize, seed: u64, workers: usize) -> Result<PredictionReport> {
    if replications < 2 {
        return Err(Error::InvalidParameter(
            "measuring the per-sample spread needs at least 2 replications".into(),
        ));
    }
    let table = run_table(which, replications, seed, workers)?;
    let r_ref = table.reference_replications as f64;
    let spread = |c: &TableCell| c.mc.map_or(0.0, |mc| mc.std_dev);

    let values = table
        .cells
        .iter()
        .map(|c| {
            let budget = MC_SIGMAS * spread(c) / r_ref.sqrt();
            Prediction {
                label: format!("N={} {}", c.n, c.variant),
                analytic: c.analytic,
                reference: c.reference,
                rel_dev: c.rel_dev,
                noise_budget: budget,
                within_noise: (c.analytic - c.reference).abs() <= budget,
            }
        })
        .collect();

    let mut gains = Vec::new();
    let mut notes = Vec::new();
    let mut ms: Vec<usize> = table.cells.iter().map(|c| c.m).collect();
    ms.dedup();
    for m in ms {
        let base = table.cell(m, VariantName::Jittered).expect("jittered column");
        for c in table.cells.iter().filter(|c| c.m == m && c.variant != VariantName::Jittered) {
            let analytic = base.analytic - c.analytic;
            let reference = base.reference - c.reference;
            // Independent samples; coupled samples would only shrink this.
            let budget = MC_SIGMAS * spread(base).hypot(spread(c)) / r_ref.sqrt();
            gains.push(Prediction {
                label: format!("N={} gain {}", c.n, c.variant),
                analytic,
                reference,
                rel_dev: (analytic - reference) / reference,
                noise_budget: budget,
                within_noise: (analytic - reference).abs() <= budget,
            });
        }
        if which == 1 {
            let p10 = table.cell(m, VariantName::P10).expect("p10 column");
            let p00 = table.cell(m, VariantName::P00).expect("p00 column");
            if (p10.analytic - p00.analytic).signum() != (p10.reference - p00.reference).signum() {
                notes.push(format!(
                    "N={}: reference orders p10/p00 opposite to the analytic values ({:.6e} vs {:.6e}); \
                     the difference {:.2e} is below the noise budget {:.2e}",
                    m * m,
                    p10.analytic,
                    p00.analytic,
                    (p10.analytic - p00.analytic).abs(),
                    MC_SIGMAS * spread(p10).hypot(spread(p00)) / r_ref.sqrt()
                ));
            }
        }
    }

    let t1 = TABLE1_REFERENCE[1].1[0];
    let t2 = TABLE2_REFERENCE[0].1[0];
    notes.push(format!(
        "jittered N=100 appears as {t1:e} (1000 samples) and {t2:e} (10000 samples), {:.2}% apart; \
         both are within 1% of the analytic {:.6e}",
        100.0 * (t1 - t2).abs() / t2,
        crate::expectation::jittered_closed_form(10, 2)
    ));

    Ok(PredictionReport {
        table: which,
        replications,
        seed,
        reference_replications: table.reference_replications,
        values,
        gains,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!(
            "p01".parse::<PartitionSelector>().unwrap(),
            PartitionSelector::Named(VariantName::P01)
        );
        assert_eq!(
            "file:/tmp/x.json".parse::<PartitionSelector>().unwrap(),
            PartitionSelector::File("/tmp/x.json".into())
        );
        assert!("nope".parse::<PartitionSelector>().is_err());
        assert!(PartitionSelector::Named(VariantName::P11).build(4, 3).is_err());
        assert_eq!(PartitionSelector::Named(VariantName::Jittered).build(2, 3).unwrap().len(), 8);
    }

    #[test]
    fn mc_needs_two_replications() {
        let p = jittered(3, 2).unwrap();
        assert!(mc_expected(&p, 1, 0).is_err());
        let config = ExperimentConfig {
            partition: PartitionSelector::Named(VariantName::Jittered),
            m: 3,
            d: 2,
            replications: 1,
            seed: 0,
            workers: 1,
        };
        assert!(config.run().is_err());
    }

    #[test]
    fn mc_on_non_unit_domain_uses_normalized_points() {
        let rect = crate::partitions::pair_rectangle(2, 1.0, crate::partitions::PairSplit::Triangles).unwrap();
        let est = mc_expected(&rect, 4000, 3).unwrap();
        assert!(est.z_score(1.0 / 20.0).abs() < MC_SIGMAS);
    }

    #[test]
    fn sign_check_thresholds() {
        let a = McEstimate { mean: 1.0, stderr: 0.1, std_dev: 1.0, replications: 100, seed: 0 };
        let b = McEstimate { mean: 0.0, ..a };
        assert_eq!(compare_sign(&a, &b, 0.05), SignCheck::Inconclusive);
        assert_eq!(compare_sign(&a, &b, 1.0), SignCheck::Agree);
        assert_eq!(compare_sign(&a, &b, -1.0), SignCheck::Disagree);
    }

    #[test]
    fn table_without_mc_has_analytic_columns() {
        let report = run_table(2, 0, 1, 1).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert!(report.failures().is_empty());
        assert!(report.to_csv().lines().count() == 5);
        assert!(run_table(3, 0, 1, 1).is_err());
    }
}
