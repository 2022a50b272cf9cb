//! Comparison tables over pipeline outputs.
//!
//! Three reports — distribution alignment across datasets, the effect of
//! share smoothing at several alphas, and label coverage — each built
//! purely from `distmatch` operations and rendered to tab-separated
//! values (canonical, byte-stable) or Markdown (for reading). The only
//! arithmetic performed here is the "Other" aggregate: categories ranked
//! 10 through 21 summed into one display row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distmatch::{
    coverage_stats, counts_from_labelsets, max_min_ratio, rare_category_mean_upsample,
    shares_from_counts, smooth, tvd, upsample_factors, CategoricalShares, CountVector,
    CoverageStats, DistError, SmoothingAlpha,
};
use crate::taxonomy::{canonical_categories, LabelSet, CATEGORY_COUNT};

/// Categories ranked 10–21 collapse into "Other" for display.
const OTHER_FIRST_INDEX: usize = 9;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("dataset {name:?} is empty")]
    EmptyDataset { name: String },
    #[error(transparent)]
    Dist(#[from] DistError),
}

fn other_aggregate(shares: &CategoricalShares) -> f64 {
    shares.iter().skip(OTHER_FIRST_INDEX).sum()
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

/// One dataset's column in the alignment comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentColumn {
    pub name: String,
    pub items: usize,
    pub shares: CategoricalShares,
    pub other_share: f64,
    pub tvd_vs_target: f64,
}

/// Per-category share comparison of several datasets against a target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub target_name: String,
    pub target_shares: CategoricalShares,
    pub target_other: f64,
    pub datasets: Vec<AlignmentColumn>,
}

/// Build the alignment comparison. Dataset order is preserved; every
/// column needs at least one labeled item to have shares at all.
pub fn alignment_report(
    datasets: &[(String, Vec<LabelSet>)],
    target_name: &str,
    target: &CategoricalShares,
) -> Result<AlignmentReport, ReportError> {
    let mut columns = Vec::with_capacity(datasets.len());
    for (name, labelsets) in datasets {
        if labelsets.is_empty() {
            return Err(ReportError::EmptyDataset { name: name.clone() });
        }
        let shares = shares_from_counts(&counts_from_labelsets(labelsets))?;
        columns.push(AlignmentColumn {
            name: name.clone(),
            items: labelsets.len(),
            other_share: other_aggregate(&shares),
            tvd_vs_target: tvd(&shares, target),
            shares,
        });
    }
    Ok(AlignmentReport {
        target_name: target_name.to_string(),
        target_shares: *target,
        target_other: other_aggregate(target),
        datasets: columns,
    })
}

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------

/// Calibration results attached to a smoothing row once a matching run
/// exists; the smoothing table itself never invents them.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub dataset_size: usize,
    pub yield_fraction: f64,
    pub final_tvd: f64,
}

/// Everything smoothing does to the target at one alpha.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingRow {
    pub alpha: f64,
    pub shares: CategoricalShares,
    pub upsample_factors: [f64; CATEGORY_COUNT],
    pub max_min_ratio: f64,
    pub rare5_mean_upsample: f64,
    pub calibration: Option<CalibrationSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub counts: CountVector,
    pub raw_shares: CategoricalShares,
    pub rows: Vec<SmoothingRow>,
}

/// One row per alpha, in the order given.
pub fn smoothing_report(
    counts: &CountVector,
    alphas: &[f64],
) -> Result<SmoothingReport, ReportError> {
    let raw_shares = shares_from_counts(counts)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let alpha = SmoothingAlpha::new(alpha)?;
        let shares = smooth(counts, alpha)?;
        rows.push(SmoothingRow {
            alpha: alpha.get(),
            upsample_factors: upsample_factors(counts, alpha)?,
            max_min_ratio: max_min_ratio(&shares)?,
            rare5_mean_upsample: rare_category_mean_upsample(counts, alpha, 5)?,
            shares,
            calibration: None,
        });
    }
    Ok(SmoothingReport {
        counts: counts.clone(),
        raw_shares,
        rows,
    })
}

impl SmoothingReport {
    /// Attach a calibration run's outcome to the row for `alpha`.
    /// Returns false when no row matches.
    pub fn attach_calibration(&mut self, alpha: f64, summary: CalibrationSummary) -> bool {
        for row in &mut self.rows {
            if row.alpha == alpha {
                row.calibration = Some(summary);
                return true;
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

/// Per-dataset label-coverage rows, dataset order preserved.
pub fn coverage_report(
    datasets: &[(String, Vec<LabelSet>)],
) -> Result<Vec<(String, CoverageStats)>, ReportError> {
    let mut rows = Vec::with_capacity(datasets.len());
    for (name, labelsets) in datasets {
        if labelsets.is_empty() {
            return Err(ReportError::EmptyDataset { name: name.clone() });
        }
        rows.push((name.clone(), coverage_stats(labelsets)?));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn pct(share: f64) -> String {
    format!("{:.2}", share * 100.0)
}

/// Canonical alignment table: 21 category rows, then Other, TVD, Items.
pub fn alignment_tsv(report: &AlignmentReport) -> String {
    let mut out = String::from("category");
    out.push('\t');
    out.push_str(&report.target_name);
    for column in &report.datasets {
        out.push('\t');
        out.push_str(&column.name);
    }
    out.push('\n');
    for (index, category) in canonical_categories().iter().enumerate() {
        out.push_str(category.name);
        out.push('\t');
        out.push_str(&pct(report.target_shares.get(index)));
        for column in &report.datasets {
            out.push('\t');
            out.push_str(&pct(column.shares.get(index)));
        }
        out.push('\n');
    }
    out.push_str("Other\t");
    out.push_str(&pct(report.target_other));
    for column in &report.datasets {
        out.push('\t');
        out.push_str(&pct(column.other_share));
    }
    out.push_str("\nTVD\t0.0000");
    for column in &report.datasets {
        out.push_str(&format!("\t{:.4}", column.tvd_vs_target));
    }
    out.push_str("\nItems\t-");
    for column in &report.datasets {
        out.push_str(&format!("\t{}", column.items));
    }
    out.push('\n');
    out
}

/// Readable alignment table: top-9 categories, Other, TVD, Items.
pub fn alignment_markdown(report: &AlignmentReport) -> String {
    let mut out = String::from("| Category | ");
    out.push_str(&report.target_name);
    for column in &report.datasets {
        out.push_str(" | ");
        out.push_str(&column.name);
    }
    out.push_str(" |\n|---|");
    for _ in 0..=report.datasets.len() {
        out.push_str("---|");
    }
    out.push('\n');
    for (index, category) in canonical_categories()
        .iter()
        .enumerate()
        .take(OTHER_FIRST_INDEX)
    {
        out.push_str(&format!("| {} | {}", category.name, pct(report.target_shares.get(index))));
        for column in &report.datasets {
            out.push_str(&format!(" | {}", pct(column.shares.get(index))));
        }
        out.push_str(" |\n");
    }
    out.push_str(&format!("| Other | {}", pct(report.target_other)));
    for column in &report.datasets {
        out.push_str(&format!(" | {}", pct(column.other_share)));
    }
    out.push_str(" |\n| TVD | 0.00");
    for column in &report.datasets {
        out.push_str(&format!(" | {:.2}", column.tvd_vs_target));
    }
    out.push_str(" |\n| Items | -");
    for column in &report.datasets {
        out.push_str(&format!(" | {}", column.items));
    }
    out.push_str(" |\n");
    out
}

fn alpha_label(alpha: f64) -> String {
    format!("{alpha:.2}")
}

/// Canonical smoothing table: per-category shares and upsample factors
/// for each alpha, then one summary row block.
pub fn smoothing_tsv(report: &SmoothingReport) -> String {
    let mut out = String::from("category\tcount");
    for row in &report.rows {
        let label = alpha_label(row.alpha);
        out.push_str(&format!("\tshare_{label}\tfactor_{label}"));
    }
    out.push('\n');
    for (index, category) in canonical_categories().iter().enumerate() {
        out.push_str(&format!("{}\t{}", category.name, report.counts.get(index)));
        for row in &report.rows {
            out.push_str(&format!(
                "\t{}\t{:.2}",
                pct(row.shares.get(index)),
                row.upsample_factors[index]
            ));
        }
        out.push('\n');
    }
    out.push('\n');
    out.push_str("metric");
    for row in &report.rows {
        out.push('\t');
        out.push_str(&alpha_label(row.alpha));
    }
    out.push_str("\nmax_min_ratio");
    for row in &report.rows {
        out.push_str(&format!("\t{:.0}", row.max_min_ratio));
    }
    out.push_str("\nrare5_mean_upsample");
    for row in &report.rows {
        out.push_str(&format!("\t{:.1}", row.rare5_mean_upsample));
    }
    if report.rows.iter().any(|r| r.calibration.is_some()) {
        out.push_str("\ndataset_size");
        for row in &report.rows {
            match row.calibration {
                Some(c) => out.push_str(&format!("\t{}", c.dataset_size)),
                None => out.push_str("\t-"),
            }
        }
        out.push_str("\nyield_pct");
        for row in &report.rows {
            match row.calibration {
                Some(c) => out.push_str(&format!("\t{}", pct(c.yield_fraction))),
                None => out.push_str("\t-"),
            }
        }
        out.push_str("\nfinal_tvd");
        for row in &report.rows {
            match row.calibration {
                Some(c) => out.push_str(&format!("\t{:.4}", c.final_tvd)),
                None => out.push_str("\t-"),
            }
        }
    }
    out.push('\n');
    out
}

/// Readable smoothing table: share (factor×) per alpha.
pub fn smoothing_markdown(report: &SmoothingReport) -> String {
    let mut out = String::from("| Category | Count |");
    for row in &report.rows {
        out.push_str(&format!(" α={} |", alpha_label(row.alpha)));
    }
    out.push_str("\n|---|---|");
    for _ in &report.rows {
        out.push_str("---|");
    }
    out.push('\n');
    for (index, category) in canonical_categories().iter().enumerate() {
        out.push_str(&format!("| {} | {} |", category.name, report.counts.get(index)));
        for row in &report.rows {
            out.push_str(&format!(
                " {} ({:.1}×) |",
                pct(row.shares.get(index)),
                row.upsample_factors[index]
            ));
        }
        out.push('\n');
    }
    out.push_str("| Max/min ratio | |");
    for row in &report.rows {
        out.push_str(&format!(" {:.0} |", row.max_min_ratio));
    }
    out.push_str("\n| Rare-5 mean upsample | |");
    for row in &report.rows {
        out.push_str(&format!(" {:.1} |", row.rare5_mean_upsample));
    }
    out.push('\n');
    out
}

/// Canonical coverage table.
pub fn coverage_tsv(rows: &[(String, CoverageStats)]) -> String {
    let mut out = String::from("dataset\tmean_labels\tpct_nonzero\tpct_ge2\n");
    for (name, stats) in rows {
        out.push_str(&format!(
            "{name}\t{:.2}\t{:.1}\t{:.1}\n",
            stats.mean_labels,
            stats.pct_nonzero * 100.0,
            stats.pct_ge2 * 100.0
        ));
    }
    out
}

/// Readable coverage table.
pub fn coverage_markdown(rows: &[(String, CoverageStats)]) -> String {
    let mut out =
        String::from("| Dataset | Mean labels | Non-zero | ≥ 2 labels |\n|---|---|---|---|\n");
    for (name, stats) in rows {
        out.push_str(&format!(
            "| {name} | {:.2} | {:.1}% | {:.1}% |\n",
            stats.mean_labels,
            stats.pct_nonzero * 100.0,
            stats.pct_ge2 * 100.0
        ));
    }
    out
}
