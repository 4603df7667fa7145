//! CSV formats.
//!
//! Datasets: UTF-8, comma-separated, `.` decimal, no thousands
//! separators. Three header shapes:
//!
//! - `f0,...,f{d-1},label` — hard labels as class indices;
//! - `f0,...,f{d-1},p0,...,p{L-1}` — soft label rows summing to 1
//!   (within 1e-6 on load; rows off by more than the label tolerance
//!   are renormalized);
//! - `f0,...,f{d-1}` — an unlabeled pool (placeholder labels).
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! save/load is exact and repeated runs produce byte-identical files.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::Path;
use wdistill_core::data::{Dataset, Example, LabelVec, Split, LABEL_SUM_TOL};
use wdistill_core::debias::WeightRecord;
use wdistill_core::estimator::{ConfidenceMetric, ValidationIndex};
use wdistill_core::optimize::TrajectoryPoint;
use wdistill_core::pipeline::AccuracyPoint;

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = raw
        .trim()
        .parse()
        .with_context(|| format!("row {row}: column {column}: `{raw}` is not a number"))?;
    Ok(value)
}

fn parse_finite(raw: &str, row: usize, column: &str) -> Result<f64> {
    let value = parse_f64(raw, row, column)?;
    if !value.is_finite() {
        bail!("row {row}: column {column}: non-finite value `{raw}`");
    }
    Ok(value)
}

/// Write a dataset. Valid one-hot labels use the hard schema, other
/// valid labels the soft schema, placeholder labels the features-only
/// schema.
pub fn save_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let d = data.dim();
    let mut out = String::new();
    let all_hard =
        data.labels_valid() && data.examples().iter().all(|ex| ex.label.is_one_hot());
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "f{j}");
    }
    if data.labels_valid() {
        if all_hard {
            out.push_str(",label");
        } else {
            for c in 0..data.num_classes() {
                let _ = write!(out, ",p{c}");
            }
        }
    }
    out.push('\n');
    for ex in data.examples() {
        for (j, v) in ex.features.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        if data.labels_valid() {
            if all_hard {
                let _ = write!(out, ",{}", ex.label.top_class());
            } else {
                for p in ex.label.probs() {
                    out.push(',');
                    out.push_str(&fmt_f64(*p));
                }
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

enum Schema {
    Hard { dim: usize },
    Soft { dim: usize, classes: usize },
    Unlabeled { dim: usize },
}

fn parse_header(header: &str) -> Result<Schema> {
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut dim = 0;
    while dim < columns.len() && columns[dim] == format!("f{dim}") {
        dim += 1;
    }
    if dim == 0 {
        bail!("header must start with feature columns f0,f1,...; got `{header}`");
    }
    let rest = &columns[dim..];
    if rest.is_empty() {
        return Ok(Schema::Unlabeled { dim });
    }
    if rest == ["label"] {
        return Ok(Schema::Hard { dim });
    }
    for (c, col) in rest.iter().enumerate() {
        if *col != format!("p{c}") {
            bail!("header column `{col}` not recognized (expected p{c})");
        }
    }
    Ok(Schema::Soft {
        dim,
        classes: rest.len(),
    })
}

/// Load a dataset saved by [`save_dataset_csv`] (or hand-written in the
/// same shape). Hard labels infer the class count from the largest
/// index seen, with a floor of 2; pass `num_classes` to pin it.
pub fn load_dataset_csv(path: &Path, split: Split, num_classes: Option<usize>) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        bail!("{}: no rows", path.display());
    };
    let schema = parse_header(header)?;
    let rows: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        bail!("{}: no rows", path.display());
    }

    match schema {
        Schema::Hard { dim } => {
            let mut parsed: Vec<(Vec<f64>, usize)> = Vec::with_capacity(rows.len());
            let mut max_label = 0usize;
            for (lineno, line) in rows {
                let row = lineno + 1;
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != dim + 1 {
                    bail!(
                        "row {row}: expected {} fields, got {}",
                        dim + 1,
                        fields.len()
                    );
                }
                let features = fields[..dim]
                    .iter()
                    .enumerate()
                    .map(|(j, f)| parse_finite(f, row, &format!("f{j}")))
                    .collect::<Result<Vec<f64>>>()?;
                let label: usize = fields[dim].trim().parse().with_context(|| {
                    format!("row {row}: label `{}` is not a class index", fields[dim])
                })?;
                max_label = max_label.max(label);
                parsed.push((features, label));
            }
            let classes = num_classes.unwrap_or((max_label + 1).max(2));
            let examples = parsed
                .into_iter()
                .map(|(features, label)| {
                    Ok(Example::new(features, LabelVec::one_hot(label, classes)?)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset::new(examples, split, 0)?)
        }
        Schema::Soft { dim, classes } => {
            let mut examples = Vec::with_capacity(rows.len());
            for (lineno, line) in rows {
                let row = lineno + 1;
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != dim + classes {
                    bail!(
                        "row {row}: expected {} fields, got {}",
                        dim + classes,
                        fields.len()
                    );
                }
                let features = fields[..dim]
                    .iter()
                    .enumerate()
                    .map(|(j, f)| parse_finite(f, row, &format!("f{j}")))
                    .collect::<Result<Vec<f64>>>()?;
                let mut probs = fields[dim..]
                    .iter()
                    .enumerate()
                    .map(|(c, f)| parse_finite(f, row, &format!("p{c}")))
                    .collect::<Result<Vec<f64>>>()?;
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    bail!("row {row}: soft label sums to {sum}, not 1");
                }
                // Renormalize only rows outside the strict tolerance so
                // exact round-trips stay bit-identical.
                if (sum - 1.0).abs() > LABEL_SUM_TOL {
                    probs.iter_mut().for_each(|p| *p /= sum);
                }
                examples.push(Example::new(features, LabelVec::soft(probs)?)?);
            }
            Ok(Dataset::new(examples, split, 0)?)
        }
        Schema::Unlabeled { dim } => {
            let mut features_rows = Vec::with_capacity(rows.len());
            for (lineno, line) in rows {
                let row = lineno + 1;
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != dim {
                    bail!("row {row}: expected {dim} fields, got {}", fields.len());
                }
                features_rows.push(
                    fields
                        .iter()
                        .enumerate()
                        .map(|(j, f)| parse_finite(f, row, &format!("f{j}")))
                        .collect::<Result<Vec<f64>>>()?,
                );
            }
            Ok(Dataset::unlabeled(
                features_rows,
                num_classes.unwrap_or(2),
                0,
            )?)
        }
    }
}

/// `index,p_hat,distortion_hat,raw_weight,weight`
pub fn save_weight_records_csv(records: &[WeightRecord], path: &Path) -> Result<()> {
    let mut out = String::from("index,p_hat,distortion_hat,raw_weight,weight\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            fmt_f64(r.p_hat),
            fmt_f64(r.distortion_hat),
            fmt_f64(r.raw_weight),
            fmt_f64(r.weight)
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Plain weights serialized in the record schema (p 0, distortion 1).
pub fn save_plain_weights_csv(weights: &[f64], path: &Path) -> Result<()> {
    let records: Vec<WeightRecord> = weights
        .iter()
        .map(|w| WeightRecord {
            p_hat: 0.0,
            distortion_hat: 1.0,
            raw_weight: *w,
            weight: *w,
            degenerate: false,
        })
        .collect();
    save_weight_records_csv(&records, path)
}

/// Parse the weight column of a weight-record CSV.
pub fn load_weight_column(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        bail!("{}: no rows", path.display());
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let Some(weight_col) = columns.iter().position(|c| *c == "weight") else {
        bail!("{}: no `weight` column", path.display());
    };
    let mut weights = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            bail!("{}: row {}: ragged row", path.display(), lineno + 1);
        }
        weights.push(parse_finite(fields[weight_col], lineno + 1, "weight")?);
    }
    Ok(weights)
}

/// `tconf,sconf,p,distortion`
pub fn save_index_csv(index: &ValidationIndex, path: &Path) -> Result<()> {
    let mut out = String::from("tconf,sconf,p,distortion\n");
    for (point, response) in index.points().iter().zip(index.responses()) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(point[0]),
            fmt_f64(point[1]),
            fmt_f64(response[0]),
            fmt_f64(response[1])
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_index_csv(path: &Path, metric: ConfidenceMetric) -> Result<ValidationIndex> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "tconf,sconf,p,distortion" => {}
        Some((_, header)) => bail!("unexpected index header `{header}`"),
        None => bail!("{}: no rows", path.display()),
    }
    let mut points = Vec::new();
    let mut responses = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("row {row}: expected 4 fields, got {}", fields.len());
        }
        points.push([
            parse_finite(fields[0], row, "tconf")?,
            parse_finite(fields[1], row, "sconf")?,
        ]);
        responses.push([
            parse_finite(fields[2], row, "p")?,
            parse_finite(fields[3], row, "distortion")?,
        ]);
    }
    Ok(ValidationIndex::from_parts(points, responses, metric)?)
}

/// `step,frobenius_norm,train_loss,heldout_loss` (NaN when no held-out
/// set was supplied).
pub fn save_trajectory_csv(points: &[TrajectoryPoint], path: &Path) -> Result<()> {
    let mut out = String::from("step,frobenius_norm,train_loss,heldout_loss\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.step,
            fmt_f64(p.frobenius_norm),
            fmt_f64(p.train_loss),
            fmt_f64(p.heldout_loss.unwrap_or(f64::NAN))
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `step,test_accuracy`
pub fn save_accuracy_trajectory_csv(points: &[AccuracyPoint], path: &Path) -> Result<()> {
    let mut out = String::from("step,test_accuracy\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.step, fmt_f64(p.test_accuracy));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `bin_lo,bin_hi,count` over ten equal bins of `[0, 1]`; the last bin
/// is closed so the counts always sum to the number of weights.
pub fn save_weight_histogram_csv(weights: &[f64], path: &Path) -> Result<()> {
    const BINS: usize = 10;
    let mut counts = [0usize; BINS];
    for w in weights {
        let bin = ((w * BINS as f64) as usize).min(BINS - 1);
        counts[bin] += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (b, count) in counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{count}",
            fmt_f64(b as f64 / BINS as f64),
            fmt_f64((b + 1) as f64 / BINS as f64)
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
