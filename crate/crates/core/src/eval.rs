//! RMSE / MAE over the held-out set and model-comparison reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{EntrySplit, HdiTensor, Position};
use crate::error::{Error, Result};

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("metric over an empty set".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth values vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sq: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / truth.len() as f64).sqrt())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let abs: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / truth.len() as f64)
}

/// Relative reduction of `ours` against `baseline`, in percent.
pub fn improvement_pct(ours: f64, baseline: f64) -> f64 {
    (baseline - ours) / baseline * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Normalized,
    Raw,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Normalized => "normalized",
            Scale::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_name: String,
    pub dataset_label: String,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
    pub scale: Scale,
    /// SHA-256 of the sorted Ω position list.
    pub omega_hash: String,
}

/// Order-independent fingerprint of a position list.
pub fn positions_hash(positions: &[Position]) -> String {
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for p in &sorted {
        for v in [p.channel, p.day, p.slot] {
            h.update((v as u64).to_le_bytes());
        }
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Scores `predict` on Ω = `split.test` of a normalized tensor.
///
/// `predict` receives Ω in sorted order and must return one normalized
/// prediction per position. With [`Scale::Raw`] both truth and predictions
/// are mapped back to physical units first.
pub fn evaluate_model<F>(
    model_name: &str,
    dataset_label: &str,
    t: &HdiTensor,
    split: &EntrySplit,
    scale: Scale,
    predict: F,
) -> Result<MetricReport>
where
    F: FnOnce(&[Position]) -> Result<Vec<f64>>,
{
    if split.test.is_empty() {
        return Err(Error::InvalidArgument("test split is empty".into()));
    }
    let mut omega = split.test.clone();
    omega.sort_unstable();
    let mut truth = omega
        .iter()
        .map(|&p| {
            t.check_position(p)?;
            t.get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("test entry {p:?} is unobserved")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut pred = predict(&omega)?;
    if pred.len() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "{model_name} returned {} predictions for {} positions",
            pred.len(),
            omega.len()
        )));
    }
    if let Some(i) = pred.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{model_name} predicted {} at {:?}",
            pred[i], omega[i]
        )));
    }
    if scale == Scale::Raw {
        for (i, p) in omega.iter().enumerate() {
            truth[i] = t.denormalize_value(p.channel, truth[i])?;
            pred[i] = t.denormalize_value(p.channel, pred[i])?;
        }
    }
    let rmse = rmse(&truth, &pred)?;
    let mae = mae(&truth, &pred)?;
    // Power-mean inequality; allow rounding in the last bits.
    assert!(rmse >= mae * (1.0 - 1e-12), "rmse {rmse} < mae {mae}");
    Ok(MetricReport {
        model_name: model_name.to_string(),
        dataset_label: dataset_label.to_string(),
        rmse,
        mae,
        n: omega.len(),
        scale,
        omega_hash: positions_hash(&omega),
    })
}

pub const REPORT_CSV_HEADER: &str = "model,dataset,rmse,mae,n,scale";

/// Combined CSV, one row per model sorted by name.
pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut sorted: Vec<&MetricReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model_name,
            r.dataset_label,
            r.rmse,
            r.mae,
            r.n,
            r.scale.as_str()
        );
    }
    out
}

/// Improvement of one model over another on both metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub model: String,
    pub baseline: String,
    pub rmse_pct: f64,
    pub mae_pct: f64,
}

/// Improvements of `reference` over every other report, sorted by baseline name.
pub fn improvements(reference: &MetricReport, reports: &[MetricReport]) -> Vec<Improvement> {
    let mut out: Vec<Improvement> = reports
        .iter()
        .map(|r| Improvement {
            model: reference.model_name.clone(),
            baseline: r.model_name.clone(),
            rmse_pct: improvement_pct(reference.rmse, r.rmse),
            mae_pct: improvement_pct(reference.mae, r.mae),
        })
        .collect();
    out.sort_by(|a, b| a.baseline.cmp(&b.baseline));
    out
}

pub const IMPROVEMENT_CSV_HEADER: &str = "model,baseline,rmse_improvement_pct,mae_improvement_pct";

pub fn improvements_csv(rows: &[Improvement]) -> String {
    let mut out = String::from(IMPROVEMENT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:.2},{:.2}", r.model, r.baseline, r.rmse_pct, r.mae_pct);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_tensor;

    #[test]
    fn metric_fixtures() {
        assert_eq!(rmse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.5], &[0.25]).unwrap(), 0.25);
        assert_eq!(rmse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mae(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!(rmse(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn improvement_formula() {
        assert_eq!(improvement_pct(0.2, 0.2), 0.0);
        assert!((improvement_pct(0.1384, 0.1507) - 8.16).abs() < 0.01);
    }

    #[test]
    fn hash_ignores_order() {
        let a = [Position::new(0, 1, 2), Position::new(1, 0, 0)];
        let b = [a[1], a[0]];
        assert_eq!(positions_hash(&a), positions_hash(&b));
        assert_ne!(positions_hash(&a), positions_hash(&a[..1]));
    }

    fn fixture() -> (HdiTensor, EntrySplit) {
        // Ten observed entries; the normalized values are hand-checkable.
        let raw = build_tensor(&[vec![
            vec![Some(0.0), Some(2.0), Some(4.0), Some(6.0), Some(8.0)],
            vec![Some(10.0), Some(1.0), Some(3.0), Some(5.0), Some(7.0)],
        ]])
        .unwrap();
        let t = raw.normalize().unwrap();
        let p = |n, m| Position::new(0, n, m);
        let split = EntrySplit {
            train: vec![p(0, 0), p(0, 1), p(0, 2), p(0, 3), p(0, 4), p(1, 0)],
            valid: vec![p(1, 1), p(1, 2)],
            test: vec![p(1, 4), p(1, 3)],
        };
        (t, split)
    }

    #[test]
    fn oracle_and_mean_imputer_reports() {
        let (t, split) = fixture();
        let oracle = evaluate_model("oracle", "fixture", &t, &split, Scale::Normalized, |ps| {
            Ok(ps.iter().map(|&p| t.get(p).unwrap()).collect())
        })
        .unwrap();
        assert_eq!((oracle.rmse, oracle.mae, oracle.n), (0.0, 0.0, 2));

        // Training mean: (0 + 2 + 4 + 6 + 8 + 10) / 6 / 10 = 0.5; Ω holds 0.5 and 0.7.
        let mean = evaluate_model("mean", "fixture", &t, &split, Scale::Normalized, |ps| {
            crate::lfa::mean_impute(&t, &split, ps)
        })
        .unwrap();
        assert!((mean.mae - 0.1).abs() < 1e-12);
        assert!((mean.rmse - (0.04f64 / 2.0).sqrt()).abs() < 1e-12);

        let raw = evaluate_model("mean", "fixture", &t, &split, Scale::Raw, |ps| {
            crate::lfa::mean_impute(&t, &split, ps)
        })
        .unwrap();
        assert!((raw.mae - 1.0).abs() < 1e-12);
        assert_eq!(raw.omega_hash, mean.omega_hash);
    }

    #[test]
    fn evaluate_rejects_bad_predictions() {
        let (t, split) = fixture();
        let short = evaluate_model("m", "d", &t, &split, Scale::Normalized, |_| Ok(vec![0.5]));
        assert!(matches!(short, Err(Error::DimensionMismatch(_))));
        let nan = evaluate_model("m", "d", &t, &split, Scale::Normalized, |ps| {
            Ok(vec![f64::NAN; ps.len()])
        });
        assert!(nan.is_err());
    }

    #[test]
    fn csv_rows_sorted_by_model() {
        let mk = |name: &str| MetricReport {
            model_name: name.into(),
            dataset_label: "d".into(),
            rmse: 0.5,
            mae: 0.25,
            n: 3,
            scale: Scale::Normalized,
            omega_hash: String::new(),
        };
        let csv = reports_csv(&[mk("vae"), mk("lfa"), mk("mean")]);
        let models: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(models, vec!["lfa", "mean", "vae"]);
        assert_eq!(csv.lines().next().unwrap(), REPORT_CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "lfa,d,0.5,0.25,3,normalized");
    }
}
