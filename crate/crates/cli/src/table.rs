//! Delimited results tables. Column order is fixed so tables from different
//! experiments can be diffed.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub run_id: String,
    pub mode: String,
    pub clients: usize,
    pub train_samples: usize,
    pub epochs: usize,
    pub holdout_loss: f64,
    pub holdout_iou: f64,
    pub holdout_mse: f64,
    pub holdout_ssim: f64,
    /// Summed compute time of all clients; communication is free and
    /// clients are run one after another.
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub run_id: String,
    pub victim: String,
    pub round: usize,
    pub alpha: f64,
    pub provenance: String,
    pub status: String,
    pub matching_loss: f64,
    pub mse: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub baseline_ssim: f64,
    pub baseline_psnr: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// Markdown rendering of the training table.
pub fn train_markdown(rows: &[TrainRow]) -> String {
    let mut s = String::from("| run | mode | clients | images | epochs | loss | IoU | MSE | SSIM | train s |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {:.1} |\n",
            r.run_id,
            r.mode,
            r.clients,
            r.train_samples,
            r.epochs,
            fmt(r.holdout_loss),
            fmt(r.holdout_iou),
            fmt(r.holdout_mse),
            fmt(r.holdout_ssim),
            r.train_seconds
        ));
    }
    s
}

pub fn attack_markdown(rows: &[AttackRow]) -> String {
    let mut s = String::from("| run | victim | round | α | provenance | status | MSE | SSIM | PSNR | baseline SSIM | baseline PSNR |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.run_id,
            r.victim,
            r.round,
            r.alpha,
            r.provenance,
            r.status,
            fmt(r.mse),
            fmt(r.ssim),
            fmt(r.psnr),
            fmt(r.baseline_ssim),
            fmt(r.baseline_psnr)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_infinite_psnr() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let row = AttackRow {
            run_id: "fl".into(),
            victim: "client-1".into(),
            round: 0,
            alpha: 0.5,
            provenance: "recovered".into(),
            status: "completed".into(),
            matching_loss: 1e-3,
            mse: 0.0,
            ssim: 1.0,
            psnr: f64::INFINITY,
            baseline_ssim: 0.0,
            baseline_psnr: 9.0,
        };
        write_csv(&path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("run_id,victim,round,alpha,"));
        assert_eq!(read_csv::<AttackRow>(&path).unwrap(), vec![row]);
    }
}
