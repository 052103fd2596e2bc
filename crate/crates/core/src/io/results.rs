//! Result tables (CSV) and loss logs (JSON lines). Both schemas are in
//! `docs/formats.md`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::metrics::LATITUDE_BANDS;
use crate::tasks::train::TrainReport;

/// Fixed leading columns; `band_00 .. band_17` follow.
pub const CSV_COLUMNS: [&str; 17] = [
    "encoder",
    "levels",
    "features",
    "table_cap",
    "steps",
    "batch_size",
    "learning_rate",
    "l2_lambda",
    "seed",
    "encoding_bytes",
    "mlp_bytes",
    "memory_bytes",
    "auxiliary_bytes",
    "initial_relative_l2",
    "final_relative_l2",
    "final_psnr",
    "novel_relative_l2",
];

pub fn csv_header() -> Vec<String> {
    CSV_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..LATITUDE_BANDS).map(|b| format!("band_{b:02}")))
        .collect()
}

/// Numeric fields of one report. Missing values are written as `NaN`; `f64`
/// formatting is shortest round-trip.
pub fn csv_record(r: &TrainReport) -> Vec<String> {
    let mut row = vec![
        r.encoder.to_string(),
        r.levels.to_string(),
        r.features.to_string(),
        r.table_cap.to_string(),
        r.train.steps.to_string(),
        r.train.batch_size.to_string(),
        r.train.learning_rate.to_string(),
        r.train.l2_lambda.to_string(),
        r.train.seed.to_string(),
        r.encoding_bytes.to_string(),
        r.mlp_bytes.to_string(),
        r.memory_bytes().to_string(),
        r.auxiliary_bytes.to_string(),
        r.initial_relative_l2.to_string(),
        r.final_relative_l2.to_string(),
        r.final_psnr.to_string(),
        r.novel_relative_l2.unwrap_or(f64::NAN).to_string(),
    ];
    for b in 0..LATITUDE_BANDS {
        row.push(r.latitude_profile.get(b).copied().unwrap_or(f64::NAN).to_string());
    }
    row
}

pub fn write_results<W: Write>(reports: &[TrainReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in reports {
        w.write_record(csv_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_csv(reports: &[TrainReport], path: impl AsRef<Path>) -> Result<()> {
    write_results(reports, BufWriter::new(File::create(path)?))
}

/// One parsed data row: the fixed columns then the bands, all as `f64`.
pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        return Err(Error::MalformedHeader("unexpected results columns".into()));
    }
    rd.records()
        .map(|rec| {
            rec?.iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::MalformedHeader(format!("non-numeric field {f:?}"))))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
}

pub fn write_loss_log<W: Write>(curve: &[f64], mut out: W) -> Result<()> {
    for (step, &loss) in curve.iter().enumerate() {
        serde_json::to_writer(&mut out, &LossRecord { step, loss })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_loss_log_file(curve: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_loss_log(curve, BufWriter::new(File::create(path)?))
}

pub fn read_loss_log<R: std::io::BufRead>(input: R) -> Result<Vec<LossRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
