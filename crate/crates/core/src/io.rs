//! CSV and text formats read and written by the pipeline.
//!
//! Floating-point values are written as `{:.16e}` (17 significant digits), so
//! every value read back is bit-identical to the one written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::{PeriodRecord, YearlyObservations};
use crate::mcmc::{component_name, PosteriorSamples, PosteriorSummary};
use crate::model::{LatentPath, ModelParams, StressedLoss, PARAM_NAMES};

pub const DATASET_HEADER: [&str; 4] = ["year", "obligors", "defaults", "avg_recovery"];
pub const MLE_HEADER: [&str; 8] = ["p", "rho", "mu", "sigma", "omega", "PD", "LGD", "EC"];
pub const SUMMARY_HEADER: [&str; 10] = [
    "quantity", "Mode", "Mean", "Stdev", "Skewness", "Kurtosis", "CV", "Q25", "Q50", "Q75",
];

/// Round-trip text form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} '{s}' as a number"),
    })
}

fn parse_int<T: std::str::FromStr>(s: &str, line: u64, what: &str) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} '{s}' as an integer"),
    })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(Error::InsufficientData("file is empty".into()));
    }
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header '{}', found '{}'",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

/// Parse a dataset with header `year,obligors,defaults,avg_recovery`.
pub fn read_dataset<R: Read>(reader: R) -> Result<YearlyObservations> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &DATASET_HEADER)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let avg = row[3].trim();
        let record = PeriodRecord {
            year: parse_int(&row[0], line, "year")?,
            obligors: parse_int(&row[1], line, "obligors")?,
            defaults: parse_int(&row[2], line, "defaults")?,
            avg_recovery: if avg.is_empty() {
                None
            } else {
                Some(parse_f64(avg, line, "avg_recovery")?)
            },
        };
        // per-row invariants, reported with the offending line
        YearlyObservations::new(vec![record]).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::InsufficientData("dataset has no rows".into()));
    }
    YearlyObservations::new(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<YearlyObservations> {
    read_dataset(File::open(path)?)
}

fn csv_writer(path: impl AsRef<Path>) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().from_path(path)?)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &YearlyObservations) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(DATASET_HEADER)?;
    for r in data.records() {
        w.write_record([
            r.year.to_string(),
            r.obligors.to_string(),
            r.defaults.to_string(),
            r.avg_recovery.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// True parameters and factor path of a simulated dataset, as
/// `quantity,value` rows.
pub fn write_truth(
    path: impl AsRef<Path>,
    params: &ModelParams,
    latent: &LatentPath,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["quantity", "value"])?;
    for (name, v) in PARAM_NAMES.iter().zip(params.to_array()) {
        w.write_record([name.to_string(), fmt_f64(v)])?;
    }
    for (t, x) in latent.as_slice().iter().enumerate() {
        w.write_record([format!("x{}", t + 1), fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<(ModelParams, LatentPath)> {
    let mut rdr = csv_reader(File::open(path)?);
    check_header(&mut rdr, &["quantity", "value"])?;
    let mut theta = [f64::NAN; 5];
    let mut latent = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = record_line(&row);
        let v = parse_f64(&row[1], line, "value")?;
        let name = row[0].trim();
        if let Some(k) = PARAM_NAMES.iter().position(|n| *n == name) {
            theta[k] = v;
        } else if name.starts_with('x') {
            latent.push(v);
        } else {
            return Err(Error::Parse {
                line,
                message: format!("unknown quantity '{name}'"),
            });
        }
    }
    Ok((ModelParams::from_array(theta)?, LatentPath::new(latent)?))
}

/// One row `p,rho,mu,sigma,omega,PD,LGD,EC`; `None` fields are left empty.
pub fn write_mle(path: impl AsRef<Path>, values: &[Option<f64>; 8]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(MLE_HEADER)?;
    w.write_record(values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()))?;
    w.flush()?;
    Ok(())
}

pub fn mle_row(params: &ModelParams, stressed: &StressedLoss) -> [Option<f64>; 8] {
    let t = params.to_array();
    [
        t[0],
        t[1],
        t[2],
        t[3],
        t[4],
        stressed.pd,
        stressed.lgd,
        stressed.ec,
    ]
    .map(Some)
}

pub fn load_mle(path: impl AsRef<Path>) -> Result<[Option<f64>; 8]> {
    let mut rdr = csv_reader(File::open(path)?);
    check_header(&mut rdr, &MLE_HEADER)?;
    let row = rdr
        .records()
        .next()
        .ok_or_else(|| Error::InsufficientData("estimate file has no rows".into()))??;
    let line = record_line(&row);
    let mut out = [None; 8];
    for (k, field) in row.iter().enumerate() {
        if !field.trim().is_empty() {
            out[k] = Some(parse_f64(field, line, MLE_HEADER[k])?);
        }
    }
    Ok(out)
}

/// Posterior draws with header `iter,p,rho,mu,sigma,omega,x1,...,xT`.
pub fn write_chain(path: impl AsRef<Path>, samples: &PosteriorSamples) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::WriterBuilder::new().from_writer(file);
    let mut header = vec!["iter".to_string()];
    header.extend((0..samples.dim).map(component_name));
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(samples.dim + 1);
    for (it, row) in samples.iterations.iter().zip(samples.rows()) {
        fields.clear();
        fields.push(it.to_string());
        fields.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a chain file; run metadata other than the draws is not stored in it.
pub fn load_chain(path: impl AsRef<Path>) -> Result<PosteriorSamples> {
    let mut rdr = csv_reader(File::open(path)?);
    let header = rdr.headers()?.clone();
    if header.len() < 6 || &header[0] != "iter" {
        return Err(Error::Parse {
            line: 1,
            message: "chain header must start with iter,p,rho,mu,sigma,omega".into(),
        });
    }
    let dim = header.len() - 1;
    for (k, name) in header.iter().skip(1).enumerate() {
        if name != component_name(k) {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "chain column {} should be '{}', found '{name}'",
                    k + 2,
                    component_name(k)
                ),
            });
        }
    }
    let mut draws = Vec::new();
    let mut iterations = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        iterations.push(parse_int(&row[0], line, "iter")?);
        for field in row.iter().skip(1) {
            draws.push(parse_f64(field, line, "draw")?);
        }
    }
    if iterations.is_empty() {
        return Err(Error::InsufficientData("chain file has no draws".into()));
    }
    Ok(PosteriorSamples {
        draws,
        dim,
        iterations,
        acceptance_rates: vec![f64::NAN; dim],
        tuned_rw_sd: vec![f64::NAN; dim],
        seed: 0,
        thin: 1,
        warnings: Vec::new(),
    })
}

pub fn summary_fields(s: &PosteriorSummary) -> [f64; 9] {
    [
        s.mode, s.mean, s.stdev, s.skewness, s.kurtosis, s.cv, s.q25, s.q50, s.q75,
    ]
}

/// Rows of `quantity,Mode,Mean,Stdev,Skewness,Kurtosis,CV,Q25,Q50,Q75`.
pub fn write_summary(path: impl AsRef<Path>, rows: &[(String, PosteriorSummary)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (name, s) in rows {
        let mut fields = vec![name.clone()];
        fields.extend(summary_fields(s).iter().map(|v| fmt_f64(*v)));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic table with a header row; values are written verbatim.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One value per line.
pub fn write_values(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_f64(l, i as u64 + 1, "value"))
        .collect()
}
