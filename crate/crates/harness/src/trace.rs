//! Trace CSV: one row per iteration, columns in [`IterationRecord`] field
//! order. Floats use 17 significant digits so a write/read round trip is
//! exact; vectors are `;`-joined; `+∞` is written `inf`.

use std::io::Write;
use std::path::Path;

use ssqp_core::{ExtendedReal, IterationRecord};

use crate::error::HarnessError;

pub const COLUMNS: [&str; 27] = [
    "k",
    "x",
    "g",
    "d",
    "y",
    "tau_trial",
    "tau",
    "xi_trial",
    "xi",
    "alpha_hat_init",
    "alpha_tilde_init",
    "alpha_hat",
    "alpha_tilde",
    "alpha",
    "f",
    "c_norm1",
    "tau_decreased",
    "xi_decreased",
    "d_true",
    "y_true",
    "tau_trial_true",
    "tau_hat",
    "delta_q_stoch",
    "delta_q_true",
    "stationarity",
    "phi_before",
    "phi_after",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

fn fmt_ext(v: ExtendedReal) -> String {
    match v {
        ExtendedReal::Finite(x) => fmt_f64(x),
        ExtendedReal::Infinite => "inf".into(),
    }
}

fn row(r: &IterationRecord) -> Vec<String> {
    vec![
        r.k.to_string(),
        fmt_vec(&r.x),
        fmt_vec(&r.g),
        fmt_vec(&r.d),
        fmt_vec(&r.y),
        fmt_ext(r.tau_trial),
        fmt_f64(r.tau),
        fmt_ext(r.xi_trial),
        fmt_f64(r.xi),
        fmt_f64(r.alpha_hat_init),
        fmt_f64(r.alpha_tilde_init),
        fmt_f64(r.alpha_hat),
        fmt_f64(r.alpha_tilde),
        fmt_f64(r.alpha),
        fmt_f64(r.f),
        fmt_f64(r.c_norm1),
        r.tau_decreased.to_string(),
        r.xi_decreased.to_string(),
        fmt_vec(&r.d_true),
        fmt_vec(&r.y_true),
        fmt_ext(r.tau_trial_true),
        fmt_f64(r.tau_hat),
        fmt_f64(r.delta_q_stoch),
        fmt_f64(r.delta_q_true),
        fmt_f64(r.stationarity),
        fmt_f64(r.phi_before),
        fmt_f64(r.phi_after),
    ]
}

pub fn trace_to_csv(trace: &[IterationRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in trace {
        w.write_record(row(r)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<(), HarnessError> {
    write_atomic(path, &trace_to_csv(trace))
}

pub fn read_trace(path: &Path) -> Result<Vec<IterationRecord>, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    parse_trace(&bytes).map_err(|message| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_trace(bytes: &[u8]) -> Result<Vec<IterationRecord>, String> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        out.push(parse_row(&rec).map_err(|e| format!("row {}: {e}", line + 1))?);
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord) -> Result<IterationRecord, String> {
    let mut fields = rec.iter().zip(COLUMNS);
    let mut next = || fields.next().ok_or_else(|| "too few columns".to_string());
    let num = |(s, col): (&str, &str)| s.parse::<f64>().map_err(|e| format!("{col}: {e}"));
    let vec = |(s, col): (&str, &str)| -> Result<Vec<f64>, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';')
            .map(|t| t.parse::<f64>().map_err(|e| format!("{col}: {e}")))
            .collect()
    };
    let ext = |(s, col): (&str, &str)| -> Result<ExtendedReal, String> {
        if s == "inf" {
            Ok(ExtendedReal::Infinite)
        } else {
            s.parse::<f64>()
                .map(ExtendedReal::Finite)
                .map_err(|e| format!("{col}: {e}"))
        }
    };
    let flag = |(s, col): (&str, &str)| s.parse::<bool>().map_err(|e| format!("{col}: {e}"));
    let (k, kcol) = next()?;
    Ok(IterationRecord {
        k: k.parse().map_err(|e| format!("{kcol}: {e}"))?,
        x: vec(next()?)?,
        g: vec(next()?)?,
        d: vec(next()?)?,
        y: vec(next()?)?,
        tau_trial: ext(next()?)?,
        tau: num(next()?)?,
        xi_trial: ext(next()?)?,
        xi: num(next()?)?,
        alpha_hat_init: num(next()?)?,
        alpha_tilde_init: num(next()?)?,
        alpha_hat: num(next()?)?,
        alpha_tilde: num(next()?)?,
        alpha: num(next()?)?,
        f: num(next()?)?,
        c_norm1: num(next()?)?,
        tau_decreased: flag(next()?)?,
        xi_decreased: flag(next()?)?,
        d_true: vec(next()?)?,
        y_true: vec(next()?)?,
        tau_trial_true: ext(next()?)?,
        tau_hat: num(next()?)?,
        delta_q_stoch: num(next()?)?,
        delta_q_true: num(next()?)?,
        stationarity: num(next()?)?,
        phi_before: num(next()?)?,
        phi_after: num(next()?)?,
    })
}
