use std::path::Path;

use super::{BenchError, BenchRecord, Model};

pub const CSV_HEADER: [&str; 6] = ["model", "n", "workers", "elapsed_s", "mflops", "speedup"];

/// Formats `x` with six significant digits in the style of C's `%g`:
/// fixed notation for exponents in `-5..6`, scientific otherwise, trailing
/// zeros removed.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `model,n,workers,elapsed_s,mflops,speedup`, one row per record.
/// An unpaired speedup is an empty field.
pub fn emit_csv(records: &[BenchRecord], path: &Path) -> Result<(), BenchError> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to write".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.model.as_str().to_string(),
            r.n.to_string(),
            r.workers.to_string(),
            format_sig(r.elapsed),
            format_sig(r.mflops),
            r.speedup.map(format_sig).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected CSV header {header:?}")));
    }
    let num = |field: &str, what: &str| -> Result<f64, BenchError> {
        field
            .parse()
            .map_err(|_| BenchError::Config(format!("bad {what} value {field:?}")))
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let model: Model = row[0].parse()?;
        let n = row[1]
            .parse()
            .map_err(|_| BenchError::Config(format!("bad n {:?}", &row[1])))?;
        let workers = row[2]
            .parse()
            .map_err(|_| BenchError::Config(format!("bad workers {:?}", &row[2])))?;
        let speedup = match &row[5] {
            "" => None,
            s => Some(num(s, "speedup")?),
        };
        out.push(BenchRecord {
            model,
            n,
            workers,
            elapsed: num(&row[3], "elapsed_s")?,
            mflops: num(&row[4], "mflops")?,
            speedup,
        });
    }
    Ok(out)
}
