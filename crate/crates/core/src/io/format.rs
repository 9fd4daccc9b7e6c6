//! Locale-independent number formatting and CSV tables.

use std::io::Write;

use crate::crop_model::{DailyInput, Trajectory};
use crate::document::FieldError;
use crate::ocp::Bounds;
use crate::scenario::Table;

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "day",
    "temp_c",
    "drought",
    "radiation_mj",
    "biomass_kg_m2",
    "thermal_time_cd",
    "i50b_cd",
    "f_solar",
];

/// Shortest decimal rendering of `x` rounded to 15 significant digits,
/// in the style of C's `%.15g`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan" } else if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".to_string() } else { t.to_string() }
}

/// Writes one row per day 0..N; the last row has no input.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for (day, state) in traj.states.iter().enumerate() {
        let input = traj
            .inputs
            .get(day)
            .map(|u| u.to_array().map(fmt_num))
            .unwrap_or_else(|| [String::new(), String::new(), String::new()]);
        let [i0, i1, i2] = input;
        w.write_record([
            day.to_string(),
            i0,
            i1,
            i2,
            fmt_num(state.biomass),
            fmt_num(state.thermal_time),
            fmt_num(state.i50b),
            fmt_num(traj.f_solar_series[day]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table<W: Write>(out: W, table: &Table) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|x| fmt_num(*x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a daily input schedule. Columns are found by name (`temp_c`,
/// `drought`, `radiation_mj`); other columns are ignored, and rows whose
/// three input cells are all empty are skipped. Every value outside
/// `bounds` is reported.
pub fn read_schedule(text: &str, bounds: &Bounds) -> Result<Vec<DailyInput>, Vec<FieldError>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| vec![FieldError::new("inputs", e.to_string())])?.clone();
    let names = ["temp_c", "drought", "radiation_mj"];
    let mut errors = Vec::new();
    let cols: Vec<Option<usize>> = names.iter().map(|n| headers.iter().position(|h| h == *n)).collect();
    for (n, c) in names.iter().zip(&cols) {
        if c.is_none() {
            errors.push(FieldError::new(format!("inputs.{n}"), "missing column"));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let cols: Vec<usize> = cols.into_iter().flatten().collect();
    let (lo, hi) = (bounds.lower(), bounds.upper());
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(FieldError::new(format!("inputs[{row}]"), e.to_string()));
                continue;
            }
        };
        let cells: Vec<&str> = cols.iter().map(|&c| rec.get(c).unwrap_or("")).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        let mut u = [0.0; 3];
        for k in 0..3 {
            let path = format!("inputs[{row}].{}", names[k]);
            match cells[k].parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    if v < lo[k] || v > hi[k] {
                        errors.push(FieldError::new(path, format!("{v} outside [{}, {}]", lo[k], hi[k])));
                    }
                    u[k] = v;
                }
                _ => errors.push(FieldError::new(path, format!("expected a finite number, got '{}'", cells[k]))),
            }
        }
        out.push(DailyInput::from_array(u));
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}
