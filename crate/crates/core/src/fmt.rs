//! Text formats: `%.17g`-style floats and single-column dataset CSV files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measures::Dataset;

/// Formats `x` like C's `%.17g`: 17 significant digits, trailing zeros
/// stripped, exponent form outside `[1e-4, 1e17)`. Every finite double
/// round-trips through this representation.
pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a float written by [`g17`] (or any Rust-parsable float).
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"` (JSON has no literal for them).
pub mod json_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&super::g17(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => super::parse_f64(&t).ok_or_else(|| de::Error::custom(format!("not a number: {t:?}"))),
        }
    }

    /// The same for sequences.
    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Item(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            struct One(f64);
            impl serde::Serialize for One {
                fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                    super::serialize(&self.0, s)
                }
            }
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&One(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Item>::deserialize(d)?.into_iter().map(|i| i.0).collect())
        }
    }
}

/// Column header used when writing datasets.
pub const DATASET_HEADER: &str = "value";

/// Renders a dataset as a one-column CSV with a header line.
pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut out = String::with_capacity(d.len() * 24 + 8);
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for &v in d.values() {
        out.push_str(&g17(v));
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(path: &Path, d: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_csv(d)).map_err(|e| Error::io(path, e))
}

/// Reads a dataset from a CSV file: one header line, then one value per line
/// (only the first column is used; blank lines are skipped).
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_csv(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_dataset_csv(text: &str) -> std::result::Result<Dataset, String> {
    let mut lines = text.lines();
    if lines.next().is_none() {
        return Err("file is empty (expected a header line)".into());
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap_or("");
        let v = parse_f64(field).ok_or_else(|| format!("line {}: cannot parse {field:?} as a number", i + 2))?;
        values.push(v);
    }
    Dataset::new(values).map_err(|e| e.to_string())
}
