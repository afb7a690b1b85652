//! Float formatting shared by every file and JSON writer.
//!
//! Reals are written with 17 significant digits in scientific notation,
//! which round-trips every finite `f64` exactly.

use serde::Serializer;
use serde_json::value::RawValue;

pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde helper: a finite float as a 17-digit JSON number, non-finite as `null`.
pub fn serialize_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        let raw = RawValue::from_string(sig17(*x)).map_err(serde::ser::Error::custom)?;
        s.serialize_some(&raw)
    } else {
        s.serialize_none()
    }
}

pub fn serialize_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => serialize_f64(v, s),
        None => s.serialize_none(),
    }
}
