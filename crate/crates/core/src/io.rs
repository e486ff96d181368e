//! Plain-text serialization of traces and tables.
//!
//! Floats are written with 17 significant digits so that values round-trip
//! bit-exactly and repeated runs produce identical files.

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn csv_row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&f);
    }
    line.push('\n');
    line
}

pub fn floats<'a, I>(xs: I) -> impl Iterator<Item = String> + 'a
where
    I: IntoIterator<Item = &'a f64>,
    I::IntoIter: 'a,
{
    xs.into_iter().map(|x| fmt_f64(*x))
}

/// Header names `prefix[0]…prefix[n-1]`.
pub fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}
