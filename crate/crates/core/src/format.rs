//! Text rendering shared by every table and model writer.

/// 17 significant digits in scientific notation; parsing the result with
/// `str::parse::<f64>` returns the identical bit pattern.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tab-joined floats.
pub fn float_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(float).collect::<Vec<_>>().join("\t")
}
