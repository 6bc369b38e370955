/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub(crate) fn float(x: f64) -> String {
    format!("{x:.16e}")
}
