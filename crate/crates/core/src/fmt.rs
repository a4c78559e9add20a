//! Locale-independent number formatting for emitted tables.

/// Six significant digits in scientific notation, e.g. `1.23457e6`.
pub fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}
