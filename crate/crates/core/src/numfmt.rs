//! Fixed-precision number formatting for persisted artifacts.

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest decimal text of `x` after rounding to 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    let r = round_sig9(x);
    if r == 0.0 {
        // no "-0"
        return "0".to_string();
    }
    format!("{r}")
}
