//! Stable text formatting for tabular output.

/// Seventeen significant digits in scientific notation; round-trips every `f64`.
pub fn float17(x: f64) -> String {
    if x == 0.0 {
        // fold -0.0 so byte-level comparisons do not depend on the sign of zero
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5] {
            assert_eq!(float17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(float17(-0.0), float17(0.0));
    }
}
