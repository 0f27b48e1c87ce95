//! Text formatting for tables and CSV.

/// `x` rounded to 12 significant digits, printed in its shortest form.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    rounded.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(sig12(0.6126998367802821), "0.61269983678");
        assert_eq!(sig12(10.0), "10");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(-2.5e-7), "-0.00000025");
        assert_eq!(sig12(f64::NAN), "NaN");
    }
}
