//! Fixed-width decimal rendering for machine-readable outputs.

/// Formats `x` with 17 significant digits, which round-trips every `f64`.
///
/// Values whose decimal exponent lies in `[-5, 17)` are written in positional
/// notation, everything else in scientific notation.
pub fn format_g17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0" } else { "0.0" }.to_string();
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        sci
    }
}

#[cfg(test)]
mod tests {
    use super::format_g17;

    #[test]
    fn round_trips_and_digit_count() {
        for &x in &[0.729, 1.0, 100.648, 1e-9, 12345.678, -0.25, 3.0e20, f64::MIN_POSITIVE] {
            let s = format_g17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let digits: String = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(|c| c.is_ascii_digit())
                .collect();
            assert_eq!(digits.trim_start_matches('0').len(), 17, "{s}");
        }
        assert_eq!(format_g17(0.5), "0.50000000000000000");
        assert_eq!(format_g17(0.0), "0.0");
    }
}
