//! Fixed-precision decimal rendering with half-up rounding.
//!
//! Ratios are rounded in integer arithmetic so that golden values such as
//! `435/7064 -> 0.0616` never depend on binary floating-point ties.

/// `num / den` rounded half-up to `decimals` places. `den == 0` renders 0.
pub fn ratio(num: u64, den: u64, decimals: u32) -> String {
    scaled_ratio(u128::from(num), u128::from(den), decimals)
}

/// `100 * num / den` rounded half-up to two places.
pub fn percent(num: u64, den: u64) -> String {
    scaled_ratio(u128::from(num) * 100, u128::from(den), 2)
}

fn scaled_ratio(num: u128, den: u128, decimals: u32) -> String {
    if den == 0 {
        return fixed(0, decimals);
    }
    let scale = 10u128.pow(decimals);
    let rounded = (num * scale * 2 + den) / (den * 2);
    fixed(rounded, decimals)
}

fn fixed(scaled: u128, decimals: u32) -> String {
    if decimals == 0 {
        return scaled.to_string();
    }
    let scale = 10u128.pow(decimals);
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
}

/// Parses a rendered fixed-point value back to its scaled integer.
pub fn parse_fixed(text: &str, decimals: u32) -> Option<u128> {
    let (int, frac) = text.trim().split_once('.')?;
    if frac.len() != decimals as usize {
        return None;
    }
    let int: u128 = int.parse().ok()?;
    let frac: u128 = frac.parse().ok()?;
    Some(int * 10u128.pow(decimals) + frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_values() {
        assert_eq!(ratio(435, 7064, 4), "0.0616");
        assert_eq!(ratio(221, 7064, 4), "0.0313");
        assert_eq!(ratio(0, 7064, 4), "0.0000");
        assert_eq!(ratio(7064, 1, 4), "7064.0000");
        assert_eq!(percent(1130, 1250), "90.40");
        assert_eq!(percent(647, 687), "94.18");
        assert_eq!(percent(120, 1250), "9.60");
        assert_eq!(percent(1488, 8751), "17.00");
        assert_eq!(percent(7263, 8751), "83.00");
        assert_eq!(percent(0, 0), "0.00");
    }

    #[test]
    fn ties_round_up() {
        assert_eq!(ratio(1, 8, 2), "0.13");
        assert_eq!(ratio(5, 1000, 2), "0.01");
        assert_eq!(percent(1, 8), "12.50");
        assert_eq!(ratio(1, 2, 0), "1");
    }

    proptest! {
        #[test]
        fn rendered_values_reparse(num in 0u64..1_000_000, den in 1u64..1_000_000) {
            let text = ratio(num, den, 4);
            let scaled = parse_fixed(&text, 4).unwrap();
            // exact value lies within half a unit of the rendered one
            let exact = u128::from(num) * 10_000 * 2;
            let lo = (scaled * 2).saturating_sub(1) * u128::from(den);
            let hi = (scaled * 2 + 1) * u128::from(den);
            prop_assert!(lo <= exact && exact < hi);
        }
    }
}
