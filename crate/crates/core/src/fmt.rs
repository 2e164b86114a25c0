//! Float rendering shared by every text output.
//!
//! Values are printed with 6 significant digits, ties rounded half-to-even
//! on the exact binary value, in the shortest of fixed or scientific form
//! (the same layout as C's `%.6g`).

pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();

    let body = if (-4..6).contains(&exp) {
        if exp >= 0 {
            let split = exp as usize + 1;
            let (int, frac) = digits.split_at(split);
            join_trimmed(int, frac)
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            join_trimmed("0", &format!("{zeros}{digits}"))
        }
    } else {
        let (lead, frac) = digits.split_at(1);
        let m = join_trimmed(lead, frac);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

fn join_trimmed(int: &str, frac: &str) -> String {
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    }
}
