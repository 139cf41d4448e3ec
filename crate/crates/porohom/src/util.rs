//! Small shared helpers.

/// C-style `%.12e` rendering: sign, 12 fractional digits, exponent with sign
/// and at least two digits. Used by every text artifact so outputs are
/// byte-stable across runs.
pub fn fmt_e12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.12e}", x);
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            format!("{mantissa}e{sign}{digits:0>2}")
        }
        None => s,
    }
}
