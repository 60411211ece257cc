//! Precision, recall and F1. Undefined ratios are `None`, never 0 or 1.

pub fn precision(tp: u64, fp: u64) -> Option<f64> {
    (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64)
}

pub fn recall(tp: u64, fn_: u64) -> Option<f64> {
    (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64)
}

/// Harmonic mean; undefined when `p + r = 0`.
pub fn f1(p: f64, r: f64) -> Option<f64> {
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// F1 from counts, `2tp / (2tp + fp + fn)`, defined when both precision and
/// recall are defined and not both zero.
pub fn f1_counts(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    match (precision(tp, fp), recall(tp, fn_)) {
        (Some(_), Some(_)) if tp > 0 => Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64),
        _ => None,
    }
}

/// `100 * num / den` rounded half-up to hundredths, as an integer count of
/// hundredths. Exact integer arithmetic.
pub fn percent_hundredths(num: u64, den: u64) -> Option<u64> {
    if den == 0 {
        return None;
    }
    let (num, den) = (num as u128, den as u128);
    Some(((num * 20_000 + den) / (2 * den)) as u64)
}

pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

/// Percent strings for the three metrics, `"n/a"` where undefined.
pub fn percent_strings(tp: u64, fp: u64, fn_: u64) -> [String; 3] {
    let f1_den = if f1_counts(tp, fp, fn_).is_some() {
        2 * tp + fp + fn_
    } else {
        0
    };
    [
        percent_hundredths(tp, tp + fp),
        percent_hundredths(tp, tp + fn_),
        percent_hundredths(2 * tp, f1_den),
    ]
    .map(|v| v.map_or_else(|| "n/a".to_string(), format_hundredths))
}
