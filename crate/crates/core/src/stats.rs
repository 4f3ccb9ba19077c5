//! Small summary statistics with a fixed summation order.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation divided by sqrt(len); 0 for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (k - 1) as f64).sqrt() / (k as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_matches_hand_computation() {
        // sd of [1,2,3,4] is sqrt(5/3)
        let se = standard_error(&[1.0, 2.0, 3.0, 4.0]);
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(standard_error(&[7.0]), 0.0);
        assert_eq!(standard_error(&[2.0, 2.0, 2.0]), 0.0);
    }
}
