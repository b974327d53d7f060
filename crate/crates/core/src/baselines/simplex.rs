use super::PortfolioWeights;

/// Euclidean projection onto `{w >= 0, sum w = 1}` by the sorted-threshold
/// method.
pub fn simplex_project(v: &[f64]) -> PortfolioWeights {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    PortfolioWeights::from_raw(v.iter().map(|x| (x - theta).max(0.0)).collect())
}
