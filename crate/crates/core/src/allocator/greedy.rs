use crate::error::{Error, Result};

/// Promotes layers in descending score order (ties by lower index) while the
/// cumulative cost stays within `budget`; layers that do not fit are skipped.
///
/// Returns demotion flags: `true` keeps the layer at low precision.
pub fn solve_greedy(scores: &[f64], costs: &[f64], budget: f64) -> Result<Vec<bool>> {
    if scores.len() != costs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} costs",
            scores.len(),
            costs.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    let mut q = vec![true; scores.len()];
    let mut spent = 0.0;
    for i in order {
        if spent + costs[i] <= budget {
            spent += costs[i];
            q[i] = false;
        }
    }
    Ok(q)
}
