/// Area under the ROC curve in Mann-Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Computed from midranks in `O(n log n)`. Returns `None` when either class
/// is empty or a score is not finite.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    if scores.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, kept integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share the midrank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * tied_pos;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    // twice the Mann-Whitney U statistic
    let twice_u = twice_rank_sum - p * (p + 1);
    Some(twice_u as f64 / (2 * p * n) as f64)
}

/// AUC over the entries whose label is known.
pub fn auc_masked(scores: &[f64], labels: &[Option<bool>]) -> Option<f64> {
    let (s, l): (Vec<f64>, Vec<bool>) = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, l)| l.map(|l| (s, l)))
        .unzip();
    auc(&s, &l)
}
