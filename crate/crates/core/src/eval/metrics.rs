use std::collections::BTreeSet;

/// Fraction of held-out items found in the top `k`.
pub fn recall_at_k(ranked: &[usize], heldout: &BTreeSet<usize>, k: usize) -> f64 {
    if heldout.is_empty() {
        return 0.0;
    }
    hits(ranked, heldout, k) as f64 / heldout.len() as f64
}

/// 1 if any held-out item is in the top `k`, else 0.
pub fn hr_at_k(ranked: &[usize], heldout: &BTreeSet<usize>, k: usize) -> f64 {
    if hits(ranked, heldout, k) > 0 {
        1.0
    } else {
        0.0
    }
}

/// Binary-relevance NDCG with `1/log2(rank + 1)` discounts, ranks from 1.
pub fn ndcg_at_k(ranked: &[usize], heldout: &BTreeSet<usize>, k: usize) -> f64 {
    let ideal: f64 = (0..heldout.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| heldout.contains(i))
        .map(|(pos, _)| discount(pos))
        .sum();
    dcg / ideal
}

fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

fn hits(ranked: &[usize], heldout: &BTreeSet<usize>, k: usize) -> usize {
    ranked
        .iter()
        .take(k)
        .filter(|i| heldout.contains(i))
        .count()
}
