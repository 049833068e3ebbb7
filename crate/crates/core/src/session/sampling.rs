use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::search::Neighborhood;

/// Sizes of the top/middle/bottom tiers of `n` ranked hits, remainder to the top first.
pub fn tier_sizes(n: usize) -> [usize; 3] {
    let base = n / 3;
    let rem = n % 3;
    [base + usize::from(rem >= 1), base + usize::from(rem >= 2), base]
}

/// Per-tier sample quotas for `k` displayed candidates, remainder to the top first.
pub fn tier_quotas(k: usize) -> [usize; 3] {
    tier_sizes(k)
}

/// Tier (0 = top, 1 = middle, 2 = bottom) of the hit at `rank` (0-based).
pub fn tier_of(rank: usize, n: usize) -> usize {
    let [top, mid, _] = tier_sizes(n);
    if rank < top {
        0
    } else if rank < top + mid {
        1
    } else {
        2
    }
}

/// Picks `k` hits spread over the top, middle and bottom thirds of the
/// neighborhood, preserving score order. Small neighborhoods are returned whole.
pub fn sample_display<R: Rng + ?Sized>(
    neighborhood: &Neighborhood,
    k: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let n = neighborhood.hits.len();
    if n == 0 {
        return Err(Error::NothingToDisplay);
    }
    if n <= k {
        return Ok(neighborhood.ids().collect());
    }
    let sizes = tier_sizes(n);
    let mut quotas = tier_quotas(k);
    // a tier smaller than its quota passes the deficit down
    for t in 0..3 {
        if quotas[t] > sizes[t] {
            let deficit = quotas[t] - sizes[t];
            quotas[t] = sizes[t];
            if t + 1 < 3 {
                quotas[t + 1] += deficit;
            }
        }
    }
    let mut ranks = Vec::with_capacity(k);
    let mut offset = 0;
    for t in 0..3 {
        let picked = index::sample(rng, sizes[t], quotas[t]);
        ranks.extend(picked.iter().map(|r| r + offset));
        offset += sizes[t];
    }
    ranks.sort_unstable();
    Ok(ranks
        .into_iter()
        .map(|r| neighborhood.hits[r].utterance_id)
        .collect())
}

/// Score-ordered page `page` (1-based) of the neighborhood; empty past the end.
pub fn paginate(neighborhood: &Neighborhood, page: usize, page_size: usize) -> Result<Vec<u64>> {
    if page == 0 {
        return Err(crate::error::Error::InvalidConfig("pages are numbered from 1".into()));
    }
    Ok(neighborhood
        .ids()
        .skip((page - 1) * page_size)
        .take(page_size)
        .collect())
}
