//! Client selection and local triple sampling.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ClientState, Triple};

/// `m` distinct clients drawn uniformly without replacement.
pub fn select_clients<R: Rng + ?Sized>(rng: &mut R, all_clients: &[usize], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > all_clients.len() {
        return Err(Error::config(
            "clients_per_round",
            format!("{m} clients requested from a federation of {}", all_clients.len()),
        ));
    }
    Ok(index::sample(rng, all_clients.len(), m)
        .into_iter()
        .map(|k| all_clients[k])
        .collect())
}

/// How the server picks the clients of a round.
#[derive(Debug, Clone)]
pub(crate) enum ClientSampler {
    Uniform { ids: Vec<usize> },
    /// Probability proportional to profile size. With one client per round
    /// and one triple per client this reproduces uniform sampling over all
    /// positive interactions.
    ProfileWeighted { cumulative: Vec<usize>, sizes: Vec<usize> },
}

impl ClientSampler {
    pub(crate) fn uniform(n_clients: usize) -> Self {
        ClientSampler::Uniform {
            ids: (0..n_clients).collect(),
        }
    }

    pub(crate) fn profile_weighted(sizes: Vec<usize>) -> Self {
        let mut acc = 0;
        let cumulative = sizes
            .iter()
            .map(|&s| {
                acc += s;
                acc
            })
            .collect();
        ClientSampler::ProfileWeighted { cumulative, sizes }
    }

    pub(crate) fn select<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Result<Vec<usize>> {
        match self {
            ClientSampler::Uniform { ids } => select_clients(rng, ids, m),
            ClientSampler::ProfileWeighted { cumulative, sizes } => {
                let n = sizes.len();
                if m == 0 || m > n {
                    return Err(Error::config(
                        "clients_per_round",
                        format!("{m} clients requested from a federation of {n}"),
                    ));
                }
                let total = *cumulative.last().unwrap_or(&0);
                if m == 1 {
                    let k = rng.random_range(0..total);
                    return Ok(vec![cumulative.partition_point(|&c| c <= k)]);
                }
                let picked = index::sample_weighted(rng, n, |u| sizes[u] as f64, m)
                    .map_err(|e| Error::config("clients_per_round", e.to_string()))?;
                Ok(picked.into_iter().collect())
            }
        }
    }
}

/// Draws a non-consumed item uniformly from the catalog.
fn sample_negative<R: Rng + ?Sized>(rng: &mut R, client: &ClientState, n_items: usize) -> usize {
    let consumed = client.consumed();
    if consumed.len() * 2 <= n_items {
        loop {
            let j = rng.random_range(0..n_items);
            if !client.has_consumed(j) {
                return j;
            }
        }
    }
    // dense profile: index directly into the complement
    let mut k = rng.random_range(0..n_items - consumed.len());
    for &c in consumed {
        if c <= k {
            k += 1;
        } else {
            break;
        }
    }
    k
}

/// `t` triples with the positive uniform over the client's consumed items
/// and the negative uniform over the rest of the catalog.
pub fn sample_local_triples<R: Rng + ?Sized>(rng: &mut R, client: &ClientState, n_items: usize, t: usize) -> Result<Vec<Triple>> {
    let consumed = client.consumed();
    if consumed.is_empty() {
        return Err(Error::Sampling {
            user: client.user,
            reason: "no consumed items".into(),
        });
    }
    if consumed.len() >= n_items {
        return Err(Error::Sampling {
            user: client.user,
            reason: "every catalog item is consumed".into(),
        });
    }
    Ok((0..t)
        .map(|_| {
            let pos = consumed[rng.random_range(0..consumed.len())];
            let neg = sample_negative(rng, client, n_items);
            Triple {
                user: client.user,
                pos,
                neg,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn select_all_is_permutation() {
        let ids: Vec<usize> = (0..30).collect();
        let mut got = select_clients(&mut stream(1, &[]), &ids, 30).unwrap();
        got.sort();
        assert_eq!(got, ids);
    }

    #[test]
    fn select_one_is_uniform() {
        let ids: Vec<usize> = (0..4).collect();
        let mut rng = stream(2, &[]);
        let mut hist = [0usize; 4];
        for _ in 0..8000 {
            let s = select_clients(&mut rng, &ids, 1).unwrap();
            assert_eq!(s.len(), 1);
            hist[s[0]] += 1;
        }
        // chi-square, 3 dof, critical value at 0.01 is 11.345
        let chi: f64 = hist.iter().map(|&h| (h as f64 - 2000.0).powi(2) / 2000.0).sum();
        assert!(chi < 11.345, "{hist:?}");
    }

    #[test]
    fn select_is_seeded_and_validated() {
        let ids: Vec<usize> = (0..10).collect();
        let a: Vec<_> = (0..5).map(|_| 0).scan(stream(3, &[]), |r, _| Some(select_clients(r, &ids, 3).unwrap())).collect();
        let b: Vec<_> = (0..5).map(|_| 0).scan(stream(3, &[]), |r, _| Some(select_clients(r, &ids, 3).unwrap())).collect();
        assert_eq!(a, b);
        for s in &a {
            let mut d = s.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 3);
        }
        assert!(select_clients(&mut stream(3, &[]), &ids, 11).is_err());
        assert!(select_clients(&mut stream(3, &[]), &ids, 0).is_err());
    }

    #[test]
    fn weighted_selection_tracks_profile_size() {
        let sampler = ClientSampler::profile_weighted(vec![1, 3]);
        let mut rng = stream(4, &[]);
        let ones = (0..40_000).filter(|_| sampler.select(&mut rng, 1).unwrap()[0] == 1).count();
        assert!((ones as f64 / 40_000.0 - 0.75).abs() < 0.01);
        let two = sampler.select(&mut rng, 2).unwrap();
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn forced_triple() {
        let c = ClientState::new(5, vec![0.0], vec![0]);
        let ts = sample_local_triples(&mut stream(5, &[]), &c, 2, 20).unwrap();
        assert!(ts.iter().all(|t| *t == Triple { user: 5, pos: 0, neg: 1 }));
    }

    #[test]
    fn positives_are_uniform() {
        let c = ClientState::new(0, vec![0.0], vec![3, 8]);
        let mut hist = [0usize; 2];
        for seed in 0..2000u64 {
            for t in sample_local_triples(&mut stream(seed, &[9]), &c, 20, 5).unwrap() {
                hist[usize::from(t.pos == 8)] += 1;
            }
        }
        // 10^4 draws, 1 dof, critical value at 0.01 is 6.635
        let e = 5000.0;
        let chi: f64 = hist.iter().map(|&h| (h as f64 - e).powi(2) / e).sum();
        assert!(chi < 6.635, "{hist:?}");
    }

    #[test]
    fn negatives_never_consumed() {
        let c = ClientState::new(0, vec![0.0], vec![0, 2, 3, 5, 7, 11]);
        let mut rng = stream(6, &[]);
        let ts = sample_local_triples(&mut rng, &c, 13, 1_000_000).unwrap();
        assert!(ts.iter().all(|t| !c.has_consumed(t.neg) && t.neg < 13));
        // dense profile path
        let dense = ClientState::new(1, vec![0.0], (0..12).filter(|&i| i != 4 && i != 9).collect());
        let ts = sample_local_triples(&mut rng, &dense, 12, 10_000).unwrap();
        assert!(ts.iter().all(|t| t.neg == 4 || t.neg == 9));
        let fours = ts.iter().filter(|t| t.neg == 4).count();
        assert!((fours as f64 / 10_000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn degenerate_clients() {
        let full = ClientState::new(0, vec![0.0], vec![0, 1]);
        assert!(sample_local_triples(&mut stream(0, &[]), &full, 2, 1).is_err());
        let empty = ClientState::new(0, vec![0.0], vec![]);
        assert!(sample_local_triples(&mut stream(0, &[]), &empty, 2, 1).is_err());
    }
}
