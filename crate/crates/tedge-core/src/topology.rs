//! Network layout generation (FAPs, UAVs, UEs) and synthetic M-Zipf workloads.
//!
//! FAP locations follow a Poisson point process over the service area, UE
//! locations follow a Gaussian mixture, and UAV locations are the k-means
//! centroids of the UE cloud. Content popularity follows the Mandelbrot-Zipf
//! law with skewness `gamma` and plateau `zeta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{RequestEvent, RequestLog};

/// Transmission range in meters per node class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TxRange {
    pub fap: f64,
    pub uav: f64,
}

/// Generated network layout. Serializes to the documented JSON form:
/// `{faps:[[x,y],..], uavs:[[x,y],..], ues:[[id,x,y],..], tx_range:{fap,uav}, area:[w,h]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub faps: Vec<(f64, f64)>,
    pub uavs: Vec<(f64, f64)>,
    pub ues: Vec<(u64, f64, f64)>,
    pub tx_range: TxRange,
    pub area: (f64, f64),
}

impl Topology {
    pub fn n_nodes(&self) -> usize {
        self.faps.len() + self.uavs.len()
    }

    pub fn ue_position(&self, user_id: u64) -> Option<(f64, f64)> {
        self.ues
            .iter()
            .find(|(id, _, _)| *id == user_id)
            .map(|&(_, x, y)| (x, y))
    }
}

/// Mandelbrot-Zipf popularity model: p_l ∝ (l + zeta)^(-gamma) for rank l.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZipfModel {
    pub n_contents: u32,
    pub gamma: f64,
    pub zeta: f64,
    pub pmf: Vec<f64>,
}

impl ZipfModel {
    pub fn new(n_contents: u32, gamma: f64, zeta: f64) -> Result<Self> {
        let pmf = mzipf_pmf(n_contents, gamma, zeta)?;
        Ok(ZipfModel {
            n_contents,
            gamma,
            zeta,
            pmf,
        })
    }
}

/// Normalized M-Zipf probability vector over ranks 1..=n_contents.
pub fn mzipf_pmf(n_contents: u32, gamma: f64, zeta: f64) -> Result<Vec<f64>> {
    if n_contents == 0 {
        return Err(Error::InvalidArgument("n_contents must be >= 1".into()));
    }
    if gamma < 0.0 || zeta < 0.0 || !gamma.is_finite() || !zeta.is_finite() {
        return Err(Error::InvalidArgument(
            "gamma and zeta must be finite and >= 0".into(),
        ));
    }
    let weights: Vec<f64> = (1..=n_contents as u64)
        .map(|l| (l as f64 + zeta).powf(-gamma))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// FAP placement: Poisson-distributed count, uniform scatter over the area.
pub fn sample_faps_ppp(intensity: f64, area: (f64, f64), seed: u64) -> Result<Vec<(f64, f64)>> {
    if intensity < 0.0 || !intensity.is_finite() {
        return Err(Error::InvalidArgument("intensity must be >= 0".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rate = intensity * area.0 * area.1;
    let count = if rate > 0.0 {
        Poisson::new(rate)
            .map_err(|e| Error::InvalidArgument(format!("bad PPP rate: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    Ok((0..count)
        .map(|_| {
            let x = rng.random::<f64>() * area.0;
            let y = rng.random::<f64>() * area.1;
            (x, y)
        })
        .collect())
}

/// One component of the UE location mixture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: (f64, f64),
    /// Row-major 2x2 covariance [[xx, xy], [xy, yy]].
    pub cov: [[f64; 2]; 2],
}

/// Lower-triangular Cholesky factor of a 2x2 covariance. Positive
/// semi-definite matrices are accepted so that degenerate (zero-variance)
/// components work.
fn cholesky2(cov: &[[f64; 2]; 2]) -> Result<[f64; 3]> {
    let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
    if (b - cov[1][0]).abs() > 1e-12 {
        return Err(Error::InvalidArgument("covariance not symmetric".into()));
    }
    if a < 0.0 {
        return Err(Error::InvalidArgument(
            "covariance not positive semi-definite".into(),
        ));
    }
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 {
        b / l11
    } else if b.abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "covariance not positive semi-definite".into(),
        ));
    } else {
        0.0
    };
    let rem = c - l21 * l21;
    if rem < -1e-9 {
        return Err(Error::InvalidArgument(
            "covariance not positive semi-definite".into(),
        ));
    }
    Ok([l11, l21, rem.max(0.0).sqrt()])
}

/// UE placement from a Gaussian mixture, rejection-sampled into the area.
pub fn sample_ues_gmm(
    components: &[GmmComponent],
    n_users: usize,
    area: (f64, f64),
    seed: u64,
) -> Result<Vec<(u64, f64, f64)>> {
    if components.is_empty() {
        return Err(Error::InvalidArgument("no mixture components".into()));
    }
    let weight_sum: f64 = components.iter().map(|c| c.weight).sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "mixture weights sum to {weight_sum}, expected 1"
        )));
    }
    let factors: Vec<[f64; 3]> = components
        .iter()
        .map(|c| cholesky2(&c.cov))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut ues = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let mut placed = false;
        for _ in 0..10_000 {
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            let mut idx = components.len() - 1;
            for (i, c) in components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let [l11, l21, l22] = factors[idx];
            let x = components[idx].mean.0 + l11 * z1;
            let y = components[idx].mean.1 + l21 * z1 + l22 * z2;
            if x >= 0.0 && x <= area.0 && y >= 0.0 && y <= area.1 {
                ues.push((user as u64 + 1, x, y));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidArgument(
                "mixture mass lies (almost) entirely outside the area".into(),
            ));
        }
    }
    Ok(ues)
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// UAV placement: Lloyd's algorithm with k-means++ initialization.
///
/// Iterates until the largest centroid move is below 1e-9 m or `max_iters`
/// is reached. Clusters that become empty keep their previous centroid.
pub fn place_uavs_kmeans(
    ue_positions: &[(f64, f64)],
    n_uavs: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_uavs == 0 {
        return Err(Error::InvalidArgument("n_uavs must be >= 1".into()));
    }
    if ue_positions.is_empty() {
        return Err(Error::EmptyInput("no UE positions to cluster".into()));
    }
    let mut distinct: Vec<(f64, f64)> = ue_positions.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if n_uavs > distinct.len() {
        return Err(Error::InvalidArgument(format!(
            "n_uavs {} exceeds {} distinct positions",
            n_uavs,
            distinct.len()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids = Vec::with_capacity(n_uavs);
    centroids.push(ue_positions[rng.random_range(0..ue_positions.len())]);
    while centroids.len() < n_uavs {
        let d2: Vec<f64> = ue_positions
            .iter()
            .map(|&p| {
                centroids
                    .iter()
                    .map(|&c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = ue_positions.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            ue_positions[pick]
        } else {
            // All points coincide with existing centroids; take any unused
            // distinct position (guaranteed to exist by the precondition).
            *distinct
                .iter()
                .find(|p| !centroids.contains(p))
                .expect("distinct position available")
        };
        centroids.push(next);
    }

    let mut assignment = vec![0usize; ue_positions.len()];
    for _ in 0..max_iters {
        for (i, &p) in ue_positions.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assignment[i] = best;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); n_uavs];
        for (i, &p) in ue_positions.iter().enumerate() {
            let s = &mut sums[assignment[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        let mut max_move: f64 = 0.0;
        for (j, &(sx, sy, n)) in sums.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let new = (sx / n as f64, sy / n as f64);
            max_move = max_move.max(sq_dist(new, centroids[j]).sqrt());
            centroids[j] = new;
        }
        if max_move < 1e-9 {
            break;
        }
    }
    Ok(centroids)
}

/// Popularity drift applied to a synthetic workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    None,
    /// Every `period` slots a fresh random permutation reassigns content ids
    /// to popularity ranks.
    RankShuffle {
        period: usize,
    },
}

/// Draws `requests_per_slot` i.i.d. M-Zipf requests per slot. Each synthetic
/// user issues at most one request per slot (user j makes the slot's j-th
/// request), timestamps are the slot indices and `slot_seconds` is 1.
pub fn generate_synthetic_trace(
    zipf: &ZipfModel,
    n_slots: usize,
    requests_per_slot: usize,
    drift: Drift,
    seed: u64,
) -> Result<RequestLog> {
    if n_slots == 0 {
        return Err(Error::InvalidArgument("n_slots must be >= 1".into()));
    }
    if let Drift::RankShuffle { period: 0 } = drift {
        return Err(Error::InvalidArgument("drift period must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = zipf.n_contents as usize;
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in &zipf.pmf {
        acc += p;
        cdf.push(acc);
    }

    // rank -> content id (1-based); identity until the first shuffle.
    let mut rank_to_content: Vec<u32> = (1..=zipf.n_contents).collect();

    let mut events = Vec::with_capacity(n_slots * requests_per_slot);
    for slot in 0..n_slots {
        if let Drift::RankShuffle { period } = drift {
            if slot > 0 && slot % period == 0 {
                use rand::seq::SliceRandom;
                rank_to_content.shuffle(&mut rng);
            }
        }
        for user in 0..requests_per_slot {
            let u = rng.random::<f64>();
            let rank = cdf.partition_point(|&c| c <= u).min(n - 1);
            events.push(RequestEvent {
                timestamp: slot as u64,
                user_id: user as u64 + 1,
                content_id: rank_to_content[rank],
                node_id: None,
            });
        }
    }
    Ok(RequestLog {
        events,
        catalog_size: zipf.n_contents,
        horizon: n_slots,
        slot_seconds: 1,
        base_ts: 0,
    })
}
