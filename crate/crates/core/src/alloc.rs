//! Many-to-one matching of BS-RBs to UEs under a per-UE RB quota.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::RateMatrix;

/// Largest `M^W` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocProblem {
    /// `rates[[w, m]]`: rate (Mbps) of BS-RB `w` serving UE `m`.
    pub rates: Array2<f64>,
    pub quota: usize,
    /// `(bs, rb)` of each row.
    pub resources: Vec<(usize, usize)>,
}

impl AllocProblem {
    pub fn new(rates: Array2<f64>, quota: usize) -> Result<Self> {
        let resources = (0..rates.nrows()).map(|w| (0, w)).collect();
        Self::with_resources(rates, quota, resources)
    }

    pub fn with_resources(rates: Array2<f64>, quota: usize, resources: Vec<(usize, usize)>) -> Result<Self> {
        let (w, m) = rates.dim();
        if m == 0 || w == 0 {
            return Err(Error::Empty("allocation problem"));
        }
        if resources.len() != w {
            return Err(Error::Data("resource labels do not match rate rows".into()));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::NonFinite("rates"));
        }
        if w < quota * m {
            return Err(Error::Infeasible { rbs: w, ues: m, quota });
        }
        Ok(Self { rates, quota, resources })
    }

    pub fn from_rate_matrix(rm: &RateMatrix, quota: usize) -> Result<Self> {
        Self::with_resources(rm.rates.clone(), quota, rm.resources.clone())
    }

    pub fn num_rbs(&self) -> usize {
        self.rates.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.rates.ncols()
    }

    fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    /// Improvement threshold: exchanges must gain more than this.
    fn eps(&self) -> f64 {
        1e-12 * self.max_rate()
    }
}

/// `owner[w]` is the UE served by BS-RB `w`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    pub owner: Vec<usize>,
}

impl Matching {
    /// RBs held by UE `m`.
    pub fn served(&self, m: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&w| self.owner[w] == m).collect()
    }

    pub fn counts(&self, num_ues: usize) -> Vec<usize> {
        let mut c = vec![0; num_ues];
        for &m in &self.owner {
            c[m] += 1;
        }
        c
    }

    pub fn is_feasible(&self, p: &AllocProblem) -> bool {
        self.owner.len() == p.num_rbs()
            && self.owner.iter().all(|&m| m < p.num_ues())
            && self.counts(p.num_ues()).iter().all(|&c| c >= p.quota)
    }

    pub fn sum_rate(&self, p: &AllocProblem) -> f64 {
        self.owner.iter().enumerate().map(|(w, &m)| p.rates[[w, m]]).sum()
    }

    pub fn per_user(&self, p: &AllocProblem) -> Vec<f64> {
        let mut t = vec![0.0; p.num_ues()];
        for (w, &m) in self.owner.iter().enumerate() {
            t[m] += p.rates[[w, m]];
        }
        t
    }

    /// Rate delivered on each RB.
    pub fn per_rb(&self, p: &AllocProblem) -> Vec<f64> {
        self.owner.iter().enumerate().map(|(w, &m)| p.rates[[w, m]]).collect()
    }
}

fn argmax_row(p: &AllocProblem, w: usize) -> usize {
    let row = p.rates.row(w);
    (1..row.len()).fold(0, |b, m| if row[m] > row[b] { m } else { b })
}

/// Proposal rounds: every UE short of its quota applies to its best
/// unallocated RBs; each RB keeps the highest-rate applicant. Leftover RBs go
/// to their highest-rate UE.
pub fn init_matching(p: &AllocProblem) -> Matching {
    let (nw, nm) = p.rates.dim();
    let prefs: Vec<Vec<usize>> = (0..nm)
        .map(|m| {
            let mut order: Vec<usize> = (0..nw).collect();
            order.sort_by(|&a, &b| p.rates[[b, m]].total_cmp(&p.rates[[a, m]]).then(a.cmp(&b)));
            order
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; nw];
    let mut held = vec![0usize; nm];
    loop {
        let mut proposals: Vec<Vec<usize>> = vec![Vec::new(); nw];
        let mut any = false;
        for m in 0..nm {
            let need = p.quota.saturating_sub(held[m]);
            for &w in prefs[m].iter().filter(|&&w| owner[w].is_none()).take(need) {
                proposals[w].push(m);
                any = true;
            }
        }
        if !any {
            break;
        }
        for (w, apps) in proposals.iter().enumerate() {
            // Applicants are in UE order, so the first maximum is the smallest index.
            if let Some(&best) = apps.iter().fold(None, |b: Option<&usize>, m| match b {
                Some(x) if p.rates[[w, *x]] >= p.rates[[w, *m]] => Some(x),
                _ => Some(m),
            }) {
                owner[w] = Some(best);
                held[best] += 1;
            }
        }
    }
    Matching {
        owner: owner
            .into_iter()
            .enumerate()
            .map(|(w, o)| o.unwrap_or_else(|| argmax_row(p, w)))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exchange {
    /// RBs `i` and `j` trade owners.
    Swap,
    /// RB `i` moves to the owner of `j`.
    MoveToJ,
    /// RB `j` moves to the owner of `i`.
    MoveToI,
}

/// Best strictly improving exchange for the pair `(i, j)`, with its gain.
fn best_exchange(p: &AllocProblem, owner: &[usize], counts: &[usize], i: usize, j: usize) -> Option<(Exchange, f64)> {
    let (mi, mj) = (owner[i], owner[j]);
    if mi == mj {
        return None;
    }
    let r = &p.rates;
    let t0 = r[[i, mi]] + r[[j, mj]];
    let t1 = r[[i, mj]] + r[[j, mi]];
    let t2 = if counts[mi] > p.quota { r[[i, mj]] + r[[j, mj]] } else { f64::NEG_INFINITY };
    let t3 = if counts[mj] > p.quota { r[[i, mi]] + r[[j, mi]] } else { f64::NEG_INFINITY };
    let mut best = (Exchange::Swap, t1);
    for cand in [(Exchange::MoveToJ, t2), (Exchange::MoveToI, t3)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    (best.1 > t0 + p.eps()).then_some((best.0, best.1 - t0))
}

fn apply(owner: &mut [usize], counts: &mut [usize], i: usize, j: usize, ex: Exchange) {
    let (mi, mj) = (owner[i], owner[j]);
    match ex {
        Exchange::Swap => owner.swap(i, j),
        Exchange::MoveToJ => {
            owner[i] = mj;
            counts[mi] -= 1;
            counts[mj] += 1;
        }
        Exchange::MoveToI => {
            owner[j] = mi;
            counts[mj] -= 1;
            counts[mi] += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MamaResult {
    pub matching: Matching,
    pub init_sum_rate: f64,
    /// Sum rate after each accepted exchange.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    /// Pairs `(i, j)` visited over all sweeps.
    pub pair_evaluations: usize,
}

impl MamaResult {
    pub fn accepted(&self) -> usize {
        self.trace.len()
    }
}

/// Greedy initialization followed by pairwise exchange sweeps until a full
/// sweep accepts nothing.
pub fn m3_mama(p: &AllocProblem) -> Result<MamaResult> {
    let init = init_matching(p);
    let init_sum_rate = init.sum_rate(p);
    let mut owner = init.owner;
    let mut counts = Matching { owner: owner.clone() }.counts(p.num_ues());
    let nw = p.num_rbs();
    let (mut sum, mut trace, mut sweeps, mut evals) = (init_sum_rate, Vec::new(), 0, 0);
    loop {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::Data("exchange phase did not converge".into()));
        }
        let mut changed = false;
        for i in 0..nw {
            for j in i + 1..nw {
                evals += 1;
                if let Some((ex, gain)) = best_exchange(p, &owner, &counts, i, j) {
                    apply(&mut owner, &mut counts, i, j, ex);
                    sum += gain;
                    trace.push(sum);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(MamaResult {
        matching: Matching { owner },
        init_sum_rate,
        trace,
        sweeps,
        pair_evaluations: evals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPair {
    /// RB whose reassignment both sides prefer.
    pub rb: usize,
    pub ue: usize,
    pub partner_rb: usize,
    pub exchange: Exchange,
}

/// `None` when no swap or move between two RBs raises the sum rate;
/// otherwise the first blocking exchange in `(i, j)` order.
pub fn blocking_pair(m: &Matching, p: &AllocProblem) -> Option<BlockingPair> {
    let counts = m.counts(p.num_ues());
    let nw = p.num_rbs();
    for i in 0..nw {
        for j in i + 1..nw {
            if let Some((ex, _)) = best_exchange(p, &m.owner, &counts, i, j) {
                let (rb, ue, partner_rb) = match ex {
                    Exchange::Swap | Exchange::MoveToJ => (i, m.owner[j], j),
                    Exchange::MoveToI => (j, m.owner[i], i),
                };
                return Some(BlockingPair {
                    rb,
                    ue,
                    partner_rb,
                    exchange: ex,
                });
            }
        }
    }
    None
}

pub fn is_pairwise_stable(m: &Matching, p: &AllocProblem) -> bool {
    blocking_pair(m, p).is_none()
}

/// RB `w` goes to UE `w mod M`.
pub fn round_robin(p: &AllocProblem) -> Matching {
    Matching {
        owner: (0..p.num_rbs()).map(|w| w % p.num_ues()).collect(),
    }
}

/// Per-RB argmax, then quota repair: each short UE (lowest index first) takes
/// the RB from a UE above quota that costs the least rate.
pub fn best_cqi(p: &AllocProblem) -> Matching {
    let mut owner: Vec<usize> = (0..p.num_rbs()).map(|w| argmax_row(p, w)).collect();
    let mut counts = Matching { owner: owner.clone() }.counts(p.num_ues());
    while let Some(m) = (0..p.num_ues()).find(|&m| counts[m] < p.quota) {
        let w = (0..p.num_rbs())
            .filter(|&w| counts[owner[w]] > p.quota)
            .min_by(|&a, &b| {
                let loss = |w: usize| p.rates[[w, owner[w]]] - p.rates[[w, m]];
                loss(a).total_cmp(&loss(b)).then(a.cmp(&b))
            })
            .expect("feasible problem has a donor");
        counts[owner[w]] -= 1;
        counts[m] += 1;
        owner[w] = m;
    }
    Matching { owner }
}

/// Exact optimum by enumeration; the first assignment in lexicographic order wins ties.
pub fn brute_force_optimal(p: &AllocProblem) -> Result<Matching> {
    let (nw, nm) = p.rates.dim();
    let size = (nm as f64).powi(nw as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(size));
    }
    let mut owner = vec![0usize; nw];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let m = Matching { owner: owner.clone() };
        if m.counts(nm).iter().all(|&c| c >= p.quota) {
            let s = m.sum_rate(p);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, owner.clone()));
            }
        }
        // Odometer with the last RB as the fastest digit.
        let mut k = nw;
        loop {
            if k == 0 {
                let (_, owner) = best.ok_or(Error::Infeasible {
                    rbs: nw,
                    ues: nm,
                    quota: p.quota,
                })?;
                return Ok(Matching { owner });
            }
            k -= 1;
            owner[k] += 1;
            if owner[k] < nm {
                break;
            }
            owner[k] = 0;
        }
    }
}

/// `(sum x)^2 / (n sum x^2)`; an all-zero vector counts as perfectly fair.
pub fn jain_index(throughputs: &[f64]) -> Result<f64> {
    let Some(&first) = throughputs.first() else {
        return Err(Error::Empty("throughput list"));
    };
    // Equal shares are exactly fair; the formula would round to 1 - ulp.
    if throughputs.iter().all(|&x| x == first) {
        return Ok(1.0);
    }
    let s: f64 = throughputs.iter().sum();
    let s2: f64 = throughputs.iter().map(|x| x * x).sum();
    Ok(s * s / (throughputs.len() as f64 * s2))
}

/// Bits/s/Hz from Mbps over MHz.
pub fn spectral_efficiency(sum_rate_mbps: f64, bandwidth_mhz: f64) -> Result<f64> {
    if !(bandwidth_mhz > 0.0) {
        return Err(Error::Config("bandwidth must be positive".into()));
    }
    Ok(sum_rate_mbps / bandwidth_mhz)
}

/// Sorted per-RB rates with cumulative fractions `1/W, 2/W, ..., 1`.
pub fn per_rb_cdf(m: &Matching, p: &AllocProblem) -> Vec<(f64, f64)> {
    let mut r = m.per_rb(p);
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    r.into_iter().enumerate().map(|(i, v)| (v, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jain_values() {
        assert_eq!(jain_index(&[1.0, 2.0, 3.0]).unwrap(), 6.0 / 7.0);
        assert_eq!(jain_index(&[4.0; 5]).unwrap(), 1.0);
        assert_eq!(jain_index(&[0.0, 0.0, 3.0, 0.0]).unwrap(), 0.25);
        assert!(jain_index(&[]).is_err());
    }

    #[test]
    fn init_hand_trace() {
        let p = AllocProblem::new(array![[2.0, 1.0], [1.0, 2.0]], 1).unwrap();
        assert_eq!(init_matching(&p).owner, vec![0, 1]);
        let single = AllocProblem::new(array![[1.0], [0.0], [3.0]], 1).unwrap();
        assert_eq!(init_matching(&single).owner, vec![0, 0, 0]);
    }

    #[test]
    fn infeasible_rejected() {
        assert!(matches!(
            AllocProblem::new(array![[1.0, 1.0]], 1),
            Err(Error::Infeasible { rbs: 1, ues: 2, quota: 1 })
        ));
        assert!(AllocProblem::new(array![[f64::NAN]], 0).is_err());
    }

    #[test]
    fn spectral_efficiency_is_rate_over_bandwidth() {
        assert_eq!(spectral_efficiency(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(spectral_efficiency(0.0, 3.0).unwrap(), 0.0);
        assert!(spectral_efficiency(1.0, 0.0).is_err());
    }
}
