//! The learned auction mechanism: an allocation network with a per-item
//! softmax over bidders plus a dummy slot, and a payment network producing
//! sigmoidal fractional payments. Feasibility (per-item mass <= 1) and IR
//! (payment <= allocated truthful value) hold by construction.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::diffnet::{DenseNet, ForwardCache, NetGradient};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::valuations::{permute_profile, PermPair, ValuationBatch, ValuationProfile};

/// Allocation, payments, and truthful utilities for one bid profile.
#[derive(Debug, Clone)]
pub struct AuctionOutcome {
    /// `n x m` allocation probabilities.
    pub allocation: Matrix,
    /// Per-bidder payments, nonnegative.
    pub payments: Vec<f64>,
    /// Per-bidder utilities evaluated against the submitted bids.
    pub utilities: Vec<f64>,
}

/// Bidder utility: allocation row dotted with the valuation row, minus payment.
pub fn utility(allocation_row: &[f64], payment: f64, valuation_row: &[f64]) -> Result<f64> {
    if allocation_row.len() != valuation_row.len() {
        return Err(Error::shape(
            format!("valuation row of length {}", allocation_row.len()),
            format!("{}", valuation_row.len()),
        ));
    }
    Ok(dot(allocation_row, valuation_row) - payment)
}

/// An auction mechanism: bids in, (allocation, payments) out.
///
/// `utility_and_own_bid_grad` returns bidder `i`'s utility u_i(v_i, b) at bid
/// profile `b` together with its gradient with respect to `b`'s row `i`. The
/// default implementation uses central finite differences; differentiable
/// mechanisms override it with exact backprop.
pub trait Mechanism: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;

    fn run(&self, bids: &ValuationProfile) -> Result<AuctionOutcome>;

    fn utility_and_own_bid_grad(
        &self,
        valuation_row: &[f64],
        bids: &ValuationProfile,
        bidder: usize,
    ) -> Result<(f64, Vec<f64>)> {
        fd_utility_and_grad(self, valuation_row, bids, bidder)
    }
}

impl<M: Mechanism + ?Sized> Mechanism for &M {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn m(&self) -> usize {
        (**self).m()
    }
    fn run(&self, bids: &ValuationProfile) -> Result<AuctionOutcome> {
        (**self).run(bids)
    }
    fn utility_and_own_bid_grad(
        &self,
        valuation_row: &[f64],
        bids: &ValuationProfile,
        bidder: usize,
    ) -> Result<(f64, Vec<f64>)> {
        (**self).utility_and_own_bid_grad(valuation_row, bids, bidder)
    }
}

/// u_i(v_i, b): bidder `i`'s utility under bid profile `b` with true
/// valuation row `v_i`.
pub fn misreport_utility<M: Mechanism + ?Sized>(
    mech: &M,
    valuation_row: &[f64],
    bids: &ValuationProfile,
    bidder: usize,
) -> Result<f64> {
    let outcome = mech.run(bids)?;
    utility(outcome.allocation.row(bidder), outcome.payments[bidder], valuation_row)
}

/// Central finite-difference utility gradient, step 1e-6.
pub fn fd_utility_and_grad<M: Mechanism + ?Sized>(
    mech: &M,
    valuation_row: &[f64],
    bids: &ValuationProfile,
    bidder: usize,
) -> Result<(f64, Vec<f64>)> {
    let value = misreport_utility(mech, valuation_row, bids, bidder)?;
    let h = 1e-6;
    let m = mech.m();
    let mut grad = vec![0.0; m];
    let mut row = bids.values.row(bidder).to_vec();
    for j in 0..m {
        let orig = row[j];
        row[j] = orig + h;
        let up = misreport_utility(mech, valuation_row, &bids.with_bid_row(bidder, &row)?, bidder)?;
        row[j] = orig - h;
        let down = misreport_utility(mech, valuation_row, &bids.with_bid_row(bidder, &row)?, bidder)?;
        row[j] = orig;
        grad[j] = (up - down) / (2.0 * h);
    }
    Ok((value, grad))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Allocation and payment networks plus shape metadata.
///
/// The allocation net maps the flattened bid matrix (plus flattened contexts
/// when configured) to `(n+1) x m` logits: per item, `n` bidder slots and one
/// dummy slot representing the item staying with the auctioneer. The payment
/// net maps the same input to `n` fractional-payment logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretNet {
    pub alloc_net: DenseNet,
    pub pay_net: DenseNet,
    pub n: usize,
    pub m: usize,
    /// Per-bidder / per-item context widths appended to the network input.
    pub context_dims: Option<(usize, usize)>,
}

/// Cached intermediate state of one mechanism forward pass.
#[derive(Debug, Clone)]
pub struct MechCache {
    input: Vec<f64>,
    alloc_cache: ForwardCache,
    pay_cache: ForwardCache,
    /// `(n+1) x m` softmax probabilities, dummy in the last row.
    probs: Matrix,
    /// Sigmoid fractional payments, length n.
    frac: Vec<f64>,
    /// Per-bidder allocated bid value sum_j g_ij * b_ij.
    alloc_value: Vec<f64>,
    /// The bid matrix the pass was evaluated on.
    bids: Matrix,
}

/// Weight (and optionally input) gradients of one mechanism pass.
#[derive(Debug)]
pub struct MechGrads {
    pub alloc: NetGradient,
    pub pay: NetGradient,
    pub input: Option<Vec<f64>>,
}

impl RegretNet {
    /// Fresh Xavier-initialized mechanism without contexts.
    pub fn new<R: Rng + ?Sized>(n: usize, m: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Self::with_contexts(n, m, None, hidden, rng)
    }

    pub fn with_contexts<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        context_dims: Option<(usize, usize)>,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("need n, m >= 1".into()));
        }
        let input_dim = n * m + context_dims.map_or(0, |(dx, dy)| n * dx + m * dy);
        let mut alloc_dims = vec![input_dim];
        alloc_dims.extend_from_slice(hidden);
        alloc_dims.push((n + 1) * m);
        let mut pay_dims = vec![input_dim];
        pay_dims.extend_from_slice(hidden);
        pay_dims.push(n);
        Ok(RegretNet {
            alloc_net: DenseNet::new(&alloc_dims, rng)?,
            pay_net: DenseNet::new(&pay_dims, rng)?,
            n,
            m,
            context_dims,
        })
    }

    /// All-zero networks: uniform softmax (1/(n+1) per slot) and fractional
    /// payment sigmoid(0) = 0.5, handy for closed-form checks.
    pub fn zeros(n: usize, m: usize, hidden: &[usize]) -> Result<Self> {
        let mut alloc_dims = vec![n * m];
        alloc_dims.extend_from_slice(hidden);
        alloc_dims.push((n + 1) * m);
        let mut pay_dims = vec![n * m];
        pay_dims.extend_from_slice(hidden);
        pay_dims.push(n);
        Ok(RegretNet {
            alloc_net: DenseNet::zeros(&alloc_dims)?,
            pay_net: DenseNet::zeros(&pay_dims)?,
            n,
            m,
            context_dims: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.alloc_net.input_dim()
    }

    fn input_vec(&self, profile: &ValuationProfile) -> Result<Vec<f64>> {
        if profile.n() != self.n || profile.m() != self.m {
            return Err(Error::shape(
                format!("{}x{} bids", self.n, self.m),
                format!("{}x{}", profile.n(), profile.m()),
            ));
        }
        let mut x = profile.values.data().to_vec();
        if let Some((dx, dy)) = self.context_dims {
            let bc = profile
                .bidder_contexts
                .as_ref()
                .filter(|c| c.rows() == self.n && c.cols() == dx)
                .ok_or_else(|| Error::shape(format!("{}x{dx} bidder contexts", self.n), "missing or mis-shaped".into()))?;
            let ic = profile
                .item_contexts
                .as_ref()
                .filter(|c| c.rows() == self.m && c.cols() == dy)
                .ok_or_else(|| Error::shape(format!("{}x{dy} item contexts", self.m), "missing or mis-shaped".into()))?;
            x.extend_from_slice(bc.data());
            x.extend_from_slice(ic.data());
        }
        Ok(x)
    }

    /// Forward pass recording everything backprop needs.
    pub fn forward_cached(&self, profile: &ValuationProfile) -> Result<(AuctionOutcome, MechCache)> {
        let (n, m) = (self.n, self.m);
        let x = self.input_vec(profile)?;
        let alloc_cache = self.alloc_net.forward_cached(&x)?;
        let pay_cache = self.pay_net.forward_cached(&x)?;
        let logits = alloc_cache.output();
        let mut probs = Matrix::zeros(n + 1, m);
        for j in 0..m {
            let mut max_logit = f64::NEG_INFINITY;
            for k in 0..=n {
                max_logit = max_logit.max(logits[k * m + j]);
            }
            let mut denom = 0.0;
            for k in 0..=n {
                let e = (logits[k * m + j] - max_logit).exp();
                probs.set(k, j, e);
                denom += e;
            }
            for k in 0..=n {
                probs.set(k, j, probs.get(k, j) / denom);
            }
        }
        if !probs.is_finite() {
            return Err(Error::NonFinite("allocation network output".into()));
        }
        let mut allocation = Matrix::zeros(n, m);
        for i in 0..n {
            allocation.row_mut(i).copy_from_slice(probs.row(i));
        }
        let pay_logits = pay_cache.output();
        let frac: Vec<f64> = pay_logits.iter().map(|&z| sigmoid(z)).collect();
        if frac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payment network output".into()));
        }
        let alloc_value: Vec<f64> = (0..n)
            .map(|i| dot(allocation.row(i), profile.values.row(i)))
            .collect();
        let payments: Vec<f64> = (0..n).map(|i| frac[i] * alloc_value[i]).collect();
        let utilities: Vec<f64> = (0..n).map(|i| alloc_value[i] - payments[i]).collect();
        let outcome = AuctionOutcome {
            allocation,
            payments,
            utilities,
        };
        let cache = MechCache {
            input: x,
            alloc_cache,
            pay_cache,
            probs,
            frac,
            alloc_value,
            bids: profile.values.clone(),
        };
        Ok((outcome, cache))
    }

    /// Backprop from cotangents on the allocation matrix and payment vector
    /// through the softmax-with-dummy and sigmoidal payment heads.
    pub fn backward_from_outcome(
        &self,
        cache: &MechCache,
        alloc_cot: &Matrix,
        pay_cot: &[f64],
        want_params: bool,
        want_input: bool,
    ) -> Result<MechGrads> {
        let (n, m) = (self.n, self.m);
        // Payment p_i = frac_i * sum_j g_ij b_ij: split its cotangent into the
        // fractional-payment path, an extra allocation path, and the direct
        // dependence on the bids.
        let mut frac_cot = vec![0.0; n];
        let mut full_alloc_cot = alloc_cot.clone();
        let mut direct_input = vec![0.0; cache.input.len()];
        for i in 0..n {
            let cp = pay_cot[i];
            if cp != 0.0 {
                frac_cot[i] = cp * cache.alloc_value[i];
                for j in 0..m {
                    full_alloc_cot.add_at(i, j, cp * cache.frac[i] * cache.bids.get(i, j));
                    direct_input[i * m + j] += cp * cache.frac[i] * cache.probs.get(i, j);
                }
            }
        }
        // Softmax backward per item column, dummy slot carries no cotangent.
        let mut alloc_logit_cot = vec![0.0; (n + 1) * m];
        for j in 0..m {
            let mut inner = 0.0;
            for k in 0..n {
                inner += full_alloc_cot.get(k, j) * cache.probs.get(k, j);
            }
            for k in 0..=n {
                let c = if k < n { full_alloc_cot.get(k, j) } else { 0.0 };
                alloc_logit_cot[k * m + j] = cache.probs.get(k, j) * (c - inner);
            }
        }
        // Sigmoid backward.
        let pay_logit_cot: Vec<f64> = (0..n).map(|i| frac_cot[i] * cache.frac[i] * (1.0 - cache.frac[i])).collect();

        if want_params {
            let alloc = self.alloc_net.backward(&cache.alloc_cache, &alloc_logit_cot, want_input)?;
            let pay = self.pay_net.backward(&cache.pay_cache, &pay_logit_cot, want_input)?;
            let input = if want_input {
                let mut total = direct_input;
                for (t, g) in total.iter_mut().zip(alloc.input.as_ref().unwrap()) {
                    *t += g;
                }
                for (t, g) in total.iter_mut().zip(pay.input.as_ref().unwrap()) {
                    *t += g;
                }
                Some(total)
            } else {
                None
            };
            Ok(MechGrads { alloc, pay, input })
        } else {
            let ga = self.alloc_net.input_gradient(&cache.alloc_cache, &alloc_logit_cot);
            let gp = self.pay_net.input_gradient(&cache.pay_cache, &pay_logit_cot);
            let mut total = direct_input;
            for (t, g) in total.iter_mut().zip(&ga) {
                *t += g;
            }
            for (t, g) in total.iter_mut().zip(&gp) {
                *t += g;
            }
            Ok(MechGrads {
                alloc: NetGradient {
                    weights: Vec::new(),
                    biases: Vec::new(),
                    input: None,
                },
                pay: NetGradient {
                    weights: Vec::new(),
                    biases: Vec::new(),
                    input: None,
                },
                input: Some(total),
            })
        }
    }

    /// Checkpoint: `mechanism 1` header, shape and projection tag lines, then
    /// the allocation and payment network blocks.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W, projection_tag: &str) -> Result<()> {
        writeln!(out, "mechanism 1")?;
        writeln!(out, "n {}", self.n)?;
        writeln!(out, "m {}", self.m)?;
        let (dx, dy) = self.context_dims.unwrap_or((0, 0));
        writeln!(out, "contexts {dx} {dy}")?;
        writeln!(out, "projection {projection_tag}")?;
        self.alloc_net.write_checkpoint(out)?;
        self.pay_net.write_checkpoint(out)?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: &mut R) -> Result<(Self, String)> {
        let mut header = String::new();
        input.read_line(&mut header).map_err(Error::Io)?;
        if header.trim() != "mechanism 1" {
            return Err(Error::Parse(format!("bad mechanism header: {header:?}")));
        }
        let mut read_kv = |key: &str| -> Result<String> {
            let mut line = String::new();
            input.read_line(&mut line).map_err(Error::Io)?;
            let rest = line
                .trim()
                .strip_prefix(key)
                .ok_or_else(|| Error::Parse(format!("expected '{key} ...', got {line:?}")))?;
            Ok(rest.trim().to_string())
        };
        let n: usize = read_kv("n")?.parse().map_err(|_| Error::Parse("bad n".into()))?;
        let m: usize = read_kv("m")?.parse().map_err(|_| Error::Parse("bad m".into()))?;
        let ctx_line = read_kv("contexts")?;
        let ctx: Vec<usize> = ctx_line
            .split_whitespace()
            .map(|p| p.parse().map_err(|_| Error::Parse("bad context dims".into())))
            .collect::<Result<_>>()?;
        let [dx, dy] = ctx[..] else {
            return Err(Error::Parse("expected two context dims".into()));
        };
        let projection = read_kv("projection")?;
        let alloc_net = DenseNet::read_checkpoint(input)?;
        let pay_net = DenseNet::read_checkpoint(input)?;
        let net = RegretNet {
            alloc_net,
            pay_net,
            n,
            m,
            context_dims: if dx == 0 && dy == 0 { None } else { Some((dx, dy)) },
        };
        if net.alloc_net.output_dim() != (n + 1) * m || net.pay_net.output_dim() != n {
            return Err(Error::shape(
                format!("alloc out {}x{}, pay out {}", n + 1, m, n),
                "checkpoint network shapes".into(),
            ));
        }
        Ok((net, projection))
    }
}

impl Mechanism for RegretNet {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn run(&self, bids: &ValuationProfile) -> Result<AuctionOutcome> {
        Ok(self.forward_cached(bids)?.0)
    }

    fn utility_and_own_bid_grad(
        &self,
        valuation_row: &[f64],
        bids: &ValuationProfile,
        bidder: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let (outcome, cache) = self.forward_cached(bids)?;
        let value = utility(outcome.allocation.row(bidder), outcome.payments[bidder], valuation_row)?;
        let mut alloc_cot = Matrix::zeros(self.n, self.m);
        alloc_cot.row_mut(bidder).copy_from_slice(valuation_row);
        let mut pay_cot = vec![0.0; self.n];
        pay_cot[bidder] = -1.0;
        let grads = self.backward_from_outcome(&cache, &alloc_cot, &pay_cot, false, true)?;
        let full = grads.input.unwrap();
        Ok((value, full[bidder * self.m..(bidder + 1) * self.m].to_vec()))
    }
}

/// Forward pass averaged over an orbit of permutation pairs; the identity-only
/// orbit reduces to the plain pass. Gradients flow through every orbit term.
pub fn orbit_forward(
    net: &RegretNet,
    profile: &ValuationProfile,
    pairs: &[PermPair],
) -> Result<(AuctionOutcome, Vec<MechCache>)> {
    let (n, m) = (net.n, net.m);
    let k = pairs.len() as f64;
    let mut allocation = Matrix::zeros(n, m);
    let mut payments = vec![0.0; n];
    let mut caches = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let permuted = permute_profile(profile, pair);
        let (outcome, cache) = net.forward_cached(&permuted)?;
        for a in 0..n {
            let i = pair.bidder.map(a);
            payments[i] += outcome.payments[a] / k;
            for d in 0..m {
                allocation.add_at(i, pair.item.map(d), outcome.allocation.get(a, d) / k);
            }
        }
        caches.push(cache);
    }
    let utilities: Vec<f64> = (0..n)
        .map(|i| dot(allocation.row(i), profile.values.row(i)) - payments[i])
        .collect();
    Ok((
        AuctionOutcome {
            allocation,
            payments,
            utilities,
        },
        caches,
    ))
}

/// Accumulates parameter gradients of an orbit-averaged pass from cotangents
/// on the averaged allocation and payments.
pub fn orbit_backward_params(
    net: &RegretNet,
    pairs: &[PermPair],
    caches: &[MechCache],
    alloc_cot: &Matrix,
    pay_cot: &[f64],
    alloc_acc: &mut NetGradient,
    pay_acc: &mut NetGradient,
) -> Result<()> {
    let (n, m) = (net.n, net.m);
    let k = pairs.len() as f64;
    for (pair, cache) in pairs.iter().zip(caches) {
        let mut term_alloc_cot = Matrix::zeros(n, m);
        let mut term_pay_cot = vec![0.0; n];
        for a in 0..n {
            let i = pair.bidder.map(a);
            term_pay_cot[a] = pay_cot[i] / k;
            for d in 0..m {
                term_alloc_cot.set(a, d, alloc_cot.get(i, pair.item.map(d)) / k);
            }
        }
        let grads = net.backward_from_outcome(cache, &term_alloc_cot, &term_pay_cot, true, false)?;
        alloc_acc.add_assign(&grads.alloc);
        pay_acc.add_assign(&grads.pay);
    }
    Ok(())
}

/// Gradient of an orbit-averaged pass with respect to the original bid
/// matrix, from cotangents on the averaged allocation and payments.
pub fn orbit_backward_input(
    net: &RegretNet,
    pairs: &[PermPair],
    caches: &[MechCache],
    alloc_cot: &Matrix,
    pay_cot: &[f64],
) -> Result<Matrix> {
    let (n, m) = (net.n, net.m);
    let k = pairs.len() as f64;
    let mut grad = Matrix::zeros(n, m);
    for (pair, cache) in pairs.iter().zip(caches) {
        let mut term_alloc_cot = Matrix::zeros(n, m);
        let mut term_pay_cot = vec![0.0; n];
        for a in 0..n {
            let i = pair.bidder.map(a);
            term_pay_cot[a] = pay_cot[i] / k;
            for d in 0..m {
                term_alloc_cot.set(a, d, alloc_cot.get(i, pair.item.map(d)) / k);
            }
        }
        let grads = net.backward_from_outcome(cache, &term_alloc_cot, &term_pay_cot, false, true)?;
        let term_input = grads.input.unwrap();
        for a in 0..n {
            let i = pair.bidder.map(a);
            for d in 0..m {
                grad.add_at(i, pair.item.map(d), term_input[a * m + d]);
            }
        }
    }
    Ok(grad)
}

/// Worst feasibility excess: max over items of (column mass - 1), floored at 0.
pub fn outcome_feasibility_excess(outcome: &AuctionOutcome) -> f64 {
    (0..outcome.allocation.cols())
        .map(|j| outcome.allocation.col_sum(j) - 1.0)
        .fold(0.0, f64::max)
}

/// Worst IR violation under truthful bids: max over bidders of
/// (payment - allocated bid value), floored at 0.
pub fn outcome_ir_violation(outcome: &AuctionOutcome, bids: &Matrix) -> f64 {
    (0..outcome.payments.len())
        .map(|i| outcome.payments[i] - dot(outcome.allocation.row(i), bids.row(i)))
        .fold(0.0, f64::max)
}

/// Feasibility / IR summary over a batch.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub max_column_excess: f64,
    pub max_ir_violation: f64,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn pass(&self) -> bool {
        self.max_column_excess <= self.tol && self.max_ir_violation <= self.tol
    }
}

/// Runs the mechanism over a batch and reports the worst per-item mass excess
/// and IR violation.
pub fn check_feasibility_ir<M: Mechanism + ?Sized>(
    mech: &M,
    batch: &ValuationBatch,
    tol: f64,
) -> Result<FeasibilityReport> {
    let mut max_excess = 0.0f64;
    let mut max_ir = 0.0f64;
    for profile in &batch.profiles {
        let outcome = mech.run(profile)?;
        max_excess = max_excess.max(outcome_feasibility_excess(&outcome));
        max_ir = max_ir.max(outcome_ir_violation(&outcome, &profile.values));
    }
    Ok(FeasibilityReport {
        max_column_excess: max_excess,
        max_ir_violation: max_ir,
        tol,
    })
}
