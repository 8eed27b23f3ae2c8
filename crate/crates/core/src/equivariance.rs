//! Orbit-averaging projections onto permutation-equivariant mechanism
//! spaces: bidder averaging, item averaging, their aggregate, and averaging
//! over subgroups that move only chosen index subsets.
//!
//! Projections are evaluation-time wrappers (n!·m! base passes), not weight
//! surgery, so gradients flow through every orbit term during training.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::mechanism::{AuctionOutcome, Mechanism};
use crate::valuations::{
    enumerate_permutations, enumerate_subset_permutations, permute_profile, PermPair, Permutation,
    ValuationProfile,
};

/// Default cap on orbit size (group elements) for a projection wrapper.
pub const DEFAULT_GROUP_BUDGET: usize = 5040;

/// Which orbit averaging to apply and, in subgroup mode, over which indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProjectionSpec {
    /// Average over all bidder permutations.
    Bidder,
    /// Average over all item permutations.
    Item,
    /// Average over all bidder x item permutation pairs.
    Aggregated,
    /// Average over permutations that move only the given index subsets.
    Subgroup {
        bidder_subset: Vec<usize>,
        item_subset: Vec<usize>,
    },
}

impl ProjectionSpec {
    /// The orbit (list of permutation pairs, canonical lexicographic
    /// bidder-major order) this spec induces on an `n x m` mechanism.
    pub fn orbit(&self, n: usize, m: usize) -> Result<Vec<PermPair>> {
        self.orbit_with_budget(n, m, DEFAULT_GROUP_BUDGET)
    }

    pub fn orbit_with_budget(&self, n: usize, m: usize, budget: usize) -> Result<Vec<PermPair>> {
        let (bidder_perms, item_perms) = match self {
            ProjectionSpec::Bidder => (enumerate_permutations(n)?, vec![Permutation::identity(m)]),
            ProjectionSpec::Item => (vec![Permutation::identity(n)], enumerate_permutations(m)?),
            ProjectionSpec::Aggregated => (enumerate_permutations(n)?, enumerate_permutations(m)?),
            ProjectionSpec::Subgroup {
                bidder_subset,
                item_subset,
            } => {
                if bidder_subset.is_empty() && item_subset.is_empty() {
                    return Err(Error::InvalidParameter(
                        "subgroup projection needs at least one nonempty subset".into(),
                    ));
                }
                (
                    enumerate_subset_permutations(n, bidder_subset)?,
                    enumerate_subset_permutations(m, item_subset)?,
                )
            }
        };
        let size = bidder_perms.len() * item_perms.len();
        if size > budget {
            return Err(Error::BudgetExceeded {
                needed: size,
                budget,
            });
        }
        let mut pairs = Vec::with_capacity(size);
        for bp in &bidder_perms {
            for ip in &item_perms {
                pairs.push(PermPair {
                    bidder: bp.clone(),
                    item: ip.clone(),
                });
            }
        }
        Ok(pairs)
    }

    /// Config-file tag: "bidder", "item", "aggregated", or
    /// "subgroup;bidders=0,1;items=2,3".
    pub fn to_tag(&self) -> String {
        match self {
            ProjectionSpec::Bidder => "bidder".into(),
            ProjectionSpec::Item => "item".into(),
            ProjectionSpec::Aggregated => "aggregated".into(),
            ProjectionSpec::Subgroup {
                bidder_subset,
                item_subset,
            } => {
                let join = |v: &[usize]| {
                    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
                };
                format!("subgroup;bidders={};items={}", join(bidder_subset), join(item_subset))
            }
        }
    }

    /// Parses [`ProjectionSpec::to_tag`] output; "none" maps to `Ok(None)`.
    pub fn from_tag(tag: &str) -> Result<Option<ProjectionSpec>> {
        let tag = tag.trim();
        match tag {
            "none" | "" => Ok(None),
            "bidder" => Ok(Some(ProjectionSpec::Bidder)),
            "item" => Ok(Some(ProjectionSpec::Item)),
            "aggregated" => Ok(Some(ProjectionSpec::Aggregated)),
            _ => {
                let mut parts = tag.split(';');
                if parts.next() != Some("subgroup") {
                    return Err(Error::Parse(format!("unknown projection tag {tag:?}")));
                }
                let mut bidder_subset = Vec::new();
                let mut item_subset = Vec::new();
                for part in parts {
                    let parse_list = |s: &str| -> Result<Vec<usize>> {
                        if s.is_empty() {
                            return Ok(Vec::new());
                        }
                        s.split(',')
                            .map(|p| p.trim().parse().map_err(|_| Error::Parse(format!("bad index {p:?}"))))
                            .collect()
                    };
                    if let Some(rest) = part.strip_prefix("bidders=") {
                        bidder_subset = parse_list(rest)?;
                    } else if let Some(rest) = part.strip_prefix("items=") {
                        item_subset = parse_list(rest)?;
                    } else {
                        return Err(Error::Parse(format!("bad subgroup field {part:?}")));
                    }
                }
                Ok(Some(ProjectionSpec::Subgroup {
                    bidder_subset,
                    item_subset,
                }))
            }
        }
    }
}

/// A mechanism wrapped in an orbit-averaging projection. Outputs at `v` are
/// the group average of inversely permuted base outputs at permuted inputs;
/// utilities are recomputed from the projected allocation and payments.
#[derive(Debug, Clone)]
pub struct Projected<M> {
    base: M,
    spec: ProjectionSpec,
    pairs: Vec<PermPair>,
}

impl<M: Mechanism> Projected<M> {
    pub fn new(base: M, spec: ProjectionSpec) -> Result<Self> {
        Self::with_budget(base, spec, DEFAULT_GROUP_BUDGET)
    }

    pub fn with_budget(base: M, spec: ProjectionSpec, budget: usize) -> Result<Self> {
        let pairs = spec.orbit_with_budget(base.n(), base.m(), budget)?;
        Ok(Projected { base, spec, pairs })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn orbit_size(&self) -> usize {
        self.pairs.len()
    }

    /// Equivariance defect computed from a single sweep of base evaluations
    /// over the input's orbit. Exactly equal to [`equivariance_defect`] on
    /// this wrapper: both average the same base outputs in the same canonical
    /// order, but this path reuses each base evaluation across group elements
    /// instead of recomputing the orbit per element.
    pub fn equivariance_defect_fast(&self, bids: &ValuationProfile) -> Result<f64> {
        let (n, m) = (self.base.n(), self.base.m());
        let k = self.pairs.len();
        // Index the group so composed pairs can be looked up.
        let index: HashMap<(Vec<usize>, Vec<usize>), usize> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(idx, p)| ((p.bidder.images().to_vec(), p.item.images().to_vec()), idx))
            .collect();
        // Base outcomes over the whole orbit of `bids`.
        let base_outcomes: Vec<AuctionOutcome> = self
            .pairs
            .iter()
            .map(|pair| self.base.run(&permute_profile(bids, pair)))
            .collect::<Result<_>>()?;
        // Projected outcome at the orbit point sigma v tau, assembled from the
        // precomputed base evaluations: the inner term for pair (phi, psi) is
        // the base outcome at (phi.compose(sigma), tau.compose(psi)).
        let projected_at = |sigma_tau: &PermPair| -> Result<(Matrix, Vec<f64>)> {
            let mut alloc = Matrix::zeros(n, m);
            let mut pay = vec![0.0; n];
            for pair in &self.pairs {
                let composed_bidder = pair.bidder.compose(&sigma_tau.bidder);
                let composed_item = pair.item.compose(&sigma_tau.item);
                let idx = *index
                    .get(&(composed_bidder.images().to_vec(), composed_item.images().to_vec()))
                    .ok_or_else(|| Error::InvalidParameter("projection group is not closed under composition".into()))?;
                let out = &base_outcomes[idx];
                for a in 0..n {
                    let i = pair.bidder.map(a);
                    pay[i] += out.payments[a] / k as f64;
                    for d in 0..m {
                        alloc.add_at(i, pair.item.map(d), out.allocation.get(a, d) / k as f64);
                    }
                }
            }
            Ok((alloc, pay))
        };
        let (base_alloc, base_pay) = projected_at(&PermPair::identity(n, m))?;
        let mut defect = 0.0f64;
        for pair in &self.pairs {
            let (alloc, pay) = projected_at(pair)?;
            for i in 0..n {
                defect = defect.max((pay[i] - base_pay[pair.bidder.map(i)]).abs());
                for j in 0..m {
                    defect = defect
                        .max((alloc.get(i, j) - base_alloc.get(pair.bidder.map(i), pair.item.map(j))).abs());
                }
            }
        }
        Ok(defect)
    }
}

impl<M: Mechanism> Mechanism for Projected<M> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn m(&self) -> usize {
        self.base.m()
    }

    fn run(&self, bids: &ValuationProfile) -> Result<AuctionOutcome> {
        let (n, m) = (self.base.n(), self.base.m());
        let k = self.pairs.len() as f64;
        let mut allocation = Matrix::zeros(n, m);
        let mut payments = vec![0.0; n];
        for pair in &self.pairs {
            let permuted = permute_profile(bids, pair);
            let out = self.base.run(&permuted)?;
            for a in 0..n {
                let i = pair.bidder.map(a);
                payments[i] += out.payments[a] / k;
                for d in 0..m {
                    allocation.add_at(i, pair.item.map(d), out.allocation.get(a, d) / k);
                }
            }
        }
        let utilities: Vec<f64> = (0..n)
            .map(|i| dot(allocation.row(i), bids.values.row(i)) - payments[i])
            .collect();
        Ok(AuctionOutcome {
            allocation,
            payments,
            utilities,
        })
    }

    fn utility_and_own_bid_grad(
        &self,
        valuation_row: &[f64],
        bids: &ValuationProfile,
        bidder: usize,
    ) -> Result<(f64, Vec<f64>)> {
        // The projected utility is an orbit average of base utilities at
        // permuted inputs with permuted valuation rows, so its bid gradient
        // is the matching average of permuted base gradients.
        let m = self.base.m();
        let k = self.pairs.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; m];
        for pair in &self.pairs {
            let permuted = permute_profile(bids, pair);
            let inner_bidder = pair.bidder.inverse().map(bidder);
            let permuted_val: Vec<f64> = (0..m).map(|d| valuation_row[pair.item.map(d)]).collect();
            let (u, g) = self
                .base
                .utility_and_own_bid_grad(&permuted_val, &permuted, inner_bidder)?;
            value += u / k;
            for d in 0..m {
                grad[pair.item.map(d)] += g[d] / k;
            }
        }
        Ok((value, grad))
    }
}

/// Convenience constructors matching the three canonical projections.
pub fn project_bidder<M: Mechanism>(base: M) -> Result<Projected<M>> {
    Projected::new(base, ProjectionSpec::Bidder)
}

pub fn project_item<M: Mechanism>(base: M) -> Result<Projected<M>> {
    Projected::new(base, ProjectionSpec::Item)
}

pub fn project_aggregated<M: Mechanism>(base: M) -> Result<Projected<M>> {
    Projected::new(base, ProjectionSpec::Aggregated)
}

pub fn project_subgroup<M: Mechanism>(
    base: M,
    bidder_subset: Vec<usize>,
    item_subset: Vec<usize>,
) -> Result<Projected<M>> {
    Projected::new(
        base,
        ProjectionSpec::Subgroup {
            bidder_subset,
            item_subset,
        },
    )
}

/// Maximum over the spec's group of the l-infinity discrepancy between
/// f(sigma v tau) and sigma f(v) tau, over both allocations and payments.
/// Zero (up to rounding) exactly when the mechanism is equivariant for the
/// group.
pub fn equivariance_defect<M: Mechanism + ?Sized>(
    mech: &M,
    bids: &ValuationProfile,
    spec: &ProjectionSpec,
) -> Result<f64> {
    let pairs = spec.orbit(mech.n(), mech.m())?;
    let base = mech.run(bids)?;
    let mut defect = 0.0f64;
    for pair in &pairs {
        let permuted_out = mech.run(&permute_profile(bids, pair))?;
        // f(sigma v tau)[i][j] should equal f(v)[sigma(i)][tau(j)].
        for i in 0..mech.n() {
            defect = defect.max((permuted_out.payments[i] - base.payments[pair.bidder.map(i)]).abs());
            for j in 0..mech.m() {
                defect = defect.max(
                    (permuted_out.allocation.get(i, j)
                        - base.allocation.get(pair.bidder.map(i), pair.item.map(j)))
                    .abs(),
                );
            }
        }
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::RegretNet;
    use crate::valuations::sample_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A constant mechanism given by a fixed allocation/payment table,
    /// ignoring the bids. Deliberately asymmetric unless the table is.
    struct ConstantMech {
        n: usize,
        m: usize,
        allocation: Matrix,
        payments: Vec<f64>,
    }

    impl Mechanism for ConstantMech {
        fn n(&self) -> usize {
            self.n
        }
        fn m(&self) -> usize {
            self.m
        }
        fn run(&self, bids: &ValuationProfile) -> Result<AuctionOutcome> {
            let utilities: Vec<f64> = (0..self.n)
                .map(|i| dot(self.allocation.row(i), bids.values.row(i)) - self.payments[i])
                .collect();
            Ok(AuctionOutcome {
                allocation: self.allocation.clone(),
                payments: self.payments.clone(),
                utilities,
            })
        }
    }

    fn favor_first_bidder() -> ConstantMech {
        ConstantMech {
            n: 2,
            m: 1,
            allocation: Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(),
            payments: vec![0.0, 0.0],
        }
    }

    #[test]
    fn bidder_projection_splits_constant_favoritism() {
        // A mechanism that always hands the item to bidder 1 averages to a
        // even coin flip over the two bidder labels.
        let projected = project_bidder(favor_first_bidder()).unwrap();
        let batch = sample_uniform(2, 1, 5, 3).unwrap();
        for p in &batch.profiles {
            let out = projected.run(p).unwrap();
            assert!((out.allocation.get(0, 0) - 0.5).abs() < 1e-15);
            assert!((out.allocation.get(1, 0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_fixes_symmetric_mechanisms() {
        let symmetric = ConstantMech {
            n: 2,
            m: 2,
            allocation: Matrix::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap(),
            payments: vec![0.1, 0.1],
        };
        let batch = sample_uniform(2, 2, 4, 8).unwrap();
        // A constant symmetric table is equivariant only at symmetric inputs
        // in general, but its outputs do not depend on the input at all, so
        // the orbit average must reproduce it everywhere.
        let q3 = project_aggregated(&symmetric).unwrap();
        for p in &batch.profiles {
            let base = symmetric.run(p).unwrap();
            let proj = q3.run(p).unwrap();
            assert!(base.allocation.max_abs_diff(&proj.allocation) < 1e-12);
            for i in 0..2 {
                assert!((base.payments[i] - proj.payments[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_idempotent_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = RegretNet::new(2, 2, &[10], &mut rng).unwrap();
        let batch = sample_uniform(2, 2, 10, 4).unwrap();
        for spec in [ProjectionSpec::Bidder, ProjectionSpec::Item, ProjectionSpec::Aggregated] {
            let once = Projected::new(&net, spec.clone()).unwrap();
            let twice = Projected::new(&once, spec.clone()).unwrap();
            for p in &batch.profiles {
                let a = once.run(p).unwrap();
                let b = twice.run(p).unwrap();
                assert!(a.allocation.max_abs_diff(&b.allocation) < 1e-12, "{spec:?}");
                for i in 0..2 {
                    assert!((a.payments[i] - b.payments[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn item_projection_on_item_fixed_mechanism() {
        // Always allocate item 1 to bidder 1 and never item 2: the item
        // average splits the two item labels evenly.
        let mech = ConstantMech {
            n: 2,
            m: 2,
            allocation: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
            payments: vec![0.0, 0.0],
        };
        let projected = project_item(mech).unwrap();
        let bids = ValuationProfile::new(Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        let out = projected.run(&bids).unwrap();
        assert!((out.allocation.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((out.allocation.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(out.allocation.get(1, 0), 0.0);
    }

    #[test]
    fn aggregated_equals_composed_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(140);
        let net = RegretNet::new(2, 3, &[8], &mut rng).unwrap();
        let q3 = project_aggregated(&net).unwrap();
        let q1_q2 = project_bidder(project_item(&net).unwrap()).unwrap();
        let q2_q1 = project_item(project_bidder(&net).unwrap()).unwrap();
        let batch = sample_uniform(2, 3, 8, 77).unwrap();
        for p in &batch.profiles {
            let a = q3.run(p).unwrap();
            let b = q1_q2.run(p).unwrap();
            let c = q2_q1.run(p).unwrap();
            assert!(a.allocation.max_abs_diff(&b.allocation) < 1e-10);
            assert!(a.allocation.max_abs_diff(&c.allocation) < 1e-10);
            for i in 0..2 {
                assert!((a.payments[i] - b.payments[i]).abs() < 1e-10);
                assert!((a.payments[i] - c.payments[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn aggregated_degenerates_to_bidder_for_single_item() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = RegretNet::new(2, 1, &[6], &mut rng).unwrap();
        let q3 = project_aggregated(&net).unwrap();
        let q1 = project_bidder(&net).unwrap();
        let batch = sample_uniform(2, 1, 6, 5).unwrap();
        for p in &batch.profiles {
            let a = q3.run(p).unwrap();
            let b = q1.run(p).unwrap();
            assert_eq!(a.allocation, b.allocation);
            assert_eq!(a.payments, b.payments);
        }
    }

    #[test]
    fn subgroup_full_and_singleton_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let net = RegretNet::new(3, 2, &[6], &mut rng).unwrap();
        let full = project_subgroup(&net, vec![0, 1, 2], vec![0, 1]).unwrap();
        let q3 = project_aggregated(&net).unwrap();
        let singleton = project_subgroup(&net, vec![0], vec![]).unwrap();
        let batch = sample_uniform(3, 2, 5, 6).unwrap();
        for p in &batch.profiles {
            let a = full.run(p).unwrap();
            let b = q3.run(p).unwrap();
            assert!(a.allocation.max_abs_diff(&b.allocation) < 1e-12);
            let s = singleton.run(p).unwrap();
            let base = net.run(p).unwrap();
            assert_eq!(s.allocation, base.allocation);
            assert_eq!(s.payments, base.payments);
        }
    }

    #[test]
    fn subgroup_swap_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = RegretNet::new(3, 1, &[6], &mut rng).unwrap();
        let sub = ProjectionSpec::Subgroup {
            bidder_subset: vec![0, 1],
            item_subset: vec![],
        };
        let projected = Projected::new(&net, sub.clone()).unwrap();
        let batch = sample_uniform(3, 1, 10, 7).unwrap();
        for p in &batch.profiles {
            let defect = equivariance_defect(&projected, p, &sub).unwrap();
            assert!(defect < 1e-12, "defect {defect}");
        }
        // But the full bidder group generally still sees asymmetry over
        // bidder 2, so the full-group defect should be visibly larger.
        let full_defect: f64 = batch
            .profiles
            .iter()
            .map(|p| equivariance_defect(&projected, p, &ProjectionSpec::Bidder).unwrap())
            .fold(0.0, f64::max);
        assert!(full_defect > 1e-6, "full-group defect {full_defect}");
    }

    #[test]
    fn subgroup_requires_nonempty_subset() {
        assert!(ProjectionSpec::Subgroup {
            bidder_subset: vec![],
            item_subset: vec![],
        }
        .orbit(2, 2)
        .is_err());
    }

    #[test]
    fn defect_of_projection_at_most_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let net = RegretNet::new(2, 2, &[8], &mut rng).unwrap();
        let spec = ProjectionSpec::Aggregated;
        let projected = Projected::new(&net, spec.clone()).unwrap();
        let batch = sample_uniform(2, 2, 10, 9).unwrap();
        for p in &batch.profiles {
            let d_base = equivariance_defect(&net, p, &spec).unwrap();
            let d_proj = equivariance_defect(&projected, p, &spec).unwrap();
            assert!(d_proj <= 1e-10, "projected defect {d_proj}");
            assert!(d_proj <= d_base + 1e-12);
        }
    }

    #[test]
    fn defect_of_hand_built_asymmetric_mechanism() {
        // Constant favoritism on n=2, m=1: f(sigma v)[0][0] = 1 while
        // sigma f(v)[0][0] = 0 under the swap, so the defect is exactly 1.
        let mech = favor_first_bidder();
        let bids = ValuationProfile::new(Matrix::from_rows(&[vec![0.3], vec![0.9]]).unwrap());
        let defect = equivariance_defect(&mech, &bids, &ProjectionSpec::Bidder).unwrap();
        assert!((defect - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fast_defect_matches_generic_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for (n, m, spec) in [
            (2, 2, ProjectionSpec::Aggregated),
            (3, 1, ProjectionSpec::Bidder),
            (2, 3, ProjectionSpec::Item),
            (
                3,
                2,
                ProjectionSpec::Subgroup {
                    bidder_subset: vec![0, 2],
                    item_subset: vec![0, 1],
                },
            ),
        ] {
            let net = RegretNet::new(n, m, &[6], &mut rng).unwrap();
            let projected = Projected::new(&net, spec.clone()).unwrap();
            let batch = sample_uniform(n, m, 5, 31).unwrap();
            for p in &batch.profiles {
                let fast = projected.equivariance_defect_fast(p).unwrap();
                let generic = equivariance_defect(&projected, p, &spec).unwrap();
                assert_eq!(fast, generic, "n={n} m={m} {spec:?}");
            }
        }
    }

    #[test]
    fn projected_mechanism_stays_feasible_and_ir() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let net = RegretNet::new(2, 2, &[10], &mut rng).unwrap();
        let projected = project_aggregated(&net).unwrap();
        let batch = sample_uniform(2, 2, 40, 11).unwrap();
        let report = crate::mechanism::check_feasibility_ir(&projected, &batch, 1e-6).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn projection_tag_round_trip() {
        for spec in [
            ProjectionSpec::Bidder,
            ProjectionSpec::Item,
            ProjectionSpec::Aggregated,
            ProjectionSpec::Subgroup {
                bidder_subset: vec![0, 1],
                item_subset: vec![],
            },
        ] {
            let tag = spec.to_tag();
            assert_eq!(ProjectionSpec::from_tag(&tag).unwrap(), Some(spec));
        }
        assert_eq!(ProjectionSpec::from_tag("none").unwrap(), None);
        assert!(ProjectionSpec::from_tag("garbage").is_err());
    }

    #[test]
    fn exact_utility_grad_through_projection_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = RegretNet::new(2, 2, &[8], &mut rng).unwrap();
        let projected = project_aggregated(&net).unwrap();
        let batch = sample_uniform(2, 2, 5, 13).unwrap();
        for p in &batch.profiles {
            for bidder in 0..2 {
                let val = p.values.row(bidder).to_vec();
                let (u, g) = projected.utility_and_own_bid_grad(&val, p, bidder).unwrap();
                let (u_fd, g_fd) =
                    crate::mechanism::fd_utility_and_grad(&projected, &val, p, bidder).unwrap();
                assert!((u - u_fd).abs() < 1e-12);
                for (a, b) in g.iter().zip(&g_fd) {
                    let denom = a.abs().max(b.abs()).max(1e-3);
                    assert!((a - b).abs() / denom < 1e-4, "{a} vs {b}");
                }
            }
        }
    }
}
