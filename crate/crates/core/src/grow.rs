use crate::bootstrap::BootstrapSample;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::{LeafNode, Node, RegressionTree, SplitNode, TreeKind};
use rand::Rng;

/// Growth hyperparameters. `q` is the feature-subsample size per split,
/// `n_min` the minimum bootstrap-weighted node size to attempt a split.
/// SUT growth additionally needs a probability sequence over the features.
#[derive(Debug, Clone)]
pub struct GrowConfig {
    pub q: usize,
    pub n_min: u32,
    pub kind: TreeKind,
    pub prob_seq: Option<Vec<f64>>,
}

impl GrowConfig {
    pub fn cart(q: usize, n_min: u32) -> Self {
        Self {
            q,
            n_min,
            kind: TreeKind::Cart,
            prob_seq: None,
        }
    }

    pub fn sut(q: usize, n_min: u32, prob_seq: Vec<f64>) -> Self {
        Self {
            q,
            n_min,
            kind: TreeKind::Sut,
            prob_seq: Some(prob_seq),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.q < 1 || self.q > p {
            return Err(Error::InvalidArgument(format!(
                "q = {} out of range 1..={p}",
                self.q
            )));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidArgument("n_min must be at least 1".into()));
        }
        match (self.kind, &self.prob_seq) {
            (TreeKind::Sut, None) => Err(Error::InvalidArgument(
                "SUT growth needs a probability sequence".into(),
            )),
            (TreeKind::Sut, Some(seq)) => {
                if seq.len() != p {
                    return Err(Error::InvalidArgument(format!(
                        "probability sequence has {} entries for {p} features",
                        seq.len()
                    )));
                }
                if seq.iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(Error::InvalidArgument(
                        "probability sequence entries must be finite and nonnegative".into(),
                    ));
                }
                let sum: f64 = seq.iter().sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "probability sequence sums to {sum}, expected 1"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Default feature-subsample size: ceil(p / 3).
pub fn default_q(p: usize) -> usize {
    p.div_ceil(3).max(1)
}

/// Default minimum node size: ceil(sqrt(n)) for CART, 5 for SUT.
pub fn default_n_min(kind: TreeKind, n: usize) -> u32 {
    match kind {
        TreeKind::Cart => (n as f64).sqrt().ceil() as u32,
        TreeKind::Sut => 5,
    }
}

type Members = Vec<(u32, u32)>;

fn member_weight(members: &Members) -> u64 {
    members.iter().map(|&(_, h)| h as u64).sum()
}

fn make_leaf(data: &Dataset, members: Members) -> Node {
    let y = data.y();
    let mut num = 0.0;
    let mut den = 0.0;
    for &(i, h) in &members {
        num += h as f64 * y[i as usize];
        den += h as f64;
    }
    Node::Leaf(LeafNode {
        members,
        mean: num / den,
    })
}

fn non_constant_features(data: &Dataset, members: &Members) -> Vec<usize> {
    let x = data.x();
    (0..data.p())
        .filter(|&j| {
            let first = x.get(members[0].0 as usize, j);
            members.iter().any(|&(i, _)| x.get(i as usize, j) != first)
        })
        .collect()
}

fn response_constant(data: &Dataset, members: &Members) -> bool {
    let y = data.y();
    let first = y[members[0].0 as usize];
    members.iter().all(|&(i, _)| y[i as usize] == first)
}

fn partition(data: &Dataset, members: &Members, feature: usize, cut: f64) -> (Members, Members) {
    let x = data.x();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &(i, h) in members {
        if x.get(i as usize, feature) < cut {
            left.push((i, h));
        } else {
            right.push((i, h));
        }
    }
    (left, right)
}

/// Draw `amount` indices uniformly without replacement from `pool`,
/// returned in ascending order.
fn draw_uniform<R: Rng>(pool: &[usize], amount: usize, rng: &mut R) -> Vec<usize> {
    let amount = amount.min(pool.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    picked
}

/// Weighted draw without replacement. Weights renormalize implicitly as
/// candidates are removed; if the remaining mass is zero at any step the
/// draw falls back to uniform over the remaining candidates.
fn draw_weighted<R: Rng>(
    pool: &[usize],
    weights: &[f64],
    amount: usize,
    rng: &mut R,
) -> Vec<usize> {
    let amount = amount.min(pool.len());
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut picked = Vec::with_capacity(amount);
    for _ in 0..amount {
        let mass: f64 = remaining.iter().map(|&k| weights[k]).sum();
        let pos = if mass > 0.0 {
            let mut u = rng.random::<f64>() * mass;
            let mut chosen = remaining.len() - 1;
            for (slot, &k) in remaining.iter().enumerate() {
                u -= weights[k];
                if u <= 0.0 {
                    chosen = slot;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..remaining.len())
        };
        picked.push(pool[remaining.swap_remove(pos)]);
    }
    picked.sort_unstable();
    picked
}

/// Weighted SSE of a candidate split scan over one feature. Returns the
/// best (sse, cut) with cuts at midpoints between consecutive distinct
/// values; ties keep the lowest cut.
fn best_cut_for_feature(data: &Dataset, members: &Members, feature: usize) -> Option<(f64, f64)> {
    let x = data.x();
    let y = data.y();
    let mut pts: Vec<(f64, f64, f64)> = members
        .iter()
        .map(|&(i, h)| (x.get(i as usize, feature), y[i as usize], h as f64))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let (mut th, mut thy, mut thyy) = (0.0, 0.0, 0.0);
    for &(_, yi, h) in &pts {
        th += h;
        thy += h * yi;
        thyy += h * yi * yi;
    }

    let mut best: Option<(f64, f64)> = None;
    let (mut lh, mut lhy, mut lhyy) = (0.0, 0.0, 0.0);
    for k in 0..pts.len() - 1 {
        let (xv, yv, h) = pts[k];
        lh += h;
        lhy += h * yv;
        lhyy += h * yv * yv;
        if pts[k + 1].0 == xv {
            continue; // not a boundary between distinct values
        }
        let cut = 0.5 * (xv + pts[k + 1].0);
        let (rh, rhy, rhyy) = (th - lh, thy - lhy, thyy - lhyy);
        let sse_left = (lhyy - lhy * lhy / lh).max(0.0);
        let sse_right = (rhyy - rhy * rhy / rh).max(0.0);
        let sse = sse_left + sse_right;
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, cut));
        }
    }
    best
}

fn node_sse(data: &Dataset, members: &Members) -> f64 {
    let y = data.y();
    let (mut th, mut thy, mut thyy) = (0.0, 0.0, 0.0);
    for &(i, h) in members {
        let (yi, hf) = (y[i as usize], h as f64);
        th += hf;
        thy += hf * yi;
        thyy += hf * yi * yi;
    }
    (thyy - thy * thy / th).max(0.0)
}

struct CartGrower<'a> {
    data: &'a Dataset,
    q: usize,
    n_min: u32,
    gains: Option<&'a mut Vec<f64>>,
}

impl CartGrower<'_> {
    fn grow<R: Rng>(&mut self, members: Members, rng: &mut R) -> Node {
        if member_weight(&members) < self.n_min as u64 {
            return make_leaf(self.data, members);
        }
        let candidates = non_constant_features(self.data, &members);
        if candidates.is_empty() || response_constant(self.data, &members) {
            return make_leaf(self.data, members);
        }
        let drawn = draw_uniform(&candidates, self.q, rng);

        // Best (feature, cut) by weighted SSE; scan order (ascending
        // feature, ascending cut) plus strict improvement implements the
        // lowest-feature, lowest-cut tie break.
        let mut best: Option<(f64, usize, f64)> = None;
        for &feat in &drawn {
            if let Some((sse, cut)) = best_cut_for_feature(self.data, &members, feat) {
                if best.is_none_or(|(b, _, _)| sse < b) {
                    best = Some((sse, feat, cut));
                }
            }
        }
        let Some((sse, feature, cut)) = best else {
            return make_leaf(self.data, members);
        };

        if let Some(gains) = self.gains.as_deref_mut() {
            gains[feature] += (node_sse(self.data, &members) - sse).max(0.0);
        }

        let (left, right) = partition(self.data, &members, feature, cut);
        debug_assert!(!left.is_empty() && !right.is_empty());
        Node::Split(SplitNode {
            feature,
            cut,
            left: Box::new(self.grow(left, rng)),
            right: Box::new(self.grow(right, rng)),
        })
    }
}

/// Grow a CART regression tree on a bootstrap of `data`: at each node,
/// draw q features uniformly from the non-constant ones and take the
/// (feature, cut) minimizing the bootstrap-weighted SSE of the children.
pub fn grow_cart<R: Rng>(
    data: &Dataset,
    sample: &BootstrapSample,
    cfg: &GrowConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    grow_cart_with_gains(data, sample, cfg, rng, None)
}

/// CART growth that also accumulates per-feature SSE decrease
/// (parent SSE minus child SSE, summed over splits) into `gains`.
pub fn grow_cart_with_gains<R: Rng>(
    data: &Dataset,
    sample: &BootstrapSample,
    cfg: &GrowConfig,
    rng: &mut R,
    gains: Option<&mut Vec<f64>>,
) -> Result<RegressionTree> {
    cfg.validate(data.p())?;
    if cfg.kind != TreeKind::Cart {
        return Err(Error::InvalidArgument(
            "grow_cart called with SUT config".into(),
        ));
    }
    if sample.n() != data.n() {
        return Err(Error::Dimension(format!(
            "bootstrap over {} instances for dataset of {}",
            sample.n(),
            data.n()
        )));
    }
    if let Some(g) = &gains {
        debug_assert_eq!(g.len(), data.p());
    }
    let mut grower = CartGrower {
        data,
        q: cfg.q,
        n_min: cfg.n_min,
        gains,
    };
    let root = grower.grow(sample.members(), rng);
    RegressionTree::new(TreeKind::Cart, root)
}

struct SutGrower<'a> {
    data: &'a Dataset,
    q: usize,
    n_min: u32,
    prob: &'a [f64],
}

impl SutGrower<'_> {
    fn grow<R: Rng>(&self, members: Members, rng: &mut R) -> Node {
        if member_weight(&members) < self.n_min as u64 {
            return make_leaf(self.data, members);
        }
        let candidates = non_constant_features(self.data, &members);
        if candidates.is_empty() || response_constant(self.data, &members) {
            return make_leaf(self.data, members);
        }
        let weights: Vec<f64> = candidates.iter().map(|&j| self.prob[j]).collect();
        let drawn = draw_weighted(&candidates, &weights, self.q, rng);

        let x = self.data.x();
        let parent_frob2 = frob2_weighted(self.data, &members);
        let n_p = member_weight(&members) as f64;

        let mut best: Option<(f64, usize, f64, Members, Members)> = None;
        for &feat in &drawn {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &(i, _) in &members {
                let v = x.get(i as usize, feat);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let cut = 0.5 * (lo + hi);
            let (left, right) = partition(self.data, &members, feat, cut);
            // the midpoint of adjacent floats can round onto an endpoint
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let score = score_from_norms(
                n_p,
                parent_frob2,
                member_weight(&left) as f64,
                frob2_weighted(self.data, &left),
                member_weight(&right) as f64,
                frob2_weighted(self.data, &right),
            );
            if best.as_ref().is_none_or(|(b, ..)| score > *b) {
                best = Some((score, feat, cut, left, right));
            }
        }
        let Some((_, feature, cut, left, right)) = best else {
            return make_leaf(self.data, members);
        };
        Node::Split(SplitNode {
            feature,
            cut,
            left: Box::new(self.grow(left, rng)),
            right: Box::new(self.grow(right, rng)),
        })
    }
}

/// Squared Frobenius norm of the node's attribute matrix after per-column
/// centering and scaling, with rows weighted by bootstrap multiplicity.
/// Each column with positive weighted variance contributes exactly the
/// node weight; constant columns contribute zero.
fn frob2_weighted(data: &Dataset, members: &Members) -> f64 {
    let x = data.x();
    let n: f64 = member_weight(members) as f64;
    let mut varying = 0usize;
    for j in 0..data.p() {
        let first = x.get(members[0].0 as usize, j);
        if members.iter().any(|&(i, _)| x.get(i as usize, j) != first) {
            varying += 1;
        }
    }
    n * varying as f64
}

fn score_from_norms(n_p: f64, fp2: f64, n_l: f64, fl2: f64, n_r: f64, fr2: f64) -> f64 {
    if n_l == 0.0 || n_r == 0.0 {
        return f64::NEG_INFINITY;
    }
    let fp = fp2.sqrt();
    if fp == 0.0 {
        return 0.0;
    }
    (fp - (n_l / n_p) * fl2.sqrt() - (n_r / n_p) * fr2.sqrt()) / fp
}

/// Grow a split-unsupervised tree: features drawn by the probability
/// sequence among the node's non-constant attributes, cut at the midpoint
/// of the node's min and max, candidate maximizing the dispersion score.
/// Split decisions never read the response; it is consulted only by the
/// constant-response stop rule.
pub fn grow_sut<R: Rng>(
    data: &Dataset,
    sample: &BootstrapSample,
    cfg: &GrowConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    cfg.validate(data.p())?;
    if cfg.kind != TreeKind::Sut {
        return Err(Error::InvalidArgument(
            "grow_sut called with CART config".into(),
        ));
    }
    if sample.n() != data.n() {
        return Err(Error::Dimension(format!(
            "bootstrap over {} instances for dataset of {}",
            sample.n(),
            data.n()
        )));
    }
    let prob = cfg.prob_seq.as_deref().expect("validated above");
    let grower = SutGrower {
        data,
        q: cfg.q,
        n_min: cfg.n_min,
        prob,
    };
    let root = grower.grow(sample.members(), rng);
    RegressionTree::new(TreeKind::Sut, root)
}

/// Grow with the config's tree kind.
pub fn grow_tree<R: Rng>(
    data: &Dataset,
    sample: &BootstrapSample,
    cfg: &GrowConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    match cfg.kind {
        TreeKind::Cart => grow_cart(data, sample, cfg, rng),
        TreeKind::Sut => grow_sut(data, sample, cfg, rng),
    }
}

/// Scale-free dispersion-reduction score of a split. `left` and `right`
/// index the rows of `parent`; together they must partition it. The score
/// is (‖P̃‖ - (n_L/n_P)‖L̃‖ - (n_R/n_P)‖R̃‖) / ‖P̃‖ with Frobenius norms of
/// the column-wise centered-and-scaled matrices. An empty child scores
/// negative infinity; a parent with zero norm (all columns constant)
/// scores zero.
pub fn sut_score(parent: &Matrix, left: &[usize], right: &[usize]) -> f64 {
    debug_assert_eq!(left.len() + right.len(), parent.nrows());
    if left.is_empty() || right.is_empty() {
        return f64::NEG_INFINITY;
    }
    let all: Vec<usize> = (0..parent.nrows()).collect();
    let fp2 = frob2_rows(parent, &all);
    score_from_norms(
        parent.nrows() as f64,
        fp2,
        left.len() as f64,
        frob2_rows(parent, left),
        right.len() as f64,
        frob2_rows(parent, right),
    )
}

/// Explicit centered-and-scaled squared Frobenius norm over a row subset.
fn frob2_rows(m: &Matrix, rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let mut total = 0.0;
    for j in 0..m.ncols() {
        let mean = rows.iter().map(|&i| m.get(i, j)).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|&i| (m.get(i, j) - mean).powi(2))
            .sum::<f64>()
            / n;
        if var > 0.0 {
            let sd = var.sqrt();
            total += rows
                .iter()
                .map(|&i| ((m.get(i, j) - mean) / sd).powi(2))
                .sum::<f64>();
        }
    }
    total
}
