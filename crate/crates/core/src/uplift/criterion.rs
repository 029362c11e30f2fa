use serde::{Deserialize, Serialize};

use super::{Result, UpliftError};

/// Divergence between the treated and control outcome distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    /// Kullback-Leibler, base 2.
    #[default]
    Kl,
    /// Squared Euclidean distance.
    Euclid,
    /// Chi-squared divergence `Σ (p - q)² / q`.
    ChiSq,
}

fn xlog2(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).log2()
    }
}

/// Divergence of two distributions over the same finite support. Zero
/// components follow the `0·log 0 = 0` and `0/0 = 0` conventions.
pub(crate) fn raw_divergence(p: &[f64], q: &[f64], kind: DivergenceKind) -> f64 {
    let terms = p.iter().zip(q);
    match kind {
        DivergenceKind::Kl => terms.map(|(&a, &b)| xlog2(a, b)).sum(),
        DivergenceKind::Euclid => terms.map(|(a, b)| (a - b) * (a - b)).sum(),
        DivergenceKind::ChiSq => terms
            .map(|(&a, &b)| if a == b { 0.0 } else { (a - b) * (a - b) / b })
            .sum(),
    }
}

/// Binary entropy (base 2) for KL, Gini impurity otherwise.
pub(crate) fn impurity(p: &[f64], kind: DivergenceKind) -> f64 {
    match kind {
        DivergenceKind::Kl => -p.iter().map(|&x| xlog2(x, 1.0)).sum::<f64>(),
        DivergenceKind::Euclid | DivergenceKind::ChiSq => {
            1.0 - p.iter().map(|x| x * x).sum::<f64>()
        }
    }
}

/// Divergence between two binary outcome distributions `p = (p0, p1)` and
/// `q = (q0, q1)`.
pub fn divergence(p: [f64; 2], q: [f64; 2], kind: DivergenceKind) -> Result<f64> {
    for pair in [p, q] {
        let valid =
            pair.iter().all(|x| (0.0..=1.0).contains(x)) && (pair[0] + pair[1] - 1.0).abs() < 1e-9;
        if !valid {
            return Err(UpliftError::Probability(pair));
        }
    }
    if kind != DivergenceKind::Euclid && p.iter().zip(&q).any(|(&a, &b)| b == 0.0 && a > 0.0) {
        return Err(UpliftError::Probability(q));
    }
    Ok(raw_divergence(&p, &q, kind))
}

/// Row and positive-outcome counts for both groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n_treat: usize,
    pub n_ctrl: usize,
    pub pos_treat: usize,
    pub pos_ctrl: usize,
}

impl GroupCounts {
    pub fn add(&mut self, treated: bool, positive: bool) {
        if treated {
            self.n_treat += 1;
            self.pos_treat += usize::from(positive);
        } else {
            self.n_ctrl += 1;
            self.pos_ctrl += usize::from(positive);
        }
    }

    pub fn total(&self) -> usize {
        self.n_treat + self.n_ctrl
    }

    pub fn minus(&self, other: &GroupCounts) -> GroupCounts {
        GroupCounts {
            n_treat: self.n_treat - other.n_treat,
            n_ctrl: self.n_ctrl - other.n_ctrl,
            pos_treat: self.pos_treat - other.pos_treat,
            pos_ctrl: self.pos_ctrl - other.pos_ctrl,
        }
    }
}

/// Counts of a node plus its smoothed positive-outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub n_treat: usize,
    pub n_ctrl: usize,
    pub pos_treat: usize,
    pub pos_ctrl: usize,
    pub p_treat: f64,
    pub p_ctrl: f64,
}

impl NodeStats {
    /// `p = (pos + n_reg * prior) / (n + n_reg)` for each group.
    pub fn smoothed(counts: GroupCounts, prior_treat: f64, prior_ctrl: f64, n_reg: f64) -> Self {
        let shrink =
            |pos: usize, n: usize, prior: f64| (pos as f64 + n_reg * prior) / (n as f64 + n_reg);
        NodeStats {
            n_treat: counts.n_treat,
            n_ctrl: counts.n_ctrl,
            pos_treat: counts.pos_treat,
            pos_ctrl: counts.pos_ctrl,
            p_treat: shrink(counts.pos_treat, counts.n_treat, prior_treat),
            p_ctrl: shrink(counts.pos_ctrl, counts.n_ctrl, prior_ctrl),
        }
    }

    pub fn counts(&self) -> GroupCounts {
        GroupCounts {
            n_treat: self.n_treat,
            n_ctrl: self.n_ctrl,
            pos_treat: self.pos_treat,
            pos_ctrl: self.pos_ctrl,
        }
    }

    pub fn total(&self) -> usize {
        self.n_treat + self.n_ctrl
    }

    pub fn uplift(&self) -> f64 {
        self.p_treat - self.p_ctrl
    }

    pub fn divergence(&self, kind: DivergenceKind) -> f64 {
        raw_divergence(
            &[self.p_treat, 1.0 - self.p_treat],
            &[self.p_ctrl, 1.0 - self.p_ctrl],
            kind,
        )
    }
}

/// `Σ (n_child / n) · D(child) − D(parent)`, with `n` counting treated and
/// control rows together.
pub fn gain(parent: &NodeStats, left: &NodeStats, right: &NodeStats, kind: DivergenceKind) -> f64 {
    let n = parent.total() as f64;
    let after = left.total() as f64 / n * left.divergence(kind)
        + right.total() as f64 / n * right.divergence(kind);
    after - parent.divergence(kind)
}

/// Penalty for a split test, from the fractions of treated and control rows
/// sent left and right:
///
/// `I = H(N^T/N, N^C/N)·D(P^T(A) : P^C(A)) + N^T/N·H(P^T(A)) + N^C/N·H(P^C(A)) + 1/2`
///
/// `H` is binary entropy for the KL kind and the Gini index for the others;
/// `D` is the divergence of the same kind.
pub fn normalization(left: &GroupCounts, right: &GroupCounts, kind: DivergenceKind) -> f64 {
    let n_treat = (left.n_treat + right.n_treat) as f64;
    let n_ctrl = (left.n_ctrl + right.n_ctrl) as f64;
    let fraction = |l: usize, total: f64| {
        if total == 0.0 {
            None
        } else {
            Some(l as f64 / total)
        }
    };
    split_penalty(
        n_treat / (n_treat + n_ctrl),
        fraction(left.n_treat, n_treat),
        fraction(left.n_ctrl, n_ctrl),
        kind,
    )
}

/// [`normalization`] in terms of the treated share of the node and the
/// fraction of each group sent left (`None` for an empty group).
pub fn split_penalty(
    treated_share: f64,
    treated_left: Option<f64>,
    control_left: Option<f64>,
    kind: DivergenceKind,
) -> f64 {
    let share = [treated_share, 1.0 - treated_share];
    let direction = |f: Option<f64>| f.map_or([0.0, 0.0], |f| [f, 1.0 - f]);
    let p_treat = direction(treated_left);
    let p_ctrl = direction(control_left);
    impurity(&share, kind) * raw_divergence(&p_treat, &p_ctrl, kind)
        + share[0] * impurity(&p_treat, kind)
        + share[1] * impurity(&p_ctrl, kind)
        + 0.5
}
