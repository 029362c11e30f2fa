//! Reference implementations used as oracles by the integration tests.
//! They share no code with the library beyond its table types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use causal_rules::event_log::{AttributeKind, AttributeSchema, CaseRecord, CaseTable, Value};
use causal_rules::uplift::DivergenceKind;
use causal_rules::ActionRule;

/// An action rule as `attribute -> (from, to)`, with stable terms having
/// `from == to`, plus its support and confidence.
pub type PlainRule = (BTreeMap<String, (String, String)>, f64, f64);

pub fn plain(rule: &ActionRule) -> PlainRule {
    let terms = rule
        .antecedent
        .terms()
        .iter()
        .map(|t| (t.attribute.clone(), (t.from.clone(), t.to.clone())))
        .collect();
    (terms, rule.support, rule.confidence)
}

fn label(v: &Value) -> String {
    v.label().expect("discretized").to_string()
}

/// Every action rule reachable by pairing a class-0 and a class-1
/// classification rule, found by counting each combination of attributes
/// and values directly.
pub fn brute_force_action_rules(
    table: &CaseTable,
    min_support: f64,
    min_confidence: f64,
    max_len: usize,
) -> Vec<PlainRule> {
    let n_attrs = table.schema.len();
    let n = table.len() as f64;
    let mut out = Vec::new();
    for mask in 1u32..(1 << n_attrs) {
        let attrs: Vec<usize> = (0..n_attrs).filter(|a| mask & (1 << a) != 0).collect();
        if attrs.len() > max_len || !attrs.iter().any(|&a| table.schema[a].controllable) {
            continue;
        }
        // value tuple -> (rows, rows with outcome 0, rows with outcome 1)
        let mut counts: BTreeMap<Vec<String>, (usize, usize, usize)> = BTreeMap::new();
        for row in &table.rows {
            let key = attrs.iter().map(|&a| label(&row.features[a])).collect();
            let e = counts.entry(key).or_default();
            e.0 += 1;
            if row.outcome == 0 {
                e.1 += 1;
            } else {
                e.2 += 1;
            }
        }
        for (from, &(rows0, neg, _)) in &counts {
            for (to, &(rows1, _, pos)) in &counts {
                let compatible = attrs.iter().enumerate().all(|(i, &a)| {
                    if table.schema[a].controllable {
                        from[i] != to[i]
                    } else {
                        from[i] == to[i]
                    }
                });
                if !compatible {
                    continue;
                }
                let (s0, s1) = (neg as f64 / n, pos as f64 / n);
                let (c0, c1) = (neg as f64 / rows0 as f64, pos as f64 / rows1 as f64);
                let support = s0.min(s1);
                let confidence = c0 * c1;
                if s0 < min_support
                    || s1 < min_support
                    || c0 < min_confidence
                    || c1 < min_confidence
                {
                    continue;
                }
                if confidence < min_confidence {
                    continue;
                }
                let terms: BTreeMap<String, (String, String)> = attrs
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        (
                            table.schema[a].name.clone(),
                            (from[i].clone(), to[i].clone()),
                        )
                    })
                    .collect();
                out.push((terms, support, confidence));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// A random fully categorical table with 2 to 6 attributes (at least one
/// controllable) over at most 3 labels each.
pub fn random_rule_table(rng: &mut ChaCha8Rng) -> CaseTable {
    let n_attrs = rng.random_range(2..=6);
    let n_rows = rng.random_range(1..=100);
    let mut schema: Vec<AttributeSchema> = (0..n_attrs)
        .map(|a| {
            let s = AttributeSchema::categorical(format!("a{a}"));
            if rng.random_bool(0.4) {
                s.controllable()
            } else {
                s
            }
        })
        .collect();
    if !schema.iter().any(|s| s.controllable) {
        let a = rng.random_range(0..n_attrs);
        schema[a].controllable = true;
    }
    let arity: Vec<usize> = (0..n_attrs).map(|_| rng.random_range(1..=3)).collect();
    let positive_rate = rng.random_range(0.1..0.9);
    let rows = (0..n_rows)
        .map(|i| CaseRecord {
            case_id: format!("r{i}"),
            features: arity
                .iter()
                .map(|&k| Value::Label(["p", "q", "r"][rng.random_range(0..k)].to_string()))
                .collect(),
            outcome: u8::from(rng.random_bool(positive_rate)),
        })
        .collect();
    CaseTable {
        schema,
        outcome_name: "y".into(),
        rows,
        bins: BTreeMap::new(),
        warnings: vec![],
    }
}

/// How an oracle candidate routes rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Route {
    AtMost(f64),
    Is(String),
}

#[derive(Debug, Clone)]
pub struct OracleSplit {
    pub attribute: String,
    pub route: Route,
    pub gain: f64,
    pub score: f64,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    nt: u64,
    nc: u64,
    pt: u64,
    pc: u64,
}

fn q(x: u64) -> BigRational {
    BigRational::from_integer(x.into())
}

fn qf(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn sq(x: &BigRational) -> BigRational {
    x * x
}

/// Two-point divergence `D((p, 1-p) : (r, 1-r))` in exact arithmetic.
fn divergence_exact(p: &BigRational, r: &BigRational, kind: DivergenceKind) -> BigRational {
    let one = BigRational::one();
    match kind {
        DivergenceKind::Euclid => sq(&(p - r)) * q(2),
        DivergenceKind::ChiSq => {
            let mut total = BigRational::zero();
            for (a, b) in [(p.clone(), r.clone()), (&one - p, &one - r)] {
                if a != b {
                    total += sq(&(&a - &b)) / b;
                }
            }
            total
        }
        DivergenceKind::Kl => unreachable!("exact path is only used for polynomial kinds"),
    }
}

fn gini_exact(a: &BigRational) -> BigRational {
    let one = BigRational::one();
    &one - sq(a) - sq(&(&one - a))
}

fn plogp(p: f64, r: f64) -> f64 {
    if p > 0.0 {
        p * (p / r).ln() / std::f64::consts::LN_2
    } else {
        0.0
    }
}

fn kl(p: f64, r: f64) -> f64 {
    plogp(p, r) + plogp(1.0 - p, 1.0 - r)
}

fn entropy(a: f64) -> f64 {
    -(plogp(a, 1.0) + plogp(1.0 - a, 1.0))
}

/// Gain and normalized gain of a root split with the given tallies, root
/// probabilities smoothed toward the pooled rate. Both sides of the split
/// hold treated and control rows.
fn score(parent: Tally, left: Tally, right: Tally, n_reg: f64, kind: DivergenceKind) -> (f64, f64) {
    if kind == DivergenceKind::Kl {
        let pooled = (parent.pt + parent.pc) as f64 / (parent.nt + parent.nc) as f64;
        let smooth =
            |pos: u64, n: u64, prior: f64| (pos as f64 + n_reg * prior) / (n as f64 + n_reg);
        let (root_t, root_c) = (
            smooth(parent.pt, parent.nt, pooled),
            smooth(parent.pc, parent.nc, pooled),
        );
        let child = |t: Tally| kl(smooth(t.pt, t.nt, root_t), smooth(t.pc, t.nc, root_c));
        let n = (parent.nt + parent.nc) as f64;
        let gain = (left.nt + left.nc) as f64 / n * child(left)
            + (right.nt + right.nc) as f64 / n * child(right)
            - kl(root_t, root_c);
        let share = parent.nt as f64 / n;
        let a = left.nt as f64 / parent.nt as f64;
        let b = left.nc as f64 / parent.nc as f64;
        let i = entropy(share) * kl(a, b) + share * entropy(a) + (1.0 - share) * entropy(b) + 0.5;
        return (gain, gain / i);
    }
    let k = qf(n_reg);
    let pooled = BigRational::new(
        (parent.pt + parent.pc).into(),
        (parent.nt + parent.nc).into(),
    );
    let smooth = |pos: u64, n: u64, prior: &BigRational| (q(pos) + &k * prior) / (q(n) + &k);
    let root_t = smooth(parent.pt, parent.nt, &pooled);
    let root_c = smooth(parent.pc, parent.nc, &pooled);
    let child = |t: Tally| {
        divergence_exact(
            &smooth(t.pt, t.nt, &root_t),
            &smooth(t.pc, t.nc, &root_c),
            kind,
        )
    };
    let n = q(parent.nt + parent.nc);
    let gain = q(left.nt + left.nc) / &n * child(left) + q(right.nt + right.nc) / &n * child(right)
        - divergence_exact(&root_t, &root_c, kind);
    let share = q(parent.nt) / &n;
    let a = BigRational::new(left.nt.into(), parent.nt.into());
    let b = BigRational::new(left.nc.into(), parent.nc.into());
    let i = gini_exact(&share) * divergence_exact(&a, &b, kind)
        + &share * gini_exact(&a)
        + (BigRational::one() - &share) * gini_exact(&b)
        + BigRational::new(1.into(), 2.into());
    let normalized = &gain / i;
    (gain.to_f64().unwrap(), normalized.to_f64().unwrap())
}

/// Every admissible root split of `rows` (row, treated) over `features`,
/// scored from scratch. Euclid and ChiSq scores are exact rationals rounded
/// once at the end.
pub fn all_root_splits(
    table: &CaseTable,
    rows: &[(usize, bool)],
    features: &[&str],
    min_treated: usize,
    n_reg: f64,
    kind: DivergenceKind,
) -> Vec<OracleSplit> {
    let tally = |pick: &dyn Fn(usize) -> bool| {
        let mut t = Tally::default();
        for &(r, treated) in rows.iter().filter(|(r, _)| pick(*r)) {
            let y = u64::from(table.rows[r].outcome);
            if treated {
                t.nt += 1;
                t.pt += y;
            } else {
                t.nc += 1;
                t.pc += y;
            }
        }
        t
    };
    let parent = tally(&|_| true);
    let min_treated = min_treated.max(1) as u64;
    let mut out = Vec::new();
    for &name in features {
        let a = table.attribute_index(name).unwrap();
        let column = |r: usize| &table.rows[r].features[a];
        let numeric = table.schema[a].kind == AttributeKind::Numeric
            && rows.iter().any(|&(r, _)| column(r).numeric().is_some());
        let routes: Vec<Route> = if numeric {
            let distinct: BTreeSet<u64> = rows
                .iter()
                .filter_map(|&(r, _)| column(r).numeric())
                .map(f64::to_bits)
                .collect();
            let mut values: Vec<f64> = distinct.into_iter().map(f64::from_bits).collect();
            values.sort_by(f64::total_cmp);
            values
                .windows(2)
                .map(|w| Route::AtMost((w[0] + w[1]) / 2.0))
                .collect()
        } else {
            let labels: BTreeSet<String> = rows
                .iter()
                .map(|&(r, _)| column(r).label().unwrap().to_string())
                .collect();
            labels.into_iter().map(Route::Is).collect()
        };
        for route in routes {
            let goes_left = |r: usize| match (&route, column(r)) {
                (Route::AtMost(t), v) => v.numeric().is_some_and(|x| x <= *t),
                (Route::Is(l), v) => v.label() == Some(l.as_str()),
            };
            let left = tally(&goes_left);
            let right = tally(&|r| !goes_left(r));
            if left.nt < min_treated || right.nt < min_treated || left.nc == 0 || right.nc == 0 {
                continue;
            }
            let (gain, score) = score(parent, left, right, n_reg, kind);
            out.push(OracleSplit {
                attribute: name.to_string(),
                route,
                gain,
                score,
            });
        }
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
