use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{sort_rules, ActionRule, ActionTerm, AtomicActionTerm, Result, RuleError};
use crate::event_log::CaseTable;

/// Thresholds for rule mining. Support and confidence are fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleParams {
    pub min_support: f64,
    pub min_confidence: f64,
    pub max_antecedent_len: usize,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            min_support: 0.03,
            min_confidence: 0.55,
            max_antecedent_len: 4,
        }
    }
}

impl RuleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("min_support", self.min_support),
            ("min_confidence", self.min_confidence),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(RuleError::Threshold { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: String,
    pub value: String,
}

/// `conditions ⟹ class`, conditions sorted in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRule {
    pub conditions: Vec<Condition>,
    pub class: u8,
    pub support: f64,
    pub confidence: f64,
}

#[derive(Clone)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn empty(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn and(&self, other: &BitSet) -> BitSet {
        BitSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn and_count(&self, other: &BitSet) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

struct EncodedAttr {
    controllable: bool,
    labels: Vec<String>,
    covers: Vec<BitSet>,
}

/// (attribute, label) indices.
type Item = (usize, usize);

/// Label bitsets per (attribute, value) plus the class bitsets.
struct Encoded {
    n: usize,
    names: Vec<String>,
    attrs: Vec<EncodedAttr>,
    classes: [BitSet; 2],
}

impl Encoded {
    fn new(table: &CaseTable) -> Result<Self> {
        if table.is_empty() {
            return Err(RuleError::EmptyTable);
        }
        if let Some(name) = table.first_undiscretized() {
            return Err(RuleError::NotDiscretized(name.to_string()));
        }
        let n = table.len();
        let attrs = table
            .schema
            .iter()
            .enumerate()
            .map(|(a, schema)| {
                let mut by_label: BTreeMap<&str, BitSet> = BTreeMap::new();
                for (i, row) in table.rows.iter().enumerate() {
                    let label = row.features[a].label().expect("checked above");
                    by_label
                        .entry(label)
                        .or_insert_with(|| BitSet::empty(n))
                        .insert(i);
                }
                let (labels, covers) = by_label
                    .into_iter()
                    .map(|(l, c)| (l.to_string(), c))
                    .unzip();
                EncodedAttr {
                    controllable: schema.controllable,
                    labels,
                    covers,
                }
            })
            .collect();
        let mut classes = [BitSet::empty(n), BitSet::empty(n)];
        for (i, row) in table.rows.iter().enumerate() {
            classes[usize::from(row.outcome == 1)].insert(i);
        }
        Ok(Encoded {
            n,
            names: table.schema.iter().map(|a| a.name.clone()).collect(),
            attrs,
            classes,
        })
    }

    fn fraction(&self, count: usize) -> f64 {
        count as f64 / self.n as f64
    }
}

/// A mined rule in encoded form: (attribute, value) items in schema order.
#[derive(Debug, Clone)]
struct RawRule {
    items: Vec<Item>,
    support: f64,
    confidence: f64,
}

struct Miner<'a> {
    enc: &'a Encoded,
    class: &'a BitSet,
    params: &'a RuleParams,
    out: Vec<RawRule>,
}

impl Miner<'_> {
    fn visit(&mut self, items: &mut Vec<Item>, cover: &BitSet, hits: usize, next_attr: usize) {
        let matched = cover.count();
        let confidence = hits as f64 / matched as f64;
        if confidence >= self.params.min_confidence {
            self.out.push(RawRule {
                items: items.clone(),
                support: self.enc.fraction(hits),
                confidence,
            });
        }
        if items.len() >= self.params.max_antecedent_len {
            return;
        }
        for a in next_attr..self.enc.attrs.len() {
            for v in 0..self.enc.attrs[a].labels.len() {
                let narrowed = cover.and(&self.enc.attrs[a].covers[v]);
                let narrowed_hits = narrowed.and_count(self.class);
                // Support of (conditions ∧ class) only shrinks as conditions
                // are added, so pruning here loses nothing.
                if narrowed_hits == 0 || self.enc.fraction(narrowed_hits) < self.params.min_support
                {
                    continue;
                }
                items.push((a, v));
                self.visit(items, &narrowed, narrowed_hits, a + 1);
                items.pop();
            }
        }
    }
}

fn mine_encoded(enc: &Encoded, class: u8, params: &RuleParams) -> Vec<RawRule> {
    let class_bits = &enc.classes[usize::from(class == 1)];
    let mut miner = Miner {
        enc,
        class: class_bits,
        params,
        out: Vec::new(),
    };
    let all = BitSet::full(enc.n);
    let hits = all.and_count(class_bits);
    if hits > 0 && enc.fraction(hits) >= params.min_support {
        miner.visit(&mut Vec::new(), &all, hits, 0);
    }
    miner.out
}

/// Every conjunction of `attribute = value` conditions (up to
/// `max_antecedent_len` long, the empty conjunction included) whose support
/// and confidence for `target_class` reach the minima.
///
/// Support is the fraction of all rows matching the conditions and the
/// class; confidence is that count over the rows matching the conditions.
pub fn mine_classification_rules(
    table: &CaseTable,
    target_class: u8,
    params: &RuleParams,
) -> Result<Vec<ClassificationRule>> {
    params.validate()?;
    let enc = Encoded::new(table)?;
    Ok(mine_encoded(&enc, target_class, params)
        .into_iter()
        .map(|r| ClassificationRule {
            conditions: r
                .items
                .iter()
                .map(|&(a, v)| Condition {
                    attribute: enc.names[a].clone(),
                    value: enc.attrs[a].labels[v].clone(),
                })
                .collect(),
            class: target_class,
            support: r.support,
            confidence: r.confidence,
        })
        .collect())
}

/// Splits a rule's items into its uncontrollable and controllable parts.
fn partition(enc: &Encoded, items: &[Item]) -> (Vec<Item>, Vec<Item>) {
    items.iter().partition(|(a, _)| !enc.attrs[*a].controllable)
}

/// Mines action rules `stable ∧ changes ⟹ (outcome: 0 → 1)`.
///
/// A class-0 rule and a class-1 rule are paired when their uncontrollable
/// conditions are identical and their controllable conditions cover the same
/// non-empty attribute set with a different value on every attribute.
pub fn mine_action_rules(table: &CaseTable, params: &RuleParams) -> Result<Vec<ActionRule>> {
    params.validate()?;
    let enc = Encoded::new(table)?;
    if !enc.attrs.iter().any(|a| a.controllable) {
        return Ok(Vec::new());
    }
    let (negative, positive) = rayon::join(
        || mine_encoded(&enc, 0, params),
        || mine_encoded(&enc, 1, params),
    );

    type Key = (Vec<Item>, Vec<usize>);
    let mut targets: HashMap<Key, Vec<(Vec<usize>, &RawRule)>> = HashMap::new();
    for r1 in &positive {
        let (stable, flexible) = partition(&enc, &r1.items);
        if flexible.is_empty() {
            continue;
        }
        let (attrs, values): (Vec<usize>, Vec<usize>) = flexible.into_iter().unzip();
        targets
            .entry((stable, attrs))
            .or_default()
            .push((values, r1));
    }

    let mut rules = Vec::new();
    for r0 in &negative {
        let (stable, flexible) = partition(&enc, &r0.items);
        if flexible.is_empty() {
            continue;
        }
        let (attrs, from): (Vec<usize>, Vec<usize>) = flexible.into_iter().unzip();
        let key = (stable, attrs);
        let Some(candidates) = targets.get(&key) else {
            continue;
        };
        for (to, r1) in candidates {
            if from.iter().zip(to).any(|(f, t)| f == t) {
                continue;
            }
            let support = r0.support.min(r1.support);
            let confidence = r0.confidence * r1.confidence;
            if support < params.min_support || confidence < params.min_confidence {
                continue;
            }
            let (stable, attrs) = &key;
            let mut terms: Vec<AtomicActionTerm> = stable
                .iter()
                .map(|&(a, v)| AtomicActionTerm::stable(&enc.names[a], &enc.attrs[a].labels[v]))
                .collect();
            terms.extend(attrs.iter().zip(from.iter().zip(to)).map(|(&a, (&f, &t))| {
                AtomicActionTerm::change(
                    &enc.names[a],
                    &enc.attrs[a].labels[f],
                    &enc.attrs[a].labels[t],
                )
            }));
            rules.push(ActionRule {
                antecedent: ActionTerm::new(terms)?,
                consequent: AtomicActionTerm::change(&table.outcome_name, "0", "1"),
                support,
                confidence,
            });
        }
    }
    sort_rules(&mut rules);
    rules.dedup_by(|a, b| a.antecedent == b.antecedent);
    Ok(rules)
}

/// Recomputes support and confidence of `rule` on `table` from scratch.
pub fn measure(rule: &ActionRule, table: &CaseTable) -> Result<(f64, f64)> {
    if table.is_empty() {
        return Err(RuleError::EmptyTable);
    }
    if rule.consequent.attribute != table.outcome_name {
        return Err(RuleError::UnknownAttribute(
            rule.consequent.attribute.clone(),
        ));
    }
    let terms = rule
        .antecedent
        .terms()
        .iter()
        .map(|t| {
            table
                .attribute_index(&t.attribute)
                .map(|a| (a, t))
                .ok_or_else(|| RuleError::UnknownAttribute(t.attribute.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut from_rows, mut from_neg, mut to_rows, mut to_pos) = (0usize, 0usize, 0usize, 0usize);
    for (i, row) in table.rows.iter().enumerate() {
        let mut matches_from = true;
        let mut matches_to = true;
        for &(a, term) in &terms {
            let label = table
                .value(i, a)
                .label()
                .ok_or_else(|| RuleError::NotDiscretized(term.attribute.clone()))?;
            matches_from &= label == term.from;
            matches_to &= label == term.to;
        }
        if matches_from {
            from_rows += 1;
            from_neg += usize::from(row.outcome == 0);
        }
        if matches_to {
            to_rows += 1;
            to_pos += usize::from(row.outcome == 1);
        }
    }
    let n = table.len() as f64;
    let ratio = |k: usize, m: usize| if m == 0 { 0.0 } else { k as f64 / m as f64 };
    let support = (from_neg as f64 / n).min(to_pos as f64 / n);
    let confidence = ratio(from_neg, from_rows) * ratio(to_pos, to_rows);
    Ok((support, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{AttributeSchema, CaseRecord, Value};

    /// {(S=x,F=a,Y=0)×3, (S=x,F=b,Y=1)×3, (S=y,F=a,Y=1)×1, (S=y,F=b,Y=0)×1}
    pub(crate) fn eight_rows() -> CaseTable {
        let mut rows = Vec::new();
        let mut push = |s: &str, f: &str, y: u8, times: usize| {
            for _ in 0..times {
                rows.push(CaseRecord {
                    case_id: format!("c{}", rows.len()),
                    features: vec![Value::Label(s.into()), Value::Label(f.into())],
                    outcome: y,
                });
            }
        };
        push("x", "a", 0, 3);
        push("x", "b", 1, 3);
        push("y", "a", 1, 1);
        push("y", "b", 0, 1);
        CaseTable {
            schema: vec![
                AttributeSchema::categorical("S"),
                AttributeSchema::categorical("F").controllable(),
            ],
            outcome_name: "Y".into(),
            rows,
            bins: Default::default(),
            warnings: vec![],
        }
    }

    fn params(s: f64, c: f64) -> RuleParams {
        RuleParams {
            min_support: s,
            min_confidence: c,
            max_antecedent_len: 4,
        }
    }

    #[test]
    fn all_positive_yields_empty_condition_rule() {
        let mut t = eight_rows();
        t.rows.iter_mut().for_each(|r| r.outcome = 1);
        let rules = mine_classification_rules(&t, 1, &params(1.0, 1.0)).unwrap();
        assert_eq!(rules.len(), 1);
        assert!(rules[0].conditions.is_empty());
        assert_eq!((rules[0].support, rules[0].confidence), (1.0, 1.0));
    }

    #[test]
    fn eight_row_classification_rule() {
        let rules = mine_classification_rules(&eight_rows(), 1, &params(0.1, 0.9)).unwrap();
        let sx_fb = rules
            .iter()
            .find(|r| {
                r.conditions
                    == [
                        Condition {
                            attribute: "S".into(),
                            value: "x".into(),
                        },
                        Condition {
                            attribute: "F".into(),
                            value: "b".into(),
                        },
                    ]
            })
            .expect("rule {S=x, F=b}");
        assert_eq!(sx_fb.support, 3.0 / 8.0);
        assert_eq!(sx_fb.confidence, 1.0);
        let strict = mine_classification_rules(&eight_rows(), 1, &params(0.5, 0.1)).unwrap();
        assert!(strict.iter().all(|r| r.conditions.is_empty()));
    }

    #[test]
    fn eight_row_action_rule() {
        let rules = mine_action_rules(&eight_rows(), &params(0.3, 0.6)).unwrap();
        assert_eq!(rules.len(), 1);
        let r = &rules[0];
        assert_eq!(r.to_string(), "[(S: x) ∧ (F: a → b)] ⟹ [Y: 0 → 1]");
        assert_eq!(r.support, 0.375);
        assert_eq!(r.confidence, 1.0);
        assert_eq!(measure(r, &eight_rows()).unwrap(), (0.375, 1.0));
    }

    #[test]
    fn no_controllable_attributes() {
        let mut t = eight_rows();
        t.schema[1].controllable = false;
        assert!(mine_action_rules(&t, &params(0.01, 0.01))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn errors() {
        let mut t = eight_rows();
        t.rows.clear();
        assert!(matches!(
            mine_classification_rules(&t, 1, &params(0.1, 0.1)),
            Err(RuleError::EmptyTable)
        ));
        let rule = &mine_action_rules(&eight_rows(), &params(0.3, 0.6)).unwrap()[0];
        assert!(matches!(measure(rule, &t), Err(RuleError::EmptyTable)));
        let mut t = eight_rows();
        t.rows[0].features[0] = Value::Number(1.0);
        assert!(matches!(
            mine_action_rules(&t, &params(0.1, 0.1)),
            Err(RuleError::NotDiscretized(_))
        ));
        let mut t = eight_rows();
        t.schema[0].name = "Other".into();
        assert!(matches!(
            measure(rule, &t),
            Err(RuleError::UnknownAttribute(_))
        ));
        assert!(matches!(
            mine_action_rules(&eight_rows(), &params(0.0, 0.5)),
            Err(RuleError::Threshold { .. })
        ));
    }
}
