//! Acceptance criteria, one verdict line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use causal_rules::action_rules::{self, mine_action_rules, RuleParams};
use causal_rules::event_log::{AttributeSchema, CaseRecord, CaseTable, Value};
use causal_rules::pipeline::{self, PipelineConfig};
use causal_rules::ranking::{net_value, rank, CostModel, CostModels};
use causal_rules::synthetic::{self, SyntheticScenario, CONFOUNDER, SUBGROUP, TREATMENT};
use causal_rules::uplift::{
    assign_groups, build_tree, divergence, extract_segments, normalization, split_penalty,
    DivergenceKind, GroupCounts, NodeStats, SplitTest, TreeParams,
};
use causal_rules::{ActionRule, AtomicActionTerm, Treatment};

use common::{
    all_root_splits, brute_force_action_rules, plain, random_rule_table, rel_close, Route,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

const KINDS: [DivergenceKind; 3] = [
    DivergenceKind::Kl,
    DivergenceKind::Euclid,
    DivergenceKind::ChiSq,
];

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn divergence_axioms() -> Verdict {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let counts =
        (0usize..500, 0.0f64..=1.0).prop_map(|(n, f)| (n, (n as f64 * f).floor() as usize));
    let strategy = (
        counts.clone(),
        counts,
        0.001f64..0.999,
        0.001f64..0.999,
        0.1f64..1000.0,
        any::<bool>(),
    );
    let result = runner.run(
        &strategy,
        |((nt, pt), (nc, pc), prior_t, prior_c, n_reg, same)| {
            let g = GroupCounts {
                n_treat: nt,
                n_ctrl: nc,
                pos_treat: pt,
                pos_ctrl: pc,
            };
            let s = NodeStats::smoothed(g, prior_t, prior_c, n_reg);
            let p = s.p_treat;
            let q = if same { p } else { s.p_ctrl };
            for kind in KINDS {
                let d = divergence([p, 1.0 - p], [q, 1.0 - q], kind).unwrap();
                prop_assert!(d >= 0.0, "{kind:?}({p}, {q}) = {d}");
                prop_assert_eq!(d == 0.0, p == q, "{:?}({}, {}) = {}", kind, p, q, d);
            }
            Ok(())
        },
    );
    let elapsed = start.elapsed();
    match result {
        Ok(()) => verdict(
            within(elapsed, 5),
            format!(
                "10000 smoothed cases x 3 kinds in {:.2}s",
                elapsed.as_secs_f64()
            ),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn hand_values() -> Verdict {
    let p = [0.75, 0.25];
    let q = [0.25, 0.75];
    let kl = divergence(p, q, DivergenceKind::Kl).unwrap();
    let euclid = divergence(p, q, DivergenceKind::Euclid).unwrap();
    let half = GroupCounts {
        n_treat: 5,
        n_ctrl: 5,
        ..Default::default()
    };
    let i = normalization(&half, &half, DivergenceKind::Kl);
    verdict(
        (kl - 0.79248).abs() <= 1e-5 && euclid == 0.5 && i == 1.5,
        format!("KL = {kl:.6}, Euclid = {euclid}, I(balanced) = {i}"),
    )
}

/// A table with a three-valued controllable `t` and up to three features,
/// numeric or categorical, some values missing.
fn random_split_table(rng: &mut ChaCha8Rng) -> CaseTable {
    let n_rows = rng.random_range(2..=32);
    let n_features = rng.random_range(1..=3);
    let mut schema = vec![AttributeSchema::categorical("t").controllable()];
    let numeric: Vec<bool> = (0..n_features).map(|_| rng.random_bool(0.5)).collect();
    for (i, &is_num) in numeric.iter().enumerate() {
        let name = format!("f{i}");
        schema.push(if is_num {
            AttributeSchema::numeric(name)
        } else {
            AttributeSchema::categorical(name)
        });
    }
    let rate = rng.random_range(0.1..0.9);
    let rows = (0..n_rows)
        .map(|r| {
            let mut features = vec![Value::Label(["a", "b", "c"][rng.random_range(0..3)].into())];
            for &is_num in &numeric {
                features.push(if rng.random_bool(0.1) {
                    Value::Missing
                } else if is_num {
                    Value::Number(rng.random_range(0..6) as f64 / 2.0)
                } else {
                    Value::Label(["u", "v", "w"][rng.random_range(0..3)].into())
                });
            }
            CaseRecord {
                case_id: r.to_string(),
                features,
                outcome: u8::from(rng.random_bool(rate)),
            }
        })
        .collect();
    CaseTable {
        schema,
        outcome_name: "y".into(),
        rows,
        bins: Default::default(),
        warnings: vec![],
    }
}

fn split_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let treatment = Treatment::new(vec![AtomicActionTerm::change("t", "a", "b")]).unwrap();
    let (mut tables, mut splits, mut leaves) = (0, 0, 0);
    while tables < 200 {
        let table = random_split_table(&mut rng);
        let Ok(assignment) = assign_groups(&table, &treatment) else {
            continue;
        };
        tables += 1;
        let params = TreeParams {
            max_depth: 1,
            min_samples_split: 2,
            min_samples_treatment: rng.random_range(0..=2),
            n_reg: [0.5, 1.0, 2.0, 10.0, 100.0][rng.random_range(0..5)],
            divergence: KINDS[rng.random_range(0..3)],
        };
        let tree = build_tree(&table, &treatment, &assignment, &params).unwrap();
        let rows: Vec<(usize, bool)> = assignment
            .treated
            .iter()
            .map(|&r| (r, true))
            .chain(assignment.control.iter().map(|&r| (r, false)))
            .collect();
        let features: Vec<&str> = table.schema[1..].iter().map(|a| a.name.as_str()).collect();
        let candidates = all_root_splits(
            &table,
            &rows,
            &features,
            params.min_samples_treatment,
            params.n_reg,
            params.divergence,
        );
        let best = candidates
            .iter()
            .map(|c| c.score)
            .fold(f64::NEG_INFINITY, f64::max);
        match &tree.root.split {
            None if best <= 1e-12 => leaves += 1,
            None => return Verdict::Fail(format!("table {tables}: no split, oracle best {best}")),
            Some(split) => {
                let chosen = candidates.iter().find(|c| {
                    c.attribute == split.attribute
                        && match (&c.route, &split.test) {
                            (Route::AtMost(a), SplitTest::Threshold(b)) => a == b,
                            (Route::Is(a), SplitTest::Category(b)) => a == b,
                            _ => false,
                        }
                });
                let Some(chosen) = chosen else {
                    return Verdict::Fail(format!(
                        "table {tables}: split {split:?} is not admissible"
                    ));
                };
                if !(rel_close(split.normalized_gain, best, 1e-9)
                    && rel_close(chosen.score, best, 1e-9)
                    && rel_close(split.gain, chosen.gain, 1e-9))
                {
                    return Verdict::Fail(format!(
                        "table {tables}: tree {} vs oracle best {best} ({:?} {:?})",
                        split.normalized_gain, params.divergence, split.test
                    ));
                }
                splits += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        within(elapsed, 30),
        format!(
            "200 tables ({splits} split, {leaves} unsplit) agree within 1e-9 in {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn synthetic_table(scenario: &SyntheticScenario) -> CaseTable {
    let (log, _) = synthetic::generate(scenario).unwrap();
    pipeline::encode(&pipeline::simulation_config(), &log).unwrap()
}

fn treatment_arm() -> Treatment {
    Treatment::new(vec![AtomicActionTerm::change(TREATMENT, "0", "1")]).unwrap()
}

/// Distinct labels of `attribute` over the rows matching `pick`.
fn labels_where(
    table: &CaseTable,
    attribute: &str,
    pick: impl Fn(usize) -> bool,
) -> BTreeSet<String> {
    (0..table.len())
        .filter(|&r| pick(r))
        .map(|r| {
            table
                .get(r, attribute)
                .unwrap()
                .label()
                .unwrap()
                .to_string()
        })
        .collect()
}

const PLANTED_SEED: u64 = 20_240_601;

fn planted_recovery() -> Verdict {
    let start = Instant::now();
    let table = synthetic_table(&SyntheticScenario::planted(20_000, PLANTED_SEED));
    let treatment = treatment_arm();
    let assignment = assign_groups(&table, &treatment).unwrap();
    let tree = build_tree(&table, &treatment, &assignment, &TreeParams::default()).unwrap();
    let segments = extract_segments(&tree, &table, 0.15).unwrap();
    let elapsed = start.elapsed();
    let [segment] = segments.as_slice() else {
        return Verdict::Fail(format!("{} segments with uplift >= 0.15", segments.len()));
    };
    let inside = labels_where(&table, SUBGROUP, |r| segment.matches(&table, r));
    let covered = (0..table.len())
        .filter(|&r| table.get(r, SUBGROUP).unwrap().label() == Some("1"))
        .all(|r| segment.matches(&table, r));
    let on_subgroup = segment.conditions.iter().all(|c| c.attribute == SUBGROUP)
        && !segment.conditions.is_empty();
    verdict(
        on_subgroup
            && inside == BTreeSet::from(["1".to_string()])
            && covered
            && (segment.uplift - 0.3).abs() <= 0.05
            && within(elapsed, 60),
        format!(
            "one segment \"{}\" with uplift {:.4} in {:.2}s",
            segment.predicate,
            segment.uplift,
            elapsed.as_secs_f64()
        ),
    )
}

/// Largest drop of `I` along a grid of treated/control split disparities
/// with the pooled fraction sent left held fixed; negative means monotone.
fn worst_monotonicity_violation(rng: &mut ChaCha8Rng) -> f64 {
    let kind = KINDS[rng.random_range(0..3)];
    let share: f64 = rng.random_range(0.05..0.95);
    let pooled: f64 = rng.random_range(0.05..0.95);
    // treated fraction left = pooled + (1 - share)·d, control = pooled - share·d
    let d_max = ((1.0 - pooled) / (1.0 - share)).min(pooled / share) * 0.999;
    let d_min = -((pooled / (1.0 - share)).min((1.0 - pooled) / share)) * 0.999;
    let at = |d: f64| {
        split_penalty(
            share,
            Some(pooled + (1.0 - share) * d),
            Some(pooled - share * d),
            kind,
        )
    };
    const STEPS: usize = 50;
    let mut worst = f64::NEG_INFINITY;
    for edge in [d_max, d_min] {
        let mut prev = at(0.0);
        for k in 1..=STEPS {
            let d = edge * k as f64 / STEPS as f64;
            let cur = at(d);
            worst = worst.max((prev - cur) / prev.abs());
            prev = cur;
        }
    }
    worst
}

fn confounding_adjustment() -> Verdict {
    let scenario = SyntheticScenario::confounded(100_000, 11);
    let truth = synthetic::ground_truth(&scenario).unwrap();
    let bias = truth
        .cate
        .values()
        .map(|c| (truth.naive_uplift - c).abs())
        .fold(f64::INFINITY, f64::min);
    let table = synthetic_table(&scenario);
    let treatment = treatment_arm();
    let assignment = assign_groups(&table, &treatment).unwrap();
    let rate = |rows: &[usize]| {
        rows.iter().filter(|&&r| table.rows[r].outcome == 1).count() as f64 / rows.len() as f64
    };
    let sample_naive = rate(&assignment.treated) - rate(&assignment.control);
    let tree = build_tree(&table, &treatment, &assignment, &TreeParams::default()).unwrap();
    let leaves = extract_segments(&tree, &table, f64::NEG_INFINITY).unwrap();
    let mut worst_leaf: f64 = 0.0;
    for leaf in &leaves {
        let strata = labels_where(&table, CONFOUNDER, |r| leaf.matches(&table, r));
        if strata.len() != 1 {
            return Verdict::Fail(format!(
                "leaf \"{}\" mixes confounder strata",
                leaf.predicate
            ));
        }
        let l: usize = strata.first().unwrap().parse().unwrap();
        worst_leaf = worst_leaf.max((leaf.uplift - scenario.stratum_effect(l)).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let worst_drop = (0..1000)
        .map(|_| worst_monotonicity_violation(&mut rng))
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        bias >= 0.1 && worst_leaf <= 0.05 && worst_drop <= 1e-12,
        format!(
            "naive bias {bias:.3} (sample naive {sample_naive:.3}), {} leaves, max leaf error {worst_leaf:.4}, \
             I(A) monotone on 1000 instances (worst relative drop {worst_drop:.1e})",
            leaves.len()
        ),
    )
}

fn figure_three_rule() -> ActionRule {
    ActionRule {
        antecedent: causal_rules::action_rules::ActionTerm::new(vec![
            AtomicActionTerm::stable("CreditScore", "low"),
            AtomicActionTerm::change("NoOfTerms", "[6-48]", "[97-120]"),
        ])
        .unwrap(),
        consequent: AtomicActionTerm::change("Selected", "0", "1"),
        support: 0.057,
        confidence: 0.764,
    }
}

fn action_rule_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut total_rules = 0;
    for t in 0..200 {
        let table = random_rule_table(&mut rng);
        let params = RuleParams {
            min_support: rng.random_range(0.01..0.2),
            min_confidence: rng.random_range(0.05..0.9),
            max_antecedent_len: rng.random_range(1..=4),
        };
        let mut mined: Vec<_> = mine_action_rules(&table, &params)
            .unwrap()
            .iter()
            .map(plain)
            .collect();
        mined.sort_by(|a, b| a.0.cmp(&b.0));
        let expected = brute_force_action_rules(
            &table,
            params.min_support,
            params.min_confidence,
            params.max_antecedent_len,
        );
        if mined != expected {
            return Verdict::Fail(format!(
                "table {t}: mined {} rules, oracle {}",
                mined.len(),
                expected.len()
            ));
        }
        total_rules += mined.len();
    }
    let mut first = Vec::new();
    action_rules::write_rules(&[figure_three_rule()], &mut first).unwrap();
    let back = action_rules::read_rules(first.as_slice()).unwrap();
    let mut second = Vec::new();
    action_rules::write_rules(&back, &mut second).unwrap();
    verdict(
        first == second && back == [figure_three_rule()],
        format!("200 tables, {total_rules} rules equal to brute force; reference rule file round-trips byte-exactly"),
    )
}

fn cost_model() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let n = rng.random_range(0..1_000_000usize);
        let u = rng.random_range(-1.0..=1.0);
        let model = CostModel {
            outcome_value: rng.random_range(0.0..1000.0),
            impression_cost: rng.random_range(0.0..100.0),
        };
        let got = net_value(n, u, &model);
        let same_formula = n as f64 * (u * model.outcome_value - model.impression_cost);
        let exact = BigRational::from_integer(n.into())
            * (BigRational::from_float(u).unwrap()
                * BigRational::from_float(model.outcome_value).unwrap()
                - BigRational::from_float(model.impression_cost).unwrap());
        let exact = exact.to_f64().unwrap();
        if got.to_bits() != same_formula.to_bits()
            || (got - exact).abs() > 1e-9 * exact.abs().max(1.0)
        {
            return Verdict::Fail(format!(
                "net_value({n}, {u}, {model:?}) = {got}, expected {exact}"
            ));
        }
    }

    let scenario = SyntheticScenario::planted(20_000, PLANTED_SEED);
    let table = synthetic_table(&scenario);
    let treatment = treatment_arm();
    let assignment = assign_groups(&table, &treatment).unwrap();
    let tree = build_tree(&table, &treatment, &assignment, &TreeParams::default()).unwrap();
    let segments = extract_segments(&tree, &table, f64::NEG_INFINITY).unwrap();
    let unit = CostModels::uniform(CostModel {
        outcome_value: 1.0,
        impression_cost: 0.0,
    });
    let recs = rank(&[(treatment, segments)], &unit).unwrap();
    let mut order = Vec::new();
    for r in &recs {
        let cells = labels_where(&table, SUBGROUP, |row| r.segment.matches(&table, row));
        if cells.len() != 1 {
            return Verdict::Fail(format!(
                "segment \"{}\" mixes subgroup cells",
                r.segment.predicate
            ));
        }
        let cell: u8 = cells.first().unwrap().parse().unwrap();
        order.push(synthetic::true_cate(&scenario, cell).unwrap());
    }
    verdict(
        !order.is_empty() && order.windows(2).all(|w| w[0] >= w[1]),
        format!(
            "1000 net values exact; {} ranked segments follow true effects {order:?}",
            recs.len()
        ),
    )
}

fn bpic2017() -> Verdict {
    let Some(path) = std::env::var_os("BPIC2017_PATH") else {
        return Verdict::Skip("set BPIC2017_PATH to the BPI Challenge 2017 XES log to run".into());
    };
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/bpic2017.toml");
    let mut cfg = PipelineConfig::load(&config).unwrap();
    cfg.input.path = Some(PathBuf::from(path));
    let out = tempfile::tempdir().unwrap();
    cfg.output_dir = out.path().to_path_buf();
    let start = Instant::now();
    let summary = match pipeline::run(&cfg) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("run failed: {e}")),
    };
    let elapsed = start.elapsed();
    let table = pipeline::read_case_table(&cfg).unwrap();
    let rules =
        action_rules::read_rules(std::fs::File::open(out.path().join(pipeline::RULES)).unwrap())
            .unwrap();
    let remeasured_ok = rules.iter().all(|r| {
        let (s, c) = action_rules::measure(r, &table).unwrap();
        s == r.support
            && c == r.confidence
            && s >= cfg.rules.min_support
            && c >= cfg.rules.min_confidence
    });
    let positivity_ok = summary
        .segments
        .treatments
        .iter()
        .flat_map(|t| &t.segments)
        .all(|s| s.n_treat >= 1 && s.n_ctrl >= 1);
    verdict(
        summary.cases.traces == 31_509
            && summary.cases.events == 1_202_267
            && within(elapsed, 15 * 60)
            && rules.len() >= 5
            && remeasured_ok
            && positivity_ok,
        format!(
            "{} cases / {} events in {:.0}s; {} rules, {} treatments, {} trees, {} skipped",
            summary.cases.traces,
            summary.cases.events,
            elapsed.as_secs_f64(),
            rules.len(),
            summary.treatments,
            summary.segments.treatments.len(),
            summary.segments.skipped.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("divergence axioms", divergence_axioms),
        ("hand-computed values", hand_values),
        ("split oracle", split_oracle),
        ("planted-effect recovery", planted_recovery),
        ("confounding adjustment", confounding_adjustment),
        ("action-rule oracle", action_rule_oracle),
        ("cost model", cost_model),
        ("BPIC 2017 smoke test", bpic2017),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match result {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {}. {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
