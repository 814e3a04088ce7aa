//! Cross-checks against a brute-force model written from the rule semantics
//! alone: parent walks for distances, no precomputed chains, no shared code
//! with the library's decision point.

use std::collections::{BTreeMap, BTreeSet};

use acmut::fixtures::{faculty, random_policy, RandomPolicyConfig};
use acmut::mutation::{
    census, classify_mutants, generate_all_mutants, MutantTarget, OperatorKind,
};
use acmut::pdp::{decision_table, derive_concrete_rules, request_universe};
use acmut::testgen::{gen_combined, score_suite};
use acmut::{EntityKind, Execution, Modality, Policy, Request, Rule};

struct Model {
    role_parent: BTreeMap<String, Option<String>>,
    action_parent: BTreeMap<String, Option<String>>,
    contexts: BTreeSet<String>,
    rules: Vec<Rule>,
    default: Modality,
}

impl Model {
    fn of(p: &Policy) -> Self {
        let parents = |kind| {
            p.entities
                .iter()
                .filter(|e| e.kind == kind)
                .map(|e| (e.name.clone(), e.parent.clone()))
                .collect()
        };
        Model {
            role_parent: parents(EntityKind::Role),
            action_parent: parents(EntityKind::Action),
            contexts: p
                .entities
                .iter()
                .filter(|e| e.kind == EntityKind::Context)
                .map(|e| e.name.clone())
                .collect(),
            rules: p.rules.clone(),
            default: p.default_decision,
        }
    }

    fn distance(h: &BTreeMap<String, Option<String>>, low: &str, high: &str) -> Option<usize> {
        let mut cur = Some(low.to_owned());
        let mut d = 0;
        while let Some(x) = cur {
            if x == high {
                return Some(d);
            }
            cur = h[&x].clone();
            d += 1;
        }
        None
    }

    fn universe(&self) -> Vec<Request> {
        let leaves: Vec<&String> = self
            .action_parent
            .keys()
            .filter(|a| !self.action_parent.values().any(|p| p.as_ref() == Some(*a)))
            .collect();
        let mut out = Vec::new();
        for r in self.role_parent.keys() {
            for a in &leaves {
                for c in &self.contexts {
                    out.push(Request::new(r.clone(), (*a).clone(), c.clone()));
                }
            }
        }
        out
    }

    /// (outcome, winning rule id)
    fn decide(&self, q: &Request) -> (Modality, Option<String>) {
        let best = self
            .rules
            .iter()
            .filter(|r| r.context == q.context)
            .filter_map(|r| {
                let dr = Self::distance(&self.role_parent, &q.role, &r.role)?;
                let da = Self::distance(&self.action_parent, &q.action, &r.action)?;
                let perm_last = r.modality == Modality::Permission;
                Some((dr + da, perm_last, r.id.clone(), r.modality))
            })
            .min();
        match best {
            Some((_, _, id, m)) => (m, Some(id)),
            None => (self.default, None),
        }
    }

    fn table(&self) -> Vec<(Request, Modality)> {
        self.universe()
            .into_iter()
            .map(|q| {
                let m = self.decide(&q).0;
                (q, m)
            })
            .collect()
    }
}

fn config() -> RandomPolicyConfig {
    RandomPolicyConfig::default()
}

#[test]
fn faculty_frozen_values() {
    let p = faculty();
    let m = Model::of(&p);
    let u = m.universe();
    assert_eq!(u.len(), 125);
    assert_eq!(u[0], Request::new("administrator", "access_courses", "default_ctx"));
    assert_eq!(request_universe(&p), u);

    let t = m.table();
    assert_eq!(t.iter().filter(|(_, x)| *x == Modality::Permission).count(), 10);
    let by_default = u.iter().filter(|q| m.decide(q).1.is_none()).count();
    assert_eq!(by_default, 114);
    assert_eq!(derive_concrete_rules(&p).len(), 11);
}

#[test]
fn decision_tables_match_model() {
    for seed in 0..300 {
        let p = random_policy(seed, config());
        let ours = decision_table(&p);
        assert_eq!(ours.entries(), Model::of(&p).table().as_slice(), "seed {seed}");
    }
}

#[test]
fn provenance_matches_model() {
    for seed in 0..100 {
        let p = random_policy(seed, config());
        let m = Model::of(&p);
        for q in m.universe() {
            let d = acmut::pdp::decide(&p, &q).unwrap();
            assert_eq!(d.provenance.rule_id().map(str::to_owned), m.decide(&q).1, "seed {seed} {q}");
        }
    }
}

#[test]
fn faculty_mutant_census_and_equivalents() {
    let p = faculty();
    let all = generate_all_mutants(&p, &OperatorKind::BASIC);
    assert_eq!(all.len(), 32);
    let c = census(&all);
    let expected = [
        (OperatorKind::Ppr, 2),
        (OperatorKind::Prp, 1),
        (OperatorKind::Rrd, 12),
        (OperatorKind::Crd, 12),
        (OperatorKind::Rpd, 2),
        (OperatorKind::Apd, 3),
    ];
    for (op, n) in expected {
        assert_eq!(c.get(&op).copied().unwrap_or(0), n, "{op}");
    }

    let base = Model::of(&p).table();
    let eq = classify_mutants(&p, &all, Execution::Sequential).unwrap();
    let model_eq: Vec<bool> = all.iter().map(|m| Model::of(&m.policy).table() == base).collect();
    assert_eq!(eq, model_eq);
    assert_eq!(eq.iter().filter(|e| **e).count(), 8);
    for (m, e) in all.iter().zip(&eq) {
        if *e {
            assert_eq!(m.target, MutantTarget::Rule("R3".into()));
            assert!(matches!(m.operator, OperatorKind::Rrd | OperatorKind::Crd));
        }
    }
    assert_eq!(all.iter().filter(|m| m.duplicate_of.is_some()).count(), 2);

    let anr = generate_all_mutants(&p, &[OperatorKind::Anr]);
    assert_eq!(anr.len(), 136);
}

#[test]
fn faculty_combined_suite_score() {
    let p = faculty();
    let suite = gen_combined(&p).unwrap();
    assert_eq!(suite.len(), 125);
    let all = generate_all_mutants(&p, &OperatorKind::BASIC);
    let r = score_suite(&p, &suite, &all, false, Execution::default()).unwrap();
    assert_eq!((r.score.killed(), r.score.total()), (22, 22));
    let kept = score_suite(&p, &suite, &all, true, Execution::default()).unwrap();
    assert_eq!((kept.score.killed(), kept.score.total()), (22, 30));
}

#[test]
fn apd_footprint_matches_model() {
    let p = faculty();
    let apd = generate_all_mutants(&p, &[OperatorKind::Apd]);
    let m = apd
        .iter()
        .find(|m| m.target == MutantTarget::Rule("R2".into()) && m.substitution.to == "access_courses")
        .unwrap();
    let a = Model::of(&p).table();
    let b = Model::of(&m.policy).table();
    let fp: Vec<Request> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.clone())
        .collect();
    let mut expected = Vec::new();
    for r in ["student", "teacher", "user"] {
        for act in ["benefit_services", "consult_account"] {
            expected.push(Request::new(r, act, "work_duration"));
        }
    }
    assert_eq!(fp, expected);
    assert_eq!(decision_table(&p).diff(&decision_table(&m.policy)).unwrap(), expected);
}

#[test]
fn equivalence_matches_model_on_random_policies() {
    for seed in 0..40 {
        let p = random_policy(seed, config());
        let base = Model::of(&p).table();
        let all = generate_all_mutants(&p, &OperatorKind::ALL);
        let eq = classify_mutants(&p, &all, Execution::default()).unwrap();
        for (m, e) in all.iter().zip(eq) {
            assert_eq!(e, Model::of(&m.policy).table() == base, "seed {seed} {}", m.describe());
        }
    }
}
