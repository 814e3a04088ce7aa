//! Security test generation under the coverage criteria, and suite
//! execution against policies, mutants and simulated systems.
//!
//! A test case has an intention (free text), a sequence (the request) and
//! an oracle (the outcome the source policy's PDP gives). The oracle asserts
//! the outcome only; the expected provenance is informational.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::policy_hash;
use crate::mutation::{classify_mutants, Mutant, MutationScore};
use crate::pdp::{derive_rule, universe_decisions, Decision, Pdp, Provenance};
use crate::policy::{Modality, Policy, Request};
use crate::sim::SimulatedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    AllPrimary,
    AllConcrete,
    AllDefault,
    Combined,
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "primary" | "all_primary" => Ok(Criterion::AllPrimary),
            "concrete" | "all_concrete" => Ok(Criterion::AllConcrete),
            "default" | "all_default" => Ok(Criterion::AllDefault),
            "combined" => Ok(Criterion::Combined),
            other => Err(format!("unknown criterion `{other}`")),
        }
    }
}

/// Which rule the source policy used, recorded with each case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedProvenance {
    MatchedRule { rule: String },
    DefaultRule,
}

impl From<&Provenance> for ExpectedProvenance {
    fn from(p: &Provenance) -> Self {
        match p {
            Provenance::MatchedRule { rule, .. } => ExpectedProvenance::MatchedRule { rule: rule.clone() },
            Provenance::DefaultRule => ExpectedProvenance::DefaultRule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub intention: String,
    pub request: Request,
    pub expect: Modality,
    pub provenance: ExpectedProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSuite {
    pub criterion: Criterion,
    pub source_policy: String,
    pub source_policy_hash: String,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    fn new(policy: &Policy, criterion: Criterion) -> Result<Self> {
        Ok(Self {
            criterion,
            source_policy: policy.name.clone(),
            source_policy_hash: policy_hash(policy)?,
            cases: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn requests(&self) -> impl Iterator<Item = &Request> {
        self.cases.iter().map(|c| &c.request)
    }

    /// Appends a case unless its request is already covered.
    fn push_unique(&mut self, seen: &mut HashSet<Request>, case: TestCase) {
        if seen.insert(case.request.clone()) {
            self.cases.push(case);
        }
    }

    /// Fails with `StaleSuite` unless the suite was generated from `policy`.
    pub fn check_source(&self, policy: &Policy) -> Result<()> {
        let found = policy_hash(policy)?;
        if found != self.source_policy_hash {
            return Err(Error::StaleSuite {
                expected: self.source_policy_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}

fn case(intention: String, request: Request, decision: &Decision) -> TestCase {
    TestCase {
        intention,
        request,
        expect: decision.outcome,
        provenance: (&decision.provenance).into(),
    }
}

fn decide_known(pdp: &Pdp<'_>, request: &Request) -> Decision {
    pdp.decide(request)
        .expect("generated requests come from the policy's own entities")
}

/// One case per primary rule, using its lexicographically smallest concrete
/// request.
pub fn gen_all_primary(policy: &Policy) -> Result<TestSuite> {
    let pdp = Pdp::new(policy);
    let mut suite = TestSuite::new(policy, Criterion::AllPrimary)?;
    let mut seen = HashSet::new();
    for rule in &policy.rules {
        let concrete = derive_rule(policy, rule);
        let Some(first) = concrete.first() else { continue };
        let request = first.request();
        let decision = decide_known(&pdp, &request);
        let intention = if concrete.len() > 1 {
            format!(
                "{}: {} of {} on {} in {}, checked through derived request {request}",
                rule.id, rule.modality, rule.role, rule.action, rule.context
            )
        } else {
            format!(
                "{}: {} of {} on {} in {}",
                rule.id, rule.modality, rule.role, rule.action, rule.context
            )
        };
        suite.push_unique(&mut seen, case(intention, request, &decision));
    }
    Ok(suite)
}

/// One case per concrete rule, in rule order, duplicates by request dropped.
pub fn gen_all_concrete(policy: &Policy) -> Result<TestSuite> {
    let pdp = Pdp::new(policy);
    let mut suite = TestSuite::new(policy, Criterion::AllConcrete)?;
    let mut seen = HashSet::new();
    push_concrete(&pdp, &mut suite, &mut seen);
    Ok(suite)
}

fn push_concrete(pdp: &Pdp<'_>, suite: &mut TestSuite, seen: &mut HashSet<Request>) {
    let policy = pdp.policy();
    for rule in &policy.rules {
        for c in derive_rule(policy, rule) {
            let request = c.request();
            let decision = decide_known(pdp, &request);
            let intention = format!(
                "{} derived: {} for {} on {} in {}",
                c.origin, c.modality, c.role, c.action, c.context
            );
            suite.push_unique(seen, case(intention, request, &decision));
        }
    }
}

/// One case per universe request that no rule decides.
pub fn gen_all_default(policy: &Policy) -> Result<TestSuite> {
    let mut suite = TestSuite::new(policy, Criterion::AllDefault)?;
    let mut seen = HashSet::new();
    push_default(policy, &mut suite, &mut seen);
    Ok(suite)
}

fn push_default(policy: &Policy, suite: &mut TestSuite, seen: &mut HashSet<Request>) {
    for (request, decision) in universe_decisions(policy, Execution::Sequential) {
        if decision.provenance != Provenance::DefaultRule {
            continue;
        }
        let intention = format!("default: no rule covers {request}");
        suite.push_unique(seen, case(intention, request, &decision));
    }
}

/// All concrete cases followed by all default cases.
pub fn gen_combined(policy: &Policy) -> Result<TestSuite> {
    let pdp = Pdp::new(policy);
    let mut suite = TestSuite::new(policy, Criterion::Combined)?;
    let mut seen = HashSet::new();
    push_concrete(&pdp, &mut suite, &mut seen);
    push_default(policy, &mut suite, &mut seen);
    Ok(suite)
}

pub fn generate_suite(policy: &Policy, criterion: Criterion) -> Result<TestSuite> {
    match criterion {
        Criterion::AllPrimary => gen_all_primary(policy),
        Criterion::AllConcrete => gen_all_concrete(policy),
        Criterion::AllDefault => gen_all_default(policy),
        Criterion::Combined => gen_combined(policy),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Policy(&'a Policy),
    System(&'a SimulatedSystem),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub case: TestCase,
    pub observed: Modality,
    pub passed: bool,
}

pub fn execute_suite(suite: &TestSuite, target: Target<'_>) -> Result<Vec<Verdict>> {
    execute_suite_with(suite, target, Execution::default())
}

/// Runs every case; verdicts follow suite order.
pub fn execute_suite_with(suite: &TestSuite, target: Target<'_>, exec: Execution) -> Result<Vec<Verdict>> {
    let policy = match target {
        Target::Policy(p) => p,
        Target::System(s) => s.visible_policy(),
    };
    if suite.cases.iter().any(|c| policy.check_request(&c.request).is_err()) {
        return Err(Error::UniverseMismatch);
    }
    let observed: Vec<Modality> = match target {
        Target::Policy(p) => {
            let pdp = Pdp::new(p);
            exec.map(&suite.cases, |c| decide_known(&pdp, &c.request).outcome)
        }
        Target::System(s) => exec.map(&suite.cases, |c| {
            s.handle_request(&c.request)
                .expect("requests were checked against the visible policy")
                .modality()
        }),
    };
    Ok(suite
        .cases
        .iter()
        .zip(observed)
        .map(|(c, observed)| Verdict {
            case: c.clone(),
            observed,
            passed: observed == c.expect,
        })
        .collect())
}

/// True when some case observes a different outcome on `policy`.
pub fn kills(suite: &TestSuite, policy: &Policy) -> Result<bool> {
    Ok(execute_suite_with(suite, Target::Policy(policy), Execution::Sequential)?
        .iter()
        .any(|v| !v.passed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantStatus {
    Killed,
    Survived,
    Equivalent,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MutantOutcome {
    pub index: usize,
    pub description: String,
    pub status: MutantStatus,
    /// Cases whose verdict failed on this mutant.
    pub failing_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub policy: String,
    pub suite_size: usize,
    pub keep_equivalents: bool,
    pub mutants: Vec<MutantOutcome>,
    pub equivalent: usize,
    pub duplicates: usize,
    pub score: MutationScore,
}

impl ScoreReport {
    pub fn survivors(&self) -> impl Iterator<Item = &MutantOutcome> {
        self.mutants.iter().filter(|m| m.status == MutantStatus::Survived)
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "policy {}: {} tests, {} mutants", self.policy, self.suite_size, self.mutants.len())?;
        writeln!(f, "equivalent: {}, duplicates: {}", self.equivalent, self.duplicates)?;
        for m in self.survivors() {
            writeln!(f, "survived: #{} {}", m.index, m.description)?;
        }
        write!(f, "SM = {}", self.score)
    }
}

/// Runs `suite` against every mutant and scores it. Duplicates are never
/// counted; equivalent mutants are left out of the total unless
/// `keep_equivalents` is set.
pub fn score_suite(
    original: &Policy,
    suite: &TestSuite,
    mutants: &[Mutant],
    keep_equivalents: bool,
    exec: Execution,
) -> Result<ScoreReport> {
    suite.check_source(original)?;
    let equivalent = classify_mutants(original, mutants, exec)?;
    let failing: Vec<Result<usize>> = exec.map(mutants, |m| {
        Ok(execute_suite_with(suite, Target::Policy(&m.policy), Execution::Sequential)?
            .iter()
            .filter(|v| !v.passed)
            .count())
    });

    let mut outcomes = Vec::with_capacity(mutants.len());
    let (mut killed, mut total) = (0, 0);
    for (i, ((m, eq), failing)) in mutants.iter().zip(&equivalent).zip(failing).enumerate() {
        let failing_cases = failing?;
        let status = if m.duplicate_of.is_some() {
            MutantStatus::Duplicate
        } else if *eq {
            MutantStatus::Equivalent
        } else if failing_cases > 0 {
            MutantStatus::Killed
        } else {
            MutantStatus::Survived
        };
        let counted = match status {
            MutantStatus::Duplicate => false,
            MutantStatus::Equivalent => keep_equivalents,
            _ => true,
        };
        if counted {
            total += 1;
            if failing_cases > 0 {
                killed += 1;
            }
        }
        outcomes.push(MutantOutcome {
            index: i,
            description: m.describe(),
            status,
            failing_cases,
        });
    }

    Ok(ScoreReport {
        policy: original.name.clone(),
        suite_size: suite.len(),
        keep_equivalents,
        equivalent: outcomes.iter().filter(|o| o.status == MutantStatus::Equivalent).count(),
        duplicates: outcomes.iter().filter(|o| o.status == MutantStatus::Duplicate).count(),
        mutants: outcomes,
        score: MutationScore::new(killed, total)?,
    })
}

/// One record of the suite file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SuiteRecord {
    intention: String,
    request: Request,
    expect: Modality,
    provenance: ExpectedProvenance,
    source_policy_hash: String,
    source_policy: String,
    criterion: Criterion,
}

/// Serializes a suite as a JSON array of cases, each carrying the source
/// policy hash.
pub fn suite_to_json(suite: &TestSuite) -> Result<String> {
    let records: Vec<SuiteRecord> = suite
        .cases
        .iter()
        .map(|c| SuiteRecord {
            intention: c.intention.clone(),
            request: c.request.clone(),
            expect: c.expect,
            provenance: c.provenance.clone(),
            source_policy_hash: suite.source_policy_hash.clone(),
            source_policy: suite.source_policy.clone(),
            criterion: suite.criterion,
        })
        .collect();
    crate::report::to_sorted_json(&records)
}

/// Inverse of [`suite_to_json`]. An empty array needs the policy to recover
/// the header fields, so it is only accepted with `source` given.
pub fn suite_from_json(text: &str, source: Option<&Policy>) -> Result<TestSuite> {
    let records: Vec<SuiteRecord> = serde_json::from_str(text)?;
    let (criterion, name, hash) = match (records.first(), source) {
        (Some(r), _) => (r.criterion, r.source_policy.clone(), r.source_policy_hash.clone()),
        (None, Some(p)) => (Criterion::Combined, p.name.clone(), policy_hash(p)?),
        (None, None) => return Err(Error::EmptySuite),
    };
    if let Some(r) = records.iter().find(|r| r.source_policy_hash != hash) {
        return Err(Error::StaleSuite {
            expected: hash,
            found: r.source_policy_hash.clone(),
        });
    }
    Ok(TestSuite {
        criterion,
        source_policy: name,
        source_policy_hash: hash,
        cases: records
            .into_iter()
            .map(|r| TestCase {
                intention: r.intention,
                request: r.request,
                expect: r.expect,
                provenance: r.provenance,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::faculty;
    use crate::mutation::{apply_operator, generate_all_mutants, OperatorKind};
    use crate::pdp::request_universe;
    use crate::policy::{EntityKind, Rule};

    fn req(r: &str, a: &str, c: &str) -> Request {
        Request::new(r, a, c)
    }

    #[test]
    fn primary_suite_on_faculty() {
        let s = gen_all_primary(&faculty()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.cases[0].request, req("administrator", "create_account", "work_duration"));
        assert_eq!(s.cases[0].expect, Modality::Permission);
        assert_eq!(s.cases[0].provenance, ExpectedProvenance::MatchedRule { rule: "R1".into() });
        assert_eq!(s.cases[1].request, req("student", "access_courses", "work_duration"));
        assert!(gen_all_primary(&faculty().with_rules(vec![])).unwrap().is_empty());
    }

    #[test]
    fn concrete_and_default_suites_on_faculty() {
        let p = faculty();
        let concrete = gen_all_concrete(&p).unwrap();
        assert_eq!(concrete.len(), 11);
        let r3 = concrete
            .cases
            .iter()
            .find(|c| c.request == req("teacher", "enter_marks", "studies"))
            .unwrap();
        assert_eq!(r3.expect, Modality::Prohibition);
        assert_eq!(r3.provenance, ExpectedProvenance::MatchedRule { rule: "R3".into() });

        let default = gen_all_default(&p).unwrap();
        assert_eq!(default.len(), 114);
        assert!(default
            .cases
            .iter()
            .any(|c| c.request == req("student", "enter_marks", "holiday")
                && c.provenance == ExpectedProvenance::DefaultRule));

        let combined = gen_combined(&p).unwrap();
        assert_eq!(combined.len(), 125);
        let mut reqs: Vec<Request> = combined.requests().cloned().collect();
        reqs.sort();
        assert_eq!(reqs, request_universe(&p));
    }

    #[test]
    fn leaf_only_policy_primary_equals_concrete() {
        let p = faculty().with_rules(vec![
            Rule::new("A", Modality::Permission, "student", "access_courses", "studies"),
            Rule::new("B", Modality::Prohibition, "teacher", "enter_marks", "holiday"),
        ]);
        let primary = gen_all_primary(&p).unwrap();
        let concrete = gen_all_concrete(&p).unwrap();
        assert_eq!(
            primary.requests().collect::<Vec<_>>(),
            concrete.requests().collect::<Vec<_>>()
        );
    }

    #[test]
    fn covered_universe_has_no_default_cases() {
        let p = Policy::new("p", Modality::Prohibition)
            .with_entity(EntityKind::Role, "r", None)
            .with_entity(EntityKind::Action, "a", None)
            .with_entity(EntityKind::Context, "c", None)
            .with_rule(Rule::new("X", Modality::Permission, "r", "a", "c"));
        assert!(gen_all_default(&p).unwrap().is_empty());
        let empty = p.with_rules(vec![]);
        assert_eq!(
            gen_combined(&empty).unwrap().cases,
            gen_all_default(&empty).unwrap().cases
        );
    }

    #[test]
    fn execution_examples() {
        let p = faculty();
        let suite = gen_combined(&p).unwrap();
        assert!(execute_suite(&suite, Target::Policy(&p)).unwrap().iter().all(|v| v.passed));

        let ppr = &apply_operator(&p, OperatorKind::Ppr)[0];
        let failed: Vec<_> = execute_suite(&suite, Target::Policy(&ppr.policy))
            .unwrap()
            .into_iter()
            .filter(|v| !v.passed)
            .collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].case.request, req("administrator", "create_account", "work_duration"));

        // the primary suite misses APD(user_activities -> access_courses)
        let apd = apply_operator(&p, OperatorKind::Apd)
            .into_iter()
            .find(|m| m.substitution.to == "access_courses")
            .unwrap();
        let primary = gen_all_primary(&p).unwrap();
        assert!(!kills(&primary, &apd.policy).unwrap());
        assert!(!crate::mutation::is_equivalent(&p, &apd).unwrap());
        assert!(kills(&suite, &apd.policy).unwrap());
    }

    #[test]
    fn universe_mismatch_on_foreign_target() {
        let suite = gen_combined(&faculty()).unwrap();
        let other = Policy::new("o", Modality::Permission)
            .with_entity(EntityKind::Role, "r", None)
            .with_entity(EntityKind::Action, "a", None)
            .with_entity(EntityKind::Context, "c", None);
        assert!(matches!(
            execute_suite(&suite, Target::Policy(&other)),
            Err(Error::UniverseMismatch)
        ));
    }

    #[test]
    fn combined_scores_faculty_basic_mutants() {
        let p = faculty();
        let mutants = generate_all_mutants(&p, &OperatorKind::BASIC);
        let suite = gen_combined(&p).unwrap();
        let report = score_suite(&p, &suite, &mutants, false, Execution::Parallel).unwrap();
        assert_eq!(report.equivalent, 8);
        assert_eq!(report.duplicates, 2);
        assert_eq!((report.score.killed(), report.score.total()), (22, 22));

        let kept = score_suite(&p, &suite, &mutants, true, Execution::Sequential).unwrap();
        assert_eq!((kept.score.killed(), kept.score.total()), (22, 30));
    }

    #[test]
    fn stale_suite_is_rejected() {
        let p = faculty();
        let suite = gen_combined(&p).unwrap();
        let changed = p.with_rules(p.rules[..2].to_vec());
        assert!(matches!(suite.check_source(&changed), Err(Error::StaleSuite { .. })));
        assert!(score_suite(&changed, &suite, &[], false, Execution::Sequential).is_err());
    }

    #[test]
    fn suite_json_round_trip() {
        let p = faculty();
        let suite = gen_all_primary(&p).unwrap();
        let json = suite_to_json(&suite).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let first = &value.as_array().unwrap()[0];
        for key in ["intention", "request", "expect", "provenance", "source_policy_hash"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(suite_from_json(&json, None).unwrap(), suite);
    }
}
