//! Hidden-mechanism detection and policy evolution.
//!
//! Both procedures use the same probe: build a mutant of the visible policy,
//! take the requests where mutant and original disagree (the footprint),
//! disable the visible layer of the system and execute the
//! Permission-expected footprint tests. With the visible layer off every
//! such request must be allowed, so each denial points at a hidden rule or a
//! missing capability.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::{capability_directive, hidden_directive, policy_hash};
use crate::mutation::{apply_operator, Mutant, OperatorKind};
use crate::pdp::{decision_table_with, DecisionTable};
use crate::policy::{EntityKind, Modality, Policy, Request, Rule};
use crate::sim::{Capability, SimulatedSystem, SystemOutcome};
use crate::testgen::{gen_combined, TestCase, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    AddPermission,
    RemoveProhibition,
    AddProhibition,
    RemovePermission,
}

/// δ⁺ relaxes the policy, δ⁻ restricts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaClass {
    Relax,
    Restrict,
}

impl fmt::Display for DeltaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeltaClass::Relax => "delta+",
            DeltaClass::Restrict => "delta-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MicroEvolution {
    Add(Rule),
    /// `modality` is the modality the removed rule must have.
    Remove { id: String, modality: Modality },
}

impl MicroEvolution {
    pub fn kind(&self) -> DeltaKind {
        match self {
            MicroEvolution::Add(r) if r.modality == Modality::Permission => DeltaKind::AddPermission,
            MicroEvolution::Add(_) => DeltaKind::AddProhibition,
            MicroEvolution::Remove { modality: Modality::Permission, .. } => DeltaKind::RemovePermission,
            MicroEvolution::Remove { .. } => DeltaKind::RemoveProhibition,
        }
    }

    pub fn class(&self) -> DeltaClass {
        match self.kind() {
            DeltaKind::AddPermission | DeltaKind::RemoveProhibition => DeltaClass::Relax,
            DeltaKind::AddProhibition | DeltaKind::RemovePermission => DeltaClass::Restrict,
        }
    }
}

impl fmt::Display for MicroEvolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MicroEvolution::Add(r) => write!(f, "add {} as {}", r.tuple(), r.id),
            MicroEvolution::Remove { id, modality } => write!(f, "remove {modality} {id}"),
        }
    }
}

/// Where a hidden denial comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiddenSource {
    /// Index into the system's hidden rules.
    Rule { index: usize },
    Capability { role: String, action: String },
}

impl HiddenSource {
    fn of(outcome: &SystemOutcome) -> Option<HiddenSource> {
        match outcome {
            SystemOutcome::DeniedByHidden { index } => Some(HiddenSource::Rule { index: *index }),
            SystemOutcome::NotExecutable { role, action } => Some(HiddenSource::Capability {
                role: role.clone(),
                action: action.clone(),
            }),
            SystemOutcome::Allowed | SystemOutcome::DeniedByVisible { .. } => None,
        }
    }

    /// The system-spec line declaring this source.
    pub fn directive(&self, system: &SimulatedSystem) -> String {
        match self {
            HiddenSource::Rule { index } => hidden_directive(&system.spec().hidden_rules[*index]),
            HiddenSource::Capability { role, action } => {
                capability_directive(&Capability::new(role.clone(), action.clone()))
            }
        }
    }
}

impl fmt::Display for HiddenSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HiddenSource::Rule { index } => write!(f, "hidden rule #{index}"),
            HiddenSource::Capability { role, action } => write!(f, "missing capability ({role}, {action})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    HiddenExplicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenFinding {
    pub request: Request,
    pub expected: Modality,
    pub observed: SystemOutcome,
    pub classification: Classification,
    pub source: HiddenSource,
    /// First mutant whose footprint exposed the request.
    pub mutant: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionOptions {
    /// Also probe every Permission-expected test of each mutant, not only
    /// its footprint.
    pub full_universe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub findings: Vec<HiddenFinding>,
    pub visible_rule_count: usize,
    /// Distinct hidden sources appearing in findings.
    pub hidden_rule_count: usize,
    pub sources: Vec<HiddenSource>,
    pub mutants: usize,
    pub probes: usize,
    /// Prohibition-expected tests, which cannot fail on a disabled system.
    pub vacuous: usize,
}

impl DetectionReport {
    /// visible / (visible + hidden), as an unreduced pair.
    pub fn flexibility_ratio(&self) -> (usize, usize) {
        if self.hidden_rule_count == 0 {
            return (1, 1);
        }
        (self.visible_rule_count, self.visible_rule_count + self.hidden_rule_count)
    }

    pub fn flexibility(&self) -> f64 {
        let (n, d) = self.flexibility_ratio();
        n as f64 / d as f64
    }

    pub fn has_findings(&self) -> bool {
        !self.findings.is_empty()
    }
}

impl Serialize for DetectionReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let (n, d) = self.flexibility_ratio();
        let mut m = s.serialize_map(Some(9))?;
        m.serialize_entry("findings", &self.findings)?;
        m.serialize_entry("visible_rules", &self.visible_rule_count)?;
        m.serialize_entry("hidden_sources", &self.hidden_rule_count)?;
        m.serialize_entry("sources", &self.sources)?;
        m.serialize_entry("flexibility", &self.flexibility())?;
        m.serialize_entry("flexibility_ratio", &format!("{n}/{d}"))?;
        m.serialize_entry("missing_capabilities_count_as_hidden", &true)?;
        m.serialize_entry("mutants", &self.mutants)?;
        m.serialize_entry("probes", &self.probes)?;
        m.serialize_entry("vacuous", &self.vacuous)?;
        m.end()
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} mutants, {} probes, {} vacuous",
            self.mutants, self.probes, self.vacuous
        )?;
        for x in &self.findings {
            writeln!(
                f,
                "finding {}: expected {}, observed {} [{:?}, via {}]",
                x.request, x.expected, x.observed, x.classification, x.mutant
            )?;
        }
        let (n, d) = self.flexibility_ratio();
        writeln!(
            f,
            "visible rules {}, hidden sources {} (missing capabilities included)",
            self.visible_rule_count, self.hidden_rule_count
        )?;
        write!(f, "flexibility = {n}/{d} = {:.3}", self.flexibility())
    }
}

pub fn detect_hidden(system: &SimulatedSystem) -> Result<DetectionReport> {
    detect_hidden_with(system, DetectionOptions::default(), Execution::default())
}

/// Cases of `suite` worth probing: footprint requests expected to be
/// permitted, or in full-universe mode every permitted request.
fn probe_cases<'s>(
    suite: &'s TestSuite,
    footprint: &HashSet<Request>,
    full_universe: bool,
) -> (Vec<&'s TestCase>, usize) {
    let mut probes = Vec::new();
    let mut vacuous = 0;
    for c in &suite.cases {
        let in_scope = full_universe || footprint.contains(&c.request);
        if !in_scope {
            continue;
        }
        if c.expect == Modality::Permission {
            probes.push(c);
        } else {
            vacuous += 1;
        }
    }
    (probes, vacuous)
}

fn footprint(original: &DecisionTable, mutant: &Policy) -> Result<HashSet<Request>> {
    let table = decision_table_with(mutant, Execution::Sequential);
    Ok(original.diff(&table)?.into_iter().collect())
}

/// Runs the probes against the disabled system, returning non-allowed ones.
fn run_probes(
    disabled: &SimulatedSystem,
    cases: &[&TestCase],
) -> Result<Vec<(Request, Modality, SystemOutcome)>> {
    let mut out = Vec::new();
    for c in cases {
        let observed = disabled.handle_request(&c.request)?;
        if observed != SystemOutcome::Allowed {
            out.push((c.request.clone(), c.expect, observed));
        }
    }
    Ok(out)
}

fn finding(request: Request, expected: Modality, observed: SystemOutcome, mutant: String) -> HiddenFinding {
    let source = HiddenSource::of(&observed).expect("disabled systems deny only through hidden sources");
    let classification = match observed {
        SystemOutcome::NotExecutable { .. } => Classification::Implicit,
        _ => Classification::HiddenExplicit,
    };
    HiddenFinding {
        request,
        expected,
        observed,
        classification,
        source,
        mutant,
    }
}

/// Detection over every PPR and PRP mutant of the visible policy.
///
/// A rule flip has a permitting side and a prohibiting side. Each footprint
/// request is probed with the tests of whichever side expects Permission,
/// the other side is vacuous. Findings are pooled and deduplicated by
/// request, in request order.
pub fn detect_hidden_with(
    system: &SimulatedSystem,
    options: DetectionOptions,
    exec: Execution,
) -> Result<DetectionReport> {
    let original = system.visible_policy();
    let disabled = system.set_visible_enabled(false);
    let original_table = decision_table_with(original, exec);
    let original_suite = gen_combined(original)?;

    let mut mutants: Vec<Mutant> = apply_operator(original, OperatorKind::Ppr);
    mutants.extend(apply_operator(original, OperatorKind::Prp));

    type Probe = (Vec<(Request, Modality, SystemOutcome)>, usize, usize);
    let per_mutant: Vec<Result<Probe>> = exec.map(&mutants, |m| {
        let fp = footprint(&original_table, &m.policy)?;
        let mutant_suite = gen_combined(&m.policy)?;
        let (mut cases, mut vacuous) = probe_cases(&mutant_suite, &fp, options.full_universe);
        let (orig_cases, orig_vacuous) = probe_cases(&original_suite, &fp, false);
        cases.extend(orig_cases);
        vacuous += orig_vacuous;
        let probes = cases.len();
        Ok((run_probes(&disabled, &cases)?, probes, vacuous))
    });

    let mut by_request: BTreeMap<Request, HiddenFinding> = BTreeMap::new();
    let (mut probes, mut vacuous) = (0, 0);
    for (m, result) in mutants.iter().zip(per_mutant) {
        let (failed, p, v) = result?;
        probes += p;
        vacuous += v;
        for (req, expected, observed) in failed {
            by_request
                .entry(req.clone())
                .or_insert_with(|| finding(req, expected, observed, m.describe()));
        }
    }
    let findings: Vec<HiddenFinding> = by_request.into_values().collect();
    let sources: BTreeSet<HiddenSource> = findings.iter().map(|f| f.source.clone()).collect();

    Ok(DetectionReport {
        visible_rule_count: original.rules.len(),
        hidden_rule_count: sources.len(),
        sources: sources.into_iter().collect(),
        findings,
        mutants: mutants.len(),
        probes,
        vacuous,
    })
}

pub fn apply_micro_evolution(policy: &Policy, delta: &MicroEvolution) -> Result<Policy> {
    match delta {
        MicroEvolution::Add(rule) => {
            for (kind, name) in [
                (EntityKind::Role, &rule.role),
                (EntityKind::Action, &rule.action),
                (EntityKind::Context, &rule.context),
            ] {
                if !policy.is_declared(kind, name) {
                    return Err(Error::UnknownEntity {
                        kind,
                        name: name.clone(),
                    });
                }
            }
            if policy.rule(&rule.id).is_some() || policy.contains_tuple(&rule.tuple()) {
                return Err(Error::DuplicateRule(rule.id.clone()));
            }
            let mut rules = policy.rules.clone();
            rules.push(rule.clone());
            Ok(policy.with_rules(rules))
        }
        MicroEvolution::Remove { id, modality } => {
            let existing = policy.rule(id).ok_or_else(|| Error::NoSuchRule(id.clone()))?;
            if existing.modality != *modality {
                return Err(Error::ModalityMismatch {
                    id: id.clone(),
                    expected: *modality,
                    found: existing.modality,
                });
            }
            let rules = policy.rules.iter().filter(|r| r.id != *id).cloned().collect();
            Ok(policy.with_rules(rules))
        }
    }
}

/// Applies `deltas` in order. The first failure aborts with its 0-based index.
pub fn compose_evolutions(policy: &Policy, deltas: &[MicroEvolution]) -> Result<Policy> {
    deltas
        .iter()
        .enumerate()
        .try_fold(policy.clone(), |p, (index, d)| {
            apply_micro_evolution(&p, d).map_err(|e| Error::Evolution {
                index,
                source: Box::new(e),
            })
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionStatus {
    Clean,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionRecord {
    pub index: usize,
    pub delta: MicroEvolution,
    pub class: DeltaClass,
    pub mutant_policy_hash: String,
    /// Footprint tests built from the mutant.
    pub suite_size: usize,
    pub findings: Vec<HiddenFinding>,
    pub status: EvolutionStatus,
    /// System-spec lines to delete before the delta can go through.
    pub hints: Vec<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionReport {
    pub records: Vec<EvolutionRecord>,
    /// Indices of applied deltas.
    pub applied: Vec<usize>,
    pub blocked: Vec<usize>,
    pub log: Vec<String>,
    pub final_policy: Policy,
}

impl EvolutionReport {
    pub fn has_blocked(&self) -> bool {
        !self.blocked.is_empty()
    }
}

impl fmt::Display for EvolutionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            let status = match r.status {
                EvolutionStatus::Clean => "clean",
                EvolutionStatus::Blocked => "BLOCKED",
            };
            writeln!(
                f,
                "#{} {} [{}]: {status}, {} footprint tests",
                r.index, r.delta, r.class, r.suite_size
            )?;
            if let Some(note) = &r.note {
                writeln!(f, "    note: {note}")?;
            }
            for x in &r.findings {
                writeln!(f, "    finding {}: observed {}", x.request, x.observed)?;
            }
            for h in &r.hints {
                writeln!(f, "    remove from system spec: {h}")?;
            }
        }
        write!(
            f,
            "{} applied, {} blocked, final policy has {} rules",
            self.applied.len(),
            self.blocked.len(),
            self.final_policy.rules.len()
        )
    }
}

/// Evaluates each delta against the current visible policy and applies it
/// only when no hidden mechanism denies its permitted footprint. Blocked
/// deltas are skipped; later deltas still run against the policy without
/// them. A delta that cannot be applied aborts with `Error::Evolution`.
pub fn evolve_policy(system: &SimulatedSystem, deltas: &[MicroEvolution]) -> Result<EvolutionReport> {
    let disabled = system.set_visible_enabled(false);
    let mut current = system.visible_policy().clone();
    let mut report = EvolutionReport {
        records: Vec::new(),
        applied: Vec::new(),
        blocked: Vec::new(),
        log: Vec::new(),
        final_policy: current.clone(),
    };

    for (index, delta) in deltas.iter().enumerate() {
        let wrap = |e: Error| Error::Evolution {
            index,
            source: Box::new(e),
        };
        let mutant = apply_micro_evolution(&current, delta).map_err(wrap)?;
        let table = decision_table_with(&current, Execution::Sequential);
        let fp = footprint(&table, &mutant)?;
        let suite = gen_combined(&mutant)?;
        let scoped: Vec<&TestCase> = suite.cases.iter().filter(|c| fp.contains(&c.request)).collect();
        let probes: Vec<&TestCase> = scoped
            .iter()
            .copied()
            .filter(|c| c.expect == Modality::Permission)
            .collect();
        let what = delta.to_string();
        let findings: Vec<HiddenFinding> = run_probes(&disabled, &probes)?
            .into_iter()
            .map(|(req, expected, observed)| finding(req, expected, observed, what.clone()))
            .collect();

        let mut hints: Vec<String> = Vec::new();
        for x in &findings {
            let line = x.source.directive(system);
            if !hints.contains(&line) {
                hints.push(line);
            }
        }
        let status = if findings.is_empty() {
            EvolutionStatus::Clean
        } else {
            EvolutionStatus::Blocked
        };
        let note = match (delta.class(), status) {
            (DeltaClass::Restrict, _) => {
                Some("restriction: hidden denials cannot block it, applied directly".to_owned())
            }
            (DeltaClass::Relax, EvolutionStatus::Blocked) => {
                Some("not applied: remove the hidden sources and re-run".to_owned())
            }
            (DeltaClass::Relax, EvolutionStatus::Clean) => None,
        };
        let mutant_policy_hash = policy_hash(&mutant)?;
        match status {
            EvolutionStatus::Clean => {
                report.log.push(format!("#{index} applied: {delta}"));
                report.applied.push(index);
                current = mutant;
            }
            EvolutionStatus::Blocked => report.blocked.push(index),
        }
        report.records.push(EvolutionRecord {
            index,
            delta: delta.clone(),
            class: delta.class(),
            mutant_policy_hash,
            suite_size: scoped.len(),
            findings,
            status,
            hints,
            note,
        });
    }
    report.final_policy = current;
    Ok(report)
}
