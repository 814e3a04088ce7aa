//! Policy mutation operators, equivalent-mutant detection and scoring.
//!
//! | op  | change                                                        |
//! |-----|---------------------------------------------------------------|
//! | PPR | permission rule becomes a prohibition                          |
//! | PRP | prohibition rule becomes a permission                          |
//! | RRD | rule role replaced by any other role                           |
//! | CRD | rule context replaced by any other context                     |
//! | RPD | rule role replaced by a strict descendant                      |
//! | APD | rule action replaced by a strict descendant                    |
//! | ANR | one new rule added that overrides the default somewhere        |
//!
//! Every operator enumerates exhaustively and deterministically, ordered by
//! (rule id, replacement name). RRD and CRD can optionally be sampled with a
//! seeded generator instead.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::{parse_policy, policy_hash, read_text, serialize_policy};
use crate::pdp::{decision_table, derive_rule, universe_decisions, Provenance};
use crate::policy::{descendants_or_self, EntityKind, Modality, Policy, Request, Rule, RuleTuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperatorKind {
    Ppr,
    Prp,
    Rrd,
    Crd,
    Rpd,
    Apd,
    Anr,
}

impl OperatorKind {
    /// Generation order.
    pub const ALL: [OperatorKind; 7] = [
        OperatorKind::Ppr,
        OperatorKind::Prp,
        OperatorKind::Rrd,
        OperatorKind::Crd,
        OperatorKind::Rpd,
        OperatorKind::Apd,
        OperatorKind::Anr,
    ];

    pub const BASIC: [OperatorKind; 6] = [
        OperatorKind::Ppr,
        OperatorKind::Prp,
        OperatorKind::Rrd,
        OperatorKind::Crd,
        OperatorKind::Rpd,
        OperatorKind::Apd,
    ];

    pub fn is_basic(self) -> bool {
        self != OperatorKind::Anr
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Ppr => "PPR",
            OperatorKind::Prp => "PRP",
            OperatorKind::Rrd => "RRD",
            OperatorKind::Crd => "CRD",
            OperatorKind::Rpd => "RPD",
            OperatorKind::Apd => "APD",
            OperatorKind::Anr => "ANR",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        OperatorKind::ALL
            .into_iter()
            .find(|op| op.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mutation operator `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MutantTarget {
    Rule(String),
    NewRule,
}

impl fmt::Display for MutantTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MutantTarget::Rule(id) => f.write_str(id),
            MutantTarget::NewRule => f.write_str("new-rule"),
        }
    }
}

impl Serialize for MutantTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MutantTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "new-rule" {
            MutantTarget::NewRule
        } else {
            MutantTarget::Rule(s)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutatedField {
    Modality,
    Role,
    Action,
    Context,
    Rule,
}

/// The single elementary change a mutant carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Substitution {
    pub field: MutatedField,
    pub from: Option<String>,
    pub to: String,
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.from {
            Some(from) => write!(f, "{}: {from} -> {}", field_name(self.field), self.to),
            None => write!(f, "+ {}", self.to),
        }
    }
}

fn field_name(f: MutatedField) -> &'static str {
    match f {
        MutatedField::Modality => "modality",
        MutatedField::Role => "role",
        MutatedField::Action => "action",
        MutatedField::Context => "context",
        MutatedField::Rule => "rule",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub policy: Policy,
    pub operator: OperatorKind,
    pub target: MutantTarget,
    pub substitution: Substitution,
    /// Index of an earlier mutant with the same rules and default, when this
    /// one was produced again by a later operator.
    pub duplicate_of: Option<usize>,
}

impl Mutant {
    pub fn describe(&self) -> String {
        format!("{} {} {}", self.operator, self.target, self.substitution)
    }
}

/// Seeded sampling of the RRD and CRD enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampling {
    pub k: usize,
    pub seed: u64,
}

pub fn apply_operator(policy: &Policy, op: OperatorKind) -> Vec<Mutant> {
    apply_operator_sampled(policy, op, None)
}

pub fn apply_operator_sampled(
    policy: &Policy,
    op: OperatorKind,
    sampling: Option<Sampling>,
) -> Vec<Mutant> {
    let mut rules: Vec<(usize, &Rule)> = policy.rules.iter().enumerate().collect();
    rules.sort_by(|a, b| a.1.id.cmp(&b.1.id));

    let mut out = Vec::new();
    for (idx, rule) in rules {
        let field = |field: MutatedField, from: &str, to: &str| Substitution {
            field,
            from: Some(from.to_owned()),
            to: to.to_owned(),
        };
        match op {
            OperatorKind::Ppr | OperatorKind::Prp => {
                let from = if op == OperatorKind::Ppr {
                    Modality::Permission
                } else {
                    Modality::Prohibition
                };
                if rule.modality != from {
                    continue;
                }
                let mut r = rule.clone();
                r.modality = from.flipped();
                let sub = field(MutatedField::Modality, from.as_str(), r.modality.as_str());
                push_replacement(&mut out, policy, op, idx, r, sub);
            }
            OperatorKind::Rrd => {
                for role in policy.roles() {
                    if role == rule.role {
                        continue;
                    }
                    let mut r = rule.clone();
                    r.role = role.to_owned();
                    let sub = field(MutatedField::Role, &rule.role, role);
                    push_replacement(&mut out, policy, op, idx, r, sub);
                }
            }
            OperatorKind::Crd => {
                for ctx in policy.contexts() {
                    if ctx == rule.context {
                        continue;
                    }
                    let mut r = rule.clone();
                    r.context = ctx.to_owned();
                    let sub = field(MutatedField::Context, &rule.context, ctx);
                    push_replacement(&mut out, policy, op, idx, r, sub);
                }
            }
            OperatorKind::Rpd | OperatorKind::Apd => {
                let (kind, current) = if op == OperatorKind::Rpd {
                    (EntityKind::Role, &rule.role)
                } else {
                    (EntityKind::Action, &rule.action)
                };
                let Ok(descendants) = descendants_or_self(policy, kind, current) else {
                    continue;
                };
                for d in descendants.iter().filter(|d| *d != current) {
                    let mut r = rule.clone();
                    let f = if op == OperatorKind::Rpd {
                        r.role = d.clone();
                        MutatedField::Role
                    } else {
                        r.action = d.clone();
                        MutatedField::Action
                    };
                    let sub = field(f, current, d);
                    push_replacement(&mut out, policy, op, idx, r, sub);
                }
            }
            OperatorKind::Anr => {}
        }
    }
    if op == OperatorKind::Anr {
        out = add_new_rules(policy);
    }

    match (op, sampling) {
        (OperatorKind::Rrd | OperatorKind::Crd, Some(s)) => sample(out, s, op),
        _ => out,
    }
}

fn push_replacement(
    out: &mut Vec<Mutant>,
    policy: &Policy,
    op: OperatorKind,
    idx: usize,
    rule: Rule,
    substitution: Substitution,
) {
    // the new tuple must not collide with another rule
    if policy.contains_tuple(&rule.tuple()) {
        return;
    }
    let target = MutantTarget::Rule(rule.id.clone());
    let mut rules = policy.rules.clone();
    rules[idx] = rule;
    out.push(Mutant {
        policy: policy.with_rules(rules),
        operator: op,
        target,
        substitution,
        duplicate_of: None,
    });
}

/// ANR candidates: rules with the non-default modality over any role, any
/// action node and any context, kept when they decide at least one request
/// that the original leaves to the default.
fn add_new_rules(policy: &Policy) -> Vec<Mutant> {
    let defaulted: HashSet<Request> = universe_decisions(policy, Execution::Sequential)
        .into_iter()
        .filter(|(_, d)| d.provenance == Provenance::DefaultRule)
        .map(|(r, _)| r)
        .collect();
    if defaulted.is_empty() {
        return Vec::new();
    }
    let id = fresh_rule_id(policy, "ANR");
    let modality = policy.default_decision.flipped();
    let mut actions: Vec<&str> = policy.names(EntityKind::Action).collect();
    actions.sort_unstable();

    let mut out = Vec::new();
    for role in policy.roles() {
        for action in &actions {
            for ctx in policy.contexts() {
                let tuple = RuleTuple::new(modality, role, *action, ctx);
                if policy.contains_tuple(&tuple) {
                    continue;
                }
                let rule = tuple.with_id(&id);
                let observable = derive_rule(policy, &rule)
                    .iter()
                    .any(|c| defaulted.contains(&c.request()));
                if !observable {
                    continue;
                }
                let mut rules = policy.rules.clone();
                rules.push(rule);
                out.push(Mutant {
                    policy: policy.with_rules(rules),
                    operator: OperatorKind::Anr,
                    target: MutantTarget::NewRule,
                    substitution: Substitution {
                        field: MutatedField::Rule,
                        from: None,
                        to: tuple.to_string(),
                    },
                    duplicate_of: None,
                });
            }
        }
    }
    out
}

pub(crate) fn fresh_rule_id(policy: &Policy, base: &str) -> String {
    if policy.rule(base).is_none() {
        return base.to_owned();
    }
    (2..)
        .map(|n| format!("{base}_{n}"))
        .find(|id| policy.rule(id).is_none())
        .expect("unbounded search")
}

fn sample(all: Vec<Mutant>, s: Sampling, op: OperatorKind) -> Vec<Mutant> {
    if s.k >= all.len() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ (op as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), s.k).into_vec();
    picked.sort_unstable();
    let mut all: Vec<Option<Mutant>> = all.into_iter().map(Some).collect();
    picked.into_iter().filter_map(|i| all[i].take()).collect()
}

pub fn generate_all_mutants(policy: &Policy, ops: &[OperatorKind]) -> Vec<Mutant> {
    generate_mutants(policy, ops, None)
}

/// Concatenates operator outputs in the fixed PPR..ANR order. A mutant whose
/// rule multiset and default equal an earlier one is kept but points at it
/// through `duplicate_of`.
pub fn generate_mutants(
    policy: &Policy,
    ops: &[OperatorKind],
    sampling: Option<Sampling>,
) -> Vec<Mutant> {
    let mut out: Vec<Mutant> = Vec::new();
    let mut seen: HashMap<(Vec<RuleTuple>, Modality), usize> = HashMap::new();
    for op in OperatorKind::ALL.into_iter().filter(|op| ops.contains(op)) {
        for mut m in apply_operator_sampled(policy, op, sampling) {
            let mut key: Vec<RuleTuple> = m.policy.rules.iter().map(Rule::tuple).collect();
            key.sort();
            let key = (key, m.policy.default_decision);
            match seen.get(&key) {
                Some(&first) => m.duplicate_of = Some(first),
                None => {
                    seen.insert(key, out.len());
                }
            }
            out.push(m);
        }
    }
    out
}

/// True when no request in the shared universe tells the two policies apart.
pub fn is_equivalent(original: &Policy, mutant: &Mutant) -> Result<bool> {
    policies_equivalent(original, &mutant.policy)
}

pub fn policies_equivalent(a: &Policy, b: &Policy) -> Result<bool> {
    if !a.same_entities(b) {
        return Err(Error::UniverseMismatch);
    }
    Ok(decision_table(a) == decision_table(b))
}

/// Equivalence flag per mutant, in mutant order.
pub fn classify_mutants(original: &Policy, mutants: &[Mutant], exec: Execution) -> Result<Vec<bool>> {
    if mutants.iter().any(|m| !original.same_entities(&m.policy)) {
        return Err(Error::UniverseMismatch);
    }
    let base = crate::pdp::decision_table_with(original, Execution::Sequential);
    Ok(exec.map(mutants, |m| {
        crate::pdp::decision_table_with(&m.policy, Execution::Sequential) == base
    }))
}

/// `killed / total`, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutationScore {
    killed: usize,
    total: usize,
}

impl MutationScore {
    pub fn new(killed: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::EmptyMutantSet);
        }
        assert!(killed <= total, "killed mutants exceed the total");
        Ok(Self { killed, total })
    }

    pub fn killed(&self) -> usize {
        self.killed
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Reduced fraction.
    pub fn ratio(&self) -> (usize, usize) {
        let g = gcd(self.killed, self.total);
        (self.killed / g, self.total / g)
    }

    pub fn as_f64(&self) -> f64 {
        self.killed as f64 / self.total as f64
    }

    pub fn is_complete(&self) -> bool {
        self.killed == self.total
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for MutationScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} = {:.3}", self.killed, self.total, self.as_f64())
    }
}

impl Serialize for MutationScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("MutationScore", 4)?;
        st.serialize_field("killed", &self.killed)?;
        st.serialize_field("total", &self.total)?;
        st.serialize_field("ratio", &format!("{}/{}", self.killed, self.total))?;
        st.serialize_field("score", &self.as_f64())?;
        st.end()
    }
}

/// Score from per-mutant kill flags.
pub fn mutation_score(killed_flags: &[bool]) -> Result<MutationScore> {
    MutationScore::new(killed_flags.iter().filter(|k| **k).count(), killed_flags.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub operator: OperatorKind,
    pub target: MutantTarget,
    pub substitution: Substitution,
    pub description: String,
    pub equivalent: bool,
    pub duplicate_of: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantManifest {
    pub policy: String,
    pub policy_hash: String,
    pub mutants: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn mutant_file_name(index: usize, m: &Mutant) -> String {
    format!("m{:04}_{}.acpol", index + 1, m.operator.as_str().to_ascii_lowercase())
}

pub fn build_manifest(original: &Policy, mutants: &[Mutant], equivalent: &[bool]) -> Result<MutantManifest> {
    Ok(MutantManifest {
        policy: original.name.clone(),
        policy_hash: policy_hash(original)?,
        mutants: mutants
            .iter()
            .zip(equivalent)
            .enumerate()
            .map(|(i, (m, eq))| ManifestEntry {
                index: i,
                file: mutant_file_name(i, m),
                operator: m.operator,
                target: m.target.clone(),
                substitution: m.substitution.clone(),
                description: m.describe(),
                equivalent: *eq,
                duplicate_of: m.duplicate_of,
            })
            .collect(),
    })
}

/// Writes one `.acpol` per mutant plus `manifest.json` into `dir`.
pub fn export_mutants(dir: &Path, original: &Policy, mutants: &[Mutant], equivalent: &[bool]) -> Result<MutantManifest> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = build_manifest(original, mutants, equivalent)?;
    for (entry, m) in manifest.mutants.iter().zip(mutants) {
        let path = dir.join(&entry.file);
        std::fs::write(&path, serialize_policy(&m.policy)?).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, crate::report::to_sorted_json(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads a directory written by [`export_mutants`].
pub fn load_mutants(dir: &Path) -> Result<(MutantManifest, Vec<Mutant>)> {
    let manifest: MutantManifest = serde_json::from_str(&read_text(&dir.join(MANIFEST_FILE))?)?;
    let mut mutants = Vec::with_capacity(manifest.mutants.len());
    for entry in &manifest.mutants {
        let policy = parse_policy(&read_text(&dir.join(&entry.file))?).map_err(Error::Parse)?;
        mutants.push(Mutant {
            policy,
            operator: entry.operator,
            target: entry.target.clone(),
            substitution: entry.substitution.clone(),
            duplicate_of: entry.duplicate_of,
        });
    }
    Ok((manifest, mutants))
}

/// Mutant counts per operator.
pub fn census(mutants: &[Mutant]) -> BTreeMap<OperatorKind, usize> {
    let mut out = BTreeMap::new();
    for m in mutants {
        *out.entry(m.operator).or_insert(0) += 1;
    }
    out
}
