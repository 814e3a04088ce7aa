//! Domain model: entities, hierarchies, rules and policies.
//!
//! Roles and actions form single-inheritance forests; contexts are flat
//! labels. Only leaf actions are executable, non-leaf actions stand for
//! activities that group them. A [`Policy`] value may be malformed;
//! [`validate_policy`] reports every structural problem without failing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Role,
    Action,
    Context,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Role => "role",
            EntityKind::Action => "action",
            EntityKind::Context => "context",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Permission,
    Prohibition,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Permission => "permission",
            Modality::Prohibition => "prohibition",
        }
    }

    pub fn flipped(self) -> Modality {
        match self {
            Modality::Permission => Modality::Prohibition,
            Modality::Prohibition => Modality::Permission,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "permission" => Ok(Modality::Permission),
            "prohibition" => Ok(Modality::Prohibition),
            other => Err(format!("expected `permission` or `prohibition`, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub kind: EntityKind,
    pub parent: Option<String>,
}

impl Entity {
    pub fn new(kind: EntityKind, name: impl Into<String>, parent: Option<&str>) -> Self {
        Self {
            name: name.into(),
            kind,
            parent: parent.map(str::to_owned),
        }
    }
}

/// One security statement `modality(role, action, context)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub modality: Modality,
    pub role: String,
    pub action: String,
    pub context: String,
}

impl Rule {
    pub fn new(
        id: impl Into<String>,
        modality: Modality,
        role: impl Into<String>,
        action: impl Into<String>,
        context: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            modality,
            role: role.into(),
            action: action.into(),
            context: context.into(),
        }
    }

    /// The rule without its id.
    pub fn tuple(&self) -> RuleTuple {
        RuleTuple {
            modality: self.modality,
            role: self.role.clone(),
            action: self.action.clone(),
            context: self.context.clone(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.id, self.tuple())
    }
}

/// A rule-shaped statement without identity, used for hidden rules and
/// candidate additions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleTuple {
    pub modality: Modality,
    pub role: String,
    pub action: String,
    pub context: String,
}

impl RuleTuple {
    pub fn new(
        modality: Modality,
        role: impl Into<String>,
        action: impl Into<String>,
        context: impl Into<String>,
    ) -> Self {
        Self {
            modality,
            role: role.into(),
            action: action.into(),
            context: context.into(),
        }
    }

    pub fn with_id(&self, id: impl Into<String>) -> Rule {
        Rule::new(
            id,
            self.modality,
            self.role.clone(),
            self.action.clone(),
            self.context.clone(),
        )
    }
}

impl fmt::Display for RuleTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}, {}, {})",
            self.modality, self.role, self.action, self.context
        )
    }
}

/// An access request. Ordered lexicographically by (role, action, context).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Request {
    pub role: String,
    pub action: String,
    pub context: String,
}

impl Request {
    pub fn new(role: impl Into<String>, action: impl Into<String>, context: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            action: action.into(),
            context: context.into(),
        }
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.role, self.action, self.context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub entities: Vec<Entity>,
    pub rules: Vec<Rule>,
    pub default_decision: Modality,
}

impl Policy {
    pub fn new(name: impl Into<String>, default_decision: Modality) -> Self {
        Self {
            name: name.into(),
            entities: Vec::new(),
            rules: Vec::new(),
            default_decision,
        }
    }

    pub fn with_entity(mut self, kind: EntityKind, name: &str, parent: Option<&str>) -> Self {
        self.entities.push(Entity::new(kind, name, parent));
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn entity(&self, kind: EntityKind, name: &str) -> Option<&Entity> {
        self.entities
            .iter()
            .find(|e| e.kind == kind && e.name == name)
    }

    pub fn is_declared(&self, kind: EntityKind, name: &str) -> bool {
        self.entity(kind, name).is_some()
    }

    /// Declared names of one kind, in declaration order.
    pub fn names(&self, kind: EntityKind) -> impl Iterator<Item = &str> {
        self.entities
            .iter()
            .filter(move |e| e.kind == kind)
            .map(|e| e.name.as_str())
    }

    pub fn children<'a>(&'a self, kind: EntityKind, name: &'a str) -> impl Iterator<Item = &'a str> {
        self.entities
            .iter()
            .filter(move |e| e.kind == kind && e.parent.as_deref() == Some(name))
            .map(|e| e.name.as_str())
    }

    pub fn is_leaf(&self, kind: EntityKind, name: &str) -> bool {
        self.children(kind, name).next().is_none()
    }

    /// Sorted role names.
    pub fn roles(&self) -> Vec<&str> {
        sorted(self.names(EntityKind::Role))
    }

    /// Sorted leaf (executable) action names.
    pub fn leaf_actions(&self) -> Vec<&str> {
        sorted(
            self.names(EntityKind::Action)
                .filter(|a| self.is_leaf(EntityKind::Action, a)),
        )
    }

    /// Sorted context names.
    pub fn contexts(&self) -> Vec<&str> {
        sorted(self.names(EntityKind::Context))
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn contains_tuple(&self, tuple: &RuleTuple) -> bool {
        self.rules.iter().any(|r| &r.tuple() == tuple)
    }

    /// Same policy with a different rule list.
    pub fn with_rules(&self, rules: Vec<Rule>) -> Policy {
        Policy {
            name: self.name.clone(),
            entities: self.entities.clone(),
            rules,
            default_decision: self.default_decision,
        }
    }

    /// True when both policies declare the same entities with the same
    /// parents, regardless of declaration order.
    pub fn same_entities(&self, other: &Policy) -> bool {
        let mine: HashSet<&Entity> = self.entities.iter().collect();
        let theirs: HashSet<&Entity> = other.entities.iter().collect();
        mine == theirs && self.entities.len() == other.entities.len()
    }

    /// Structural equality: entity sets, rule lists and default compared,
    /// entity declaration order ignored.
    pub fn structurally_eq(&self, other: &Policy) -> bool {
        self.name == other.name
            && self.default_decision == other.default_decision
            && self.rules == other.rules
            && self.same_entities(other)
    }

    /// Checks that a request names declared entities and a leaf action.
    pub fn check_request(&self, request: &Request) -> Result<()> {
        for (kind, name) in [
            (EntityKind::Role, &request.role),
            (EntityKind::Action, &request.action),
            (EntityKind::Context, &request.context),
        ] {
            if !self.is_declared(kind, name) {
                return Err(Error::UnknownEntity {
                    kind,
                    name: name.clone(),
                });
            }
        }
        if !self.is_leaf(EntityKind::Action, &request.action) {
            return Err(Error::NotExecutable(request.action.clone()));
        }
        Ok(())
    }
}

fn sorted<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut v: Vec<&str> = names.collect();
    v.sort_unstable();
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateEntity,
    UnknownParent,
    ParentKindMismatch,
    ContextHierarchy,
    Cycle,
    DuplicateRuleId,
    UnknownEntity,
    DuplicateRule,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Entity name or rule id the violation is about.
    pub subject: String,
    pub kind: ViolationKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: &str, kind: ViolationKind, reason: String) {
        self.violations.push(Violation {
            subject: subject.to_owned(),
            kind,
            reason,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        let lines: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.subject, v.reason))
            .collect();
        f.write_str(&lines.join("; "))
    }
}

/// Reports every structural invariant violation. Never fails.
pub fn validate_policy(policy: &Policy) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen: BTreeSet<(EntityKind, &str)> = BTreeSet::new();
    for e in &policy.entities {
        if !seen.insert((e.kind, e.name.as_str())) {
            report.push(
                &e.name,
                ViolationKind::DuplicateEntity,
                format!("{} `{}` declared more than once", e.kind, e.name),
            );
        }
    }

    for e in &policy.entities {
        let Some(parent) = &e.parent else { continue };
        if e.kind == EntityKind::Context {
            report.push(
                &e.name,
                ViolationKind::ContextHierarchy,
                format!("context `{}` cannot have a parent", e.name),
            );
            continue;
        }
        if policy.is_declared(e.kind, parent) {
            continue;
        }
        let other_kind = policy
            .entities
            .iter()
            .any(|o| o.name == *parent && o.kind != e.kind);
        if other_kind {
            report.push(
                &e.name,
                ViolationKind::ParentKindMismatch,
                format!("parent `{parent}` of {} `{}` is not a {}", e.kind, e.name, e.kind),
            );
        } else {
            report.push(
                &e.name,
                ViolationKind::UnknownParent,
                format!("parent `{parent}` of {} `{}` is not declared", e.kind, e.name),
            );
        }
    }

    for kind in [EntityKind::Role, EntityKind::Action] {
        for cycle in find_cycles(policy, kind) {
            report.push(
                &cycle[0],
                ViolationKind::Cycle,
                format!("{kind} hierarchy cycle: {}", cycle.join(" -> ")),
            );
        }
    }

    let mut ids = HashSet::new();
    let mut tuples = HashSet::new();
    for rule in &policy.rules {
        if !ids.insert(rule.id.as_str()) {
            report.push(
                &rule.id,
                ViolationKind::DuplicateRuleId,
                format!("rule id `{}` used more than once", rule.id),
            );
        }
        for (kind, name) in [
            (EntityKind::Role, &rule.role),
            (EntityKind::Action, &rule.action),
            (EntityKind::Context, &rule.context),
        ] {
            if !policy.is_declared(kind, name) {
                report.push(
                    &rule.id,
                    ViolationKind::UnknownEntity,
                    format!("rule `{}` names undeclared {kind} `{name}`", rule.id),
                );
            }
        }
        if !tuples.insert(rule.tuple()) {
            report.push(
                &rule.id,
                ViolationKind::DuplicateRule,
                format!("rule `{}` repeats {}", rule.id, rule.tuple()),
            );
        }
    }

    if policy.names(EntityKind::Role).next().is_none() {
        report.push(&policy.name, ViolationKind::Empty, "policy declares no role".into());
    }
    if policy.leaf_actions().is_empty() {
        report.push(
            &policy.name,
            ViolationKind::Empty,
            "policy declares no leaf action".into(),
        );
    }
    if policy.names(EntityKind::Context).next().is_none() {
        report.push(&policy.name, ViolationKind::Empty, "policy declares no context".into());
    }

    report
}

/// Each cycle once, as the list of its members starting from the smallest name.
fn find_cycles(policy: &Policy, kind: EntityKind) -> Vec<Vec<String>> {
    let parents: BTreeMap<&str, &str> = policy
        .entities
        .iter()
        .filter(|e| e.kind == kind)
        .filter_map(|e| e.parent.as_deref().map(|p| (e.name.as_str(), p)))
        .collect();

    let mut reported: BTreeSet<Vec<String>> = BTreeSet::new();
    for &start in parents.keys() {
        let mut path: Vec<&str> = vec![start];
        let mut cur = start;
        while let Some(&next) = parents.get(cur) {
            if let Some(pos) = path.iter().position(|&n| n == next) {
                let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                let min = cycle
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                cycle.rotate_left(min);
                reported.insert(cycle);
                break;
            }
            path.push(next);
            cur = next;
        }
    }
    reported
        .into_iter()
        .map(|mut c| {
            c.push(c[0].clone());
            c
        })
        .collect()
}

/// `entity` followed by its ancestors, root last.
pub fn ancestors_or_self(policy: &Policy, kind: EntityKind, entity: &str) -> Result<Vec<String>> {
    let mut cur = policy.entity(kind, entity).ok_or_else(|| Error::UnknownEntity {
        kind,
        name: entity.to_owned(),
    })?;
    let mut chain = vec![cur.name.clone()];
    while let Some(parent) = &cur.parent {
        // A cycle can only come from an unvalidated policy.
        if chain.contains(parent) {
            break;
        }
        match policy.entity(kind, parent) {
            Some(p) => {
                chain.push(p.name.clone());
                cur = p;
            }
            None => break,
        }
    }
    Ok(chain)
}

pub fn descendants_or_self(
    policy: &Policy,
    kind: EntityKind,
    entity: &str,
) -> Result<BTreeSet<String>> {
    if !policy.is_declared(kind, entity) {
        return Err(Error::UnknownEntity {
            kind,
            name: entity.to_owned(),
        });
    }
    let mut out = BTreeSet::from([entity.to_owned()]);
    let mut frontier = vec![entity.to_owned()];
    while let Some(name) = frontier.pop() {
        for child in policy.children(kind, &name) {
            if out.insert(child.to_owned()) {
                frontier.push(child.to_owned());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::faculty;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn faculty_is_valid() {
        let report = validate_policy(&faculty());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn undeclared_role_is_reported() {
        let p = faculty().with_rule(Rule::new(
            "R4",
            Modality::Permission,
            "dean",
            "enter_marks",
            "studies",
        ));
        let report = validate_policy(&p);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::UnknownEntity);
        assert!(report.violations[0].reason.contains("dean"));
    }

    #[test]
    fn role_cycle_is_reported_once() {
        let p = Policy::new("cyc", Modality::Prohibition)
            .with_entity(EntityKind::Role, "a", Some("b"))
            .with_entity(EntityKind::Role, "b", Some("a"))
            .with_entity(EntityKind::Action, "x", None)
            .with_entity(EntityKind::Context, "c", None);
        let report = validate_policy(&p);
        assert_eq!(report.violations.len(), 1, "{report}");
        assert_eq!(report.violations[0].kind, ViolationKind::Cycle);
        // hierarchy queries still terminate
        assert_eq!(ancestors_or_self(&p, EntityKind::Role, "a").unwrap(), names(&["a", "b"]));
    }

    #[test]
    fn context_parent_and_duplicates() {
        let p = Policy::new("bad", Modality::Permission)
            .with_entity(EntityKind::Role, "r", None)
            .with_entity(EntityKind::Role, "r", None)
            .with_entity(EntityKind::Action, "x", None)
            .with_entity(EntityKind::Context, "c", None)
            .with_entity(EntityKind::Context, "d", Some("c"))
            .with_rule(Rule::new("A", Modality::Permission, "r", "x", "c"))
            .with_rule(Rule::new("A", Modality::Permission, "r", "x", "c"));
        let kinds: Vec<ViolationKind> = validate_policy(&p)
            .violations
            .into_iter()
            .map(|v| v.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::DuplicateEntity,
                ViolationKind::ContextHierarchy,
                ViolationKind::DuplicateRuleId,
                ViolationKind::DuplicateRule,
            ]
        );
    }

    #[test]
    fn empty_policy_reports_missing_sections() {
        let report = validate_policy(&Policy::new("e", Modality::Permission));
        assert_eq!(report.violations.len(), 3);
        assert!(report.violations.iter().all(|v| v.kind == ViolationKind::Empty));
    }

    #[test]
    fn hierarchy_queries_on_faculty() {
        let p = faculty();
        assert_eq!(
            ancestors_or_self(&p, EntityKind::Role, "teacher").unwrap(),
            names(&["teacher", "user"])
        );
        assert_eq!(ancestors_or_self(&p, EntityKind::Role, "user").unwrap(), names(&["user"]));
        assert_eq!(
            ancestors_or_self(&p, EntityKind::Action, "access_courses").unwrap(),
            names(&["access_courses", "user_activities"])
        );
        assert_eq!(
            descendants_or_self(&p, EntityKind::Role, "user").unwrap(),
            BTreeSet::from(["user", "student", "teacher"].map(String::from))
        );
        assert_eq!(
            descendants_or_self(&p, EntityKind::Role, "administrator").unwrap(),
            BTreeSet::from(["administrator".to_string()])
        );
        assert_eq!(
            descendants_or_self(&p, EntityKind::Action, "user_activities").unwrap(),
            BTreeSet::from(
                ["user_activities", "consult_account", "benefit_services", "access_courses"]
                    .map(String::from)
            )
        );
    }

    #[test]
    fn unknown_entity_in_queries() {
        let p = faculty();
        assert!(matches!(
            ancestors_or_self(&p, EntityKind::Role, "dean"),
            Err(Error::UnknownEntity { .. })
        ));
        // names are per kind
        assert!(descendants_or_self(&p, EntityKind::Action, "user").is_err());
    }

    #[test]
    fn request_checks() {
        let p = faculty();
        assert!(p.check_request(&Request::new("user", "access_courses", "studies")).is_ok());
        assert!(matches!(
            p.check_request(&Request::new("user", "user_activities", "studies")),
            Err(Error::NotExecutable(_))
        ));
        assert!(matches!(
            p.check_request(&Request::new("user", "access_courses", "weekend")),
            Err(Error::UnknownEntity { kind: EntityKind::Context, .. })
        ));
    }
}
