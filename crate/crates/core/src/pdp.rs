//! Policy Decision Point.
//!
//! A rule applies to a request when its role is the request role or one of
//! its ancestors, its action is the request action or one of its ancestors,
//! and its context is the request context. Among applicable rules the most
//! specific one wins (smallest role distance + action distance); ties go to
//! Prohibition, then to the smallest rule id. Requests with no applicable
//! rule get the policy default.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::policy::{descendants_or_self, EntityKind, Modality, Policy, Request, Rule};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    MatchedRule {
        rule: String,
        role_distance: usize,
        action_distance: usize,
    },
    DefaultRule,
}

impl Provenance {
    pub fn rule_id(&self) -> Option<&str> {
        match self {
            Provenance::MatchedRule { rule, .. } => Some(rule),
            Provenance::DefaultRule => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Modality,
    pub provenance: Provenance,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.provenance {
            Provenance::MatchedRule { rule, .. } => write!(f, "{} (rule {rule})", self.outcome),
            Provenance::DefaultRule => write!(f, "{} (default)", self.outcome),
        }
    }
}

/// A primary rule expanded to one leaf action and one concrete role.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConcreteRule {
    pub origin: String,
    pub modality: Modality,
    pub role: String,
    pub action: String,
    pub context: String,
}

impl ConcreteRule {
    pub fn request(&self) -> Request {
        Request::new(&self.role, &self.action, &self.context)
    }
}

/// Precomputed hierarchy chains for repeated evaluation of one policy.
#[derive(Debug)]
pub struct Pdp<'a> {
    policy: &'a Policy,
    role_chains: HashMap<&'a str, Vec<&'a str>>,
    action_chains: HashMap<&'a str, Vec<&'a str>>,
    by_context: HashMap<&'a str, Vec<&'a Rule>>,
}

impl<'a> Pdp<'a> {
    pub fn new(policy: &'a Policy) -> Self {
        let mut by_context: HashMap<&str, Vec<&Rule>> = HashMap::new();
        for rule in &policy.rules {
            by_context.entry(rule.context.as_str()).or_default().push(rule);
        }
        Self {
            policy,
            role_chains: chains(policy, EntityKind::Role),
            action_chains: chains(policy, EntityKind::Action),
            by_context,
        }
    }

    pub fn policy(&self) -> &'a Policy {
        self.policy
    }

    /// Applicable rules with their role and action distances, in policy order.
    pub fn applicable_rules(&self, request: &Request) -> Result<Vec<(&'a Rule, usize, usize)>> {
        self.policy.check_request(request)?;
        let roles = &self.role_chains[request.role.as_str()];
        let actions = &self.action_chains[request.action.as_str()];
        let Some(candidates) = self.by_context.get(request.context.as_str()) else {
            return Ok(Vec::new());
        };
        Ok(candidates
            .iter()
            .filter_map(|rule| {
                let dr = roles.iter().position(|r| *r == rule.role)?;
                let da = actions.iter().position(|a| *a == rule.action)?;
                Some((*rule, dr, da))
            })
            .collect())
    }

    pub fn decide(&self, request: &Request) -> Result<Decision> {
        let applicable = self.applicable_rules(request)?;
        let best = applicable.into_iter().min_by(|a, b| {
            (a.1 + a.2)
                .cmp(&(b.1 + b.2))
                .then_with(|| prohibition_first(a.0.modality).cmp(&prohibition_first(b.0.modality)))
                .then_with(|| a.0.id.cmp(&b.0.id))
        });
        Ok(match best {
            Some((rule, dr, da)) => Decision {
                outcome: rule.modality,
                provenance: Provenance::MatchedRule {
                    rule: rule.id.clone(),
                    role_distance: dr,
                    action_distance: da,
                },
            },
            None => Decision {
                outcome: self.policy.default_decision,
                provenance: Provenance::DefaultRule,
            },
        })
    }
}

fn prohibition_first(m: Modality) -> u8 {
    match m {
        Modality::Prohibition => 0,
        Modality::Permission => 1,
    }
}

fn chains(policy: &Policy, kind: EntityKind) -> HashMap<&str, Vec<&str>> {
    let parents: HashMap<&str, Option<&str>> = policy
        .entities
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| (e.name.as_str(), e.parent.as_deref()))
        .collect();
    parents
        .keys()
        .map(|&name| {
            let mut chain = vec![name];
            let mut cur = name;
            while let Some(Some(p)) = parents.get(cur) {
                if chain.contains(p) {
                    break;
                }
                chain.push(p);
                cur = p;
            }
            (name, chain)
        })
        .collect()
}

pub fn applicable_rules(policy: &Policy, request: &Request) -> Result<Vec<(Rule, usize, usize)>> {
    Ok(Pdp::new(policy)
        .applicable_rules(request)?
        .into_iter()
        .map(|(r, dr, da)| (r.clone(), dr, da))
        .collect())
}

pub fn decide(policy: &Policy, request: &Request) -> Result<Decision> {
    Pdp::new(policy).decide(request)
}

/// Expands every primary rule over the descendants of its role and the leaf
/// descendants of its action. Rules naming undeclared entities expand to
/// nothing.
pub fn derive_concrete_rules(policy: &Policy) -> BTreeSet<ConcreteRule> {
    policy.rules.iter().flat_map(|r| derive_rule(policy, r)).collect()
}

/// Concrete rules of one primary rule, sorted by (role, action).
pub fn derive_rule(policy: &Policy, rule: &Rule) -> Vec<ConcreteRule> {
    let (Ok(roles), Ok(actions)) = (
        descendants_or_self(policy, EntityKind::Role, &rule.role),
        descendants_or_self(policy, EntityKind::Action, &rule.action),
    ) else {
        return Vec::new();
    };
    let leaves: Vec<&String> = actions
        .iter()
        .filter(|a| policy.is_leaf(EntityKind::Action, a))
        .collect();
    roles
        .iter()
        .flat_map(|role| {
            leaves.iter().map(move |action| ConcreteRule {
                origin: rule.id.clone(),
                modality: rule.modality,
                role: role.clone(),
                action: (*action).clone(),
                context: rule.context.clone(),
            })
        })
        .collect()
}

/// Every (role, leaf action, context) triple, sorted.
pub fn request_universe(policy: &Policy) -> Vec<Request> {
    let roles = policy.roles();
    let actions = policy.leaf_actions();
    let contexts = policy.contexts();
    let mut out = Vec::with_capacity(roles.len() * actions.len() * contexts.len());
    for r in &roles {
        for a in &actions {
            for c in &contexts {
                out.push(Request::new(*r, *a, *c));
            }
        }
    }
    out
}

/// Outcome of every universe request, sorted by request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTable {
    entries: Vec<(Request, Modality)>,
}

impl DecisionTable {
    pub fn entries(&self) -> &[(Request, Modality)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, request: &Request) -> Option<Modality> {
        self.entries
            .binary_search_by(|(r, _)| r.cmp(request))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn count(&self, outcome: Modality) -> usize {
        self.entries.iter().filter(|(_, m)| *m == outcome).count()
    }

    /// Requests whose outcome differs. Both tables must cover the same universe.
    pub fn diff(&self, other: &DecisionTable) -> Result<Vec<Request>> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::UniverseMismatch);
        }
        let mut out = Vec::new();
        for ((ra, ma), (rb, mb)) in self.entries.iter().zip(&other.entries) {
            if ra != rb {
                return Err(Error::UniverseMismatch);
            }
            if ma != mb {
                out.push(ra.clone());
            }
        }
        Ok(out)
    }
}

/// Decisions for the whole universe, in universe order.
pub fn universe_decisions(policy: &Policy, exec: Execution) -> Vec<(Request, Decision)> {
    let pdp = Pdp::new(policy);
    let universe = request_universe(policy);
    exec.map(&universe, |req| {
        let d = pdp
            .decide(req)
            .expect("universe requests are built from the policy's own entities");
        (req.clone(), d)
    })
}

pub fn decision_table(policy: &Policy) -> DecisionTable {
    decision_table_with(policy, Execution::default())
}

pub fn decision_table_with(policy: &Policy, exec: Execution) -> DecisionTable {
    DecisionTable {
        entries: universe_decisions(policy, exec)
            .into_iter()
            .map(|(r, d)| (r, d.outcome))
            .collect(),
    }
}
