//! The faculty management example and a seeded random policy generator.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::policy::{EntityKind, Modality, Policy, Rule, RuleTuple};

/// Source text of the faculty policy.
pub const FACULTY_ACPOL: &str = "\
# Faculty management system
policy faculty default prohibition

role personal
role administrator extends personal
role user
role student extends user
role teacher extends user

action create_account
action enter_marks
action user_activities
action consult_account extends user_activities
action benefit_services extends user_activities
action access_courses extends user_activities

context work_duration
context deliberation
context studies
context holiday
context default_ctx

rule R1 permission administrator create_account work_duration
rule R2 permission user user_activities work_duration
rule R3 prohibition teacher enter_marks studies
";

/// The faculty policy, built directly rather than parsed.
pub fn faculty() -> Policy {
    use EntityKind::*;
    Policy::new("faculty", Modality::Prohibition)
        .with_entity(Role, "personal", None)
        .with_entity(Role, "administrator", Some("personal"))
        .with_entity(Role, "user", None)
        .with_entity(Role, "student", Some("user"))
        .with_entity(Role, "teacher", Some("user"))
        .with_entity(Action, "create_account", None)
        .with_entity(Action, "enter_marks", None)
        .with_entity(Action, "user_activities", None)
        .with_entity(Action, "consult_account", Some("user_activities"))
        .with_entity(Action, "benefit_services", Some("user_activities"))
        .with_entity(Action, "access_courses", Some("user_activities"))
        .with_entity(Context, "work_duration", None)
        .with_entity(Context, "deliberation", None)
        .with_entity(Context, "studies", None)
        .with_entity(Context, "holiday", None)
        .with_entity(Context, "default_ctx", None)
        .with_rule(Rule::new("R1", Modality::Permission, "administrator", "create_account", "work_duration"))
        .with_rule(Rule::new("R2", Modality::Permission, "user", "user_activities", "work_duration"))
        .with_rule(Rule::new("R3", Modality::Prohibition, "teacher", "enter_marks", "studies"))
}

/// Upper bounds for [`random_policy`]. Every bound is at least 1.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicyConfig {
    pub max_roles: usize,
    pub max_leaf_actions: usize,
    pub max_activities: usize,
    pub max_contexts: usize,
    pub max_rules: usize,
}

impl Default for RandomPolicyConfig {
    fn default() -> Self {
        Self {
            max_roles: 6,
            max_leaf_actions: 6,
            max_activities: 2,
            max_contexts: 4,
            max_rules: 8,
        }
    }
}

/// A valid policy drawn deterministically from `seed`.
///
/// Roles get a random parent among earlier roles. Activities (non-leaf
/// actions) each receive at least one leaf child; rules may target
/// activities. Rule tuples are unique.
pub fn random_policy(seed: u64, cfg: RandomPolicyConfig) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let default = if rng.random_bool(0.5) {
        Modality::Permission
    } else {
        Modality::Prohibition
    };
    let mut policy = Policy::new(format!("random_{seed}"), default);

    let n_roles = rng.random_range(1..=cfg.max_roles.max(1));
    let mut roles: Vec<String> = Vec::new();
    for i in 0..n_roles {
        let name = format!("r{i}");
        let parent = if !roles.is_empty() && rng.random_bool(0.6) {
            roles.choose(&mut rng).cloned()
        } else {
            None
        };
        policy = policy.with_entity(EntityKind::Role, &name, parent.as_deref());
        roles.push(name);
    }

    let n_leaves = rng.random_range(1..=cfg.max_leaf_actions.max(1));
    let n_activities = rng.random_range(0..=cfg.max_activities.min(n_leaves));
    let activities: Vec<String> = (0..n_activities).map(|i| format!("g{i}")).collect();
    for g in &activities {
        policy = policy.with_entity(EntityKind::Action, g, None);
    }
    let mut actions: Vec<String> = activities.clone();
    for i in 0..n_leaves {
        let name = format!("a{i}");
        // first leaves guarantee every activity has a child
        let parent = if i < activities.len() {
            Some(activities[i].clone())
        } else if !activities.is_empty() && rng.random_bool(0.5) {
            activities.choose(&mut rng).cloned()
        } else {
            None
        };
        policy = policy.with_entity(EntityKind::Action, &name, parent.as_deref());
        actions.push(name);
    }

    let n_contexts = rng.random_range(1..=cfg.max_contexts.max(1));
    let contexts: Vec<String> = (0..n_contexts).map(|i| format!("c{i}")).collect();
    for c in &contexts {
        policy = policy.with_entity(EntityKind::Context, c, None);
    }

    let n_rules = rng.random_range(0..=cfg.max_rules);
    let mut attempts = 0;
    while policy.rules.len() < n_rules && attempts < n_rules * 20 {
        attempts += 1;
        let modality = if rng.random_bool(0.5) {
            Modality::Permission
        } else {
            Modality::Prohibition
        };
        let tuple = RuleTuple::new(
            modality,
            roles.choose(&mut rng).unwrap().clone(),
            actions.choose(&mut rng).unwrap().clone(),
            contexts.choose(&mut rng).unwrap().clone(),
        );
        if policy.contains_tuple(&tuple) {
            continue;
        }
        let id = format!("R{}", policy.rules.len() + 1);
        policy.rules.push(tuple.with_id(id));
    }
    policy
}
