//! Simulated information system with three kinds of access control:
//!
//! * visible explicit: the PEP asks the PDP backed by the visible policy;
//! * hidden explicit: hardcoded rules checked before the PEP, with no link
//!   to the policy;
//! * implicit: (role, action) capabilities the system simply lacks.
//!
//! Requests are evaluated in that reverse order: capability check, hidden
//! rules, then the visible PDP when it is enabled. With the visible layer
//! disabled, anything not stopped earlier is allowed.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_system_spec, read_policy, read_text};
use crate::pdp::{universe_decisions, Decision, Provenance};
use crate::policy::{validate_policy, EntityKind, Modality, Policy, Request, RuleTuple};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Capability {
    pub role: String,
    pub action: String,
}

impl Capability {
    pub fn new(role: impl Into<String>, action: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            action: action.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    /// Visible policy file, relative to the spec file's directory.
    pub policy_path: PathBuf,
    pub hidden_rules: Vec<RuleTuple>,
    pub missing_capabilities: Vec<Capability>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SystemOutcome {
    Allowed,
    /// `rule` is `None` when the visible default decided.
    DeniedByVisible { rule: Option<String> },
    DeniedByHidden { index: usize },
    NotExecutable { role: String, action: String },
}

impl SystemOutcome {
    pub fn modality(&self) -> Modality {
        match self {
            SystemOutcome::Allowed => Modality::Permission,
            _ => Modality::Prohibition,
        }
    }
}

impl fmt::Display for SystemOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemOutcome::Allowed => f.write_str("allowed"),
            SystemOutcome::DeniedByVisible { rule: Some(r) } => write!(f, "denied by visible rule {r}"),
            SystemOutcome::DeniedByVisible { rule: None } => f.write_str("denied by visible default"),
            SystemOutcome::DeniedByHidden { index } => write!(f, "denied by hidden rule #{index}"),
            SystemOutcome::NotExecutable { role, action } => {
                write!(f, "not executable: {role} has no capability {action}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSystem {
    spec: SystemSpec,
    visible_policy: Policy,
    visible_enabled: bool,
    visible: HashMap<Request, Decision>,
    role_chains: HashMap<String, Vec<String>>,
    action_chains: HashMap<String, Vec<String>>,
}

impl SimulatedSystem {
    /// Builds a system around an already loaded visible policy.
    pub fn new(spec: SystemSpec, visible_policy: Policy) -> Result<Self> {
        let report = validate_policy(&visible_policy);
        if !report.is_valid() {
            return Err(Error::InvalidPolicy(report));
        }
        let known = |kind: EntityKind, name: &str| {
            if visible_policy.is_declared(kind, name) {
                Ok(())
            } else {
                Err(Error::UnknownEntity {
                    kind,
                    name: name.to_owned(),
                })
            }
        };
        for h in &spec.hidden_rules {
            known(EntityKind::Role, &h.role)?;
            known(EntityKind::Action, &h.action)?;
            known(EntityKind::Context, &h.context)?;
        }
        for c in &spec.missing_capabilities {
            known(EntityKind::Role, &c.role)?;
            known(EntityKind::Action, &c.action)?;
            if !visible_policy.is_leaf(EntityKind::Action, &c.action) {
                return Err(Error::NotExecutable(c.action.clone()));
            }
        }

        let chains = |kind: EntityKind| -> HashMap<String, Vec<String>> {
            visible_policy
                .names(kind)
                .map(|n| {
                    let chain = crate::policy::ancestors_or_self(&visible_policy, kind, n)
                        .expect("name comes from the policy");
                    (n.to_owned(), chain)
                })
                .collect()
        };
        let role_chains = chains(EntityKind::Role);
        let action_chains = chains(EntityKind::Action);
        let visible = universe_decisions(&visible_policy, Execution::Sequential)
            .into_iter()
            .collect();

        Ok(Self {
            spec,
            visible_policy,
            visible_enabled: true,
            visible,
            role_chains,
            action_chains,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn visible_policy(&self) -> &Policy {
        &self.visible_policy
    }

    pub fn visible_enabled(&self) -> bool {
        self.visible_enabled
    }

    pub fn set_visible_enabled(&self, enabled: bool) -> SimulatedSystem {
        let mut out = self.clone();
        out.visible_enabled = enabled;
        out
    }

    /// Same system with a different visible policy (same entities).
    pub fn with_visible_policy(&self, policy: Policy) -> Result<SimulatedSystem> {
        if !policy.same_entities(&self.visible_policy) {
            return Err(Error::UniverseMismatch);
        }
        let mut out = SimulatedSystem::new(self.spec.clone(), policy)?;
        out.visible_enabled = self.visible_enabled;
        Ok(out)
    }

    /// Index of the most specific hidden rule that applies, if any. Ties go
    /// to prohibitions, then to the lower index.
    pub fn matching_hidden_rule(&self, request: &Request) -> Option<usize> {
        let roles = self.role_chains.get(&request.role)?;
        let actions = self.action_chains.get(&request.action)?;
        self.spec
            .hidden_rules
            .iter()
            .enumerate()
            .filter(|(_, h)| h.context == request.context)
            .filter_map(|(i, h)| {
                let dr = roles.iter().position(|r| *r == h.role)?;
                let da = actions.iter().position(|a| *a == h.action)?;
                let deny_first = u8::from(h.modality == Modality::Permission);
                Some(((dr + da, deny_first, i), i))
            })
            .min()
            .map(|(_, i)| i)
    }

    pub fn handle_request(&self, request: &Request) -> Result<SystemOutcome> {
        self.visible_policy.check_request(request)?;
        let missing = self
            .spec
            .missing_capabilities
            .iter()
            .any(|c| c.role == request.role && c.action == request.action);
        if missing {
            return Ok(SystemOutcome::NotExecutable {
                role: request.role.clone(),
                action: request.action.clone(),
            });
        }
        if let Some(i) = self.matching_hidden_rule(request) {
            return Ok(match self.spec.hidden_rules[i].modality {
                Modality::Prohibition => SystemOutcome::DeniedByHidden { index: i },
                Modality::Permission => SystemOutcome::Allowed,
            });
        }
        if !self.visible_enabled {
            return Ok(SystemOutcome::Allowed);
        }
        let decision = &self.visible[request];
        Ok(match decision.outcome {
            Modality::Permission => SystemOutcome::Allowed,
            Modality::Prohibition => SystemOutcome::DeniedByVisible {
                rule: match &decision.provenance {
                    Provenance::MatchedRule { rule, .. } => Some(rule.clone()),
                    Provenance::DefaultRule => None,
                },
            },
        })
    }
}

/// Reads the visible policy relative to `base_dir` and builds the system.
pub fn build_system(spec: SystemSpec, base_dir: &Path) -> Result<SimulatedSystem> {
    let policy = read_policy(&base_dir.join(&spec.policy_path))?;
    SimulatedSystem::new(spec, policy)
}

/// Loads a `.acsys` file and the policy it references.
pub fn load_system(path: &Path) -> Result<SimulatedSystem> {
    let spec = parse_system_spec(&read_text(path)?).map_err(Error::Parse)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    build_system(spec, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::faculty;
    use crate::pdp::{decide, request_universe};

    fn spec(hidden: Vec<RuleTuple>, missing: Vec<Capability>) -> SystemSpec {
        SystemSpec {
            name: "faculty_sys".into(),
            policy_path: "faculty.acpol".into(),
            hidden_rules: hidden,
            missing_capabilities: missing,
        }
    }

    fn req(r: &str, a: &str, c: &str) -> Request {
        Request::new(r, a, c)
    }

    #[test]
    fn clean_system_mirrors_pdp() {
        let p = faculty();
        let sys = SimulatedSystem::new(spec(vec![], vec![]), p.clone()).unwrap();
        assert!(sys.visible_enabled());
        for r in request_universe(&p) {
            assert_eq!(sys.handle_request(&r).unwrap().modality(), decide(&p, &r).unwrap().outcome);
        }
        assert_eq!(
            sys.handle_request(&req("teacher", "enter_marks", "studies")).unwrap(),
            SystemOutcome::DeniedByVisible { rule: Some("R3".into()) }
        );
        let off = sys.set_visible_enabled(false);
        assert_eq!(off.handle_request(&req("teacher", "enter_marks", "studies")).unwrap(), SystemOutcome::Allowed);
        assert!(sys.visible_enabled(), "original unchanged");
    }

    #[test]
    fn hidden_rule_precedes_visible() {
        let hidden = RuleTuple::new(Modality::Prohibition, "teacher", "enter_marks", "deliberation");
        let sys = SimulatedSystem::new(spec(vec![hidden], vec![]), faculty())
            .unwrap()
            .set_visible_enabled(false);
        assert_eq!(sys.spec().hidden_rules.len(), 1);
        assert_eq!(
            sys.handle_request(&req("teacher", "enter_marks", "deliberation")).unwrap(),
            SystemOutcome::DeniedByHidden { index: 0 }
        );
        // hidden rules do not reach other roles
        assert_eq!(
            sys.handle_request(&req("student", "enter_marks", "deliberation")).unwrap(),
            SystemOutcome::Allowed
        );
    }

    #[test]
    fn hidden_rules_follow_hierarchy_and_specificity() {
        let hidden = vec![
            RuleTuple::new(Modality::Prohibition, "user", "user_activities", "holiday"),
            RuleTuple::new(Modality::Permission, "student", "user_activities", "holiday"),
        ];
        let sys = SimulatedSystem::new(spec(hidden, vec![]), faculty()).unwrap();
        assert_eq!(
            sys.handle_request(&req("teacher", "access_courses", "holiday")).unwrap(),
            SystemOutcome::DeniedByHidden { index: 0 }
        );
        // more specific hidden permission bypasses the visible default deny
        assert_eq!(
            sys.handle_request(&req("student", "access_courses", "holiday")).unwrap(),
            SystemOutcome::Allowed
        );
    }

    #[test]
    fn missing_capability_is_not_executable_either_way() {
        let sys = SimulatedSystem::new(
            spec(vec![], vec![Capability::new("student", "enter_marks")]),
            faculty(),
        )
        .unwrap();
        let r = req("student", "enter_marks", "studies");
        let on = sys.handle_request(&r).unwrap();
        let off = sys.set_visible_enabled(false).handle_request(&r).unwrap();
        assert_eq!(on, off);
        assert!(matches!(on, SystemOutcome::NotExecutable { .. }));
    }

    #[test]
    fn toggling_visible_layer() {
        let p = faculty();
        let sys = SimulatedSystem::new(spec(vec![], vec![]), p.clone()).unwrap();
        let back = sys.set_visible_enabled(false).set_visible_enabled(true);
        let twice = sys.set_visible_enabled(false).set_visible_enabled(false);
        let once = sys.set_visible_enabled(false);
        for r in request_universe(&p) {
            assert_eq!(back.handle_request(&r).unwrap(), sys.handle_request(&r).unwrap());
            assert_eq!(twice.handle_request(&r).unwrap(), once.handle_request(&r).unwrap());
            assert_eq!(once.handle_request(&r).unwrap(), SystemOutcome::Allowed);
        }
    }

    #[test]
    fn spec_entities_must_exist() {
        let bad = RuleTuple::new(Modality::Prohibition, "dean", "enter_marks", "studies");
        assert!(matches!(
            SimulatedSystem::new(spec(vec![bad], vec![]), faculty()),
            Err(Error::UnknownEntity { .. })
        ));
        assert!(matches!(
            SimulatedSystem::new(spec(vec![], vec![Capability::new("user", "user_activities")]), faculty()),
            Err(Error::NotExecutable(_))
        ));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("faculty.acpol"), crate::fixtures::FACULTY_ACPOL).unwrap();
        let path = dir.path().join("legacy.acsys");
        std::fs::write(
            &path,
            "system legacy\npolicy faculty.acpol\nmissing_capability student enter_marks\n",
        )
        .unwrap();
        let sys = load_system(&path).unwrap();
        assert!(matches!(
            sys.handle_request(&req("student", "enter_marks", "holiday")).unwrap(),
            SystemOutcome::NotExecutable { .. }
        ));

        std::fs::write(&path, "system legacy\npolicy missing.acpol\n").unwrap();
        assert!(matches!(load_system(&path), Err(Error::Io { .. })));
    }
}
