//! Text formats: the `.acpol` policy language, the `.acsys` system
//! description and the micro-evolution deltas file.
//!
//! All three are line oriented. `#` starts a comment that runs to the end of
//! the line, tokens are separated by any whitespace and blank lines are
//! ignored. Names must be declared before they are used.
//!
//! ```text
//! policy <name> default <permission|prohibition>
//! role <name> [extends <name>]
//! action <name> [extends <name>]
//! context <name>
//! rule <id> <permission|prohibition> <role> <action> <context>
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::MicroEvolution;
use crate::error::{Error, Result};
use crate::policy::{validate_policy, EntityKind, Modality, Policy, Rule, RuleTuple};
use crate::sim::{Capability, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        Self { line, column }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Syntax,
    UnknownEntity,
    DuplicateDeclaration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    span: SourceSpan,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

impl Line<'_> {
    fn end_span(&self) -> SourceSpan {
        self.tokens
            .last()
            .map(|t| SourceSpan::new(self.number, t.span.column + t.text.chars().count()))
            .unwrap_or(SourceSpan::new(self.number, 1))
    }
}

/// Non-empty lines with comments removed.
fn lex(text: &str) -> Vec<Line<'_>> {
    text.split('\n')
        .enumerate()
        .filter_map(|(idx, raw)| {
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            let code = raw.split('#').next().unwrap_or("");
            let mut tokens = Vec::new();
            let mut start: Option<(usize, usize)> = None; // (byte, column)
            for (col, (byte, ch)) in code.char_indices().enumerate() {
                if ch.is_whitespace() {
                    if let Some((b, c)) = start.take() {
                        tokens.push(Token {
                            text: &code[b..byte],
                            span: SourceSpan::new(idx + 1, c + 1),
                        });
                    }
                } else if start.is_none() {
                    start = Some((byte, col));
                }
            }
            if let Some((b, c)) = start {
                tokens.push(Token {
                    text: &code[b..],
                    span: SourceSpan::new(idx + 1, c + 1),
                });
            }
            (!tokens.is_empty()).then_some(Line {
                number: idx + 1,
                tokens,
            })
        })
        .collect()
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn is_rule_id(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Diagnostics(Vec<ParseError>);

impl Diagnostics {
    fn push(&mut self, span: SourceSpan, kind: ParseErrorKind, message: impl Into<String>) {
        self.0.push(ParseError {
            span,
            kind,
            message: message.into(),
        });
    }

    fn syntax(&mut self, span: SourceSpan, message: impl Into<String>) {
        self.push(span, ParseErrorKind::Syntax, message);
    }

    /// Checks the exact token count, reporting a usage hint otherwise.
    fn arity(&mut self, line: &Line<'_>, allowed: &[usize], usage: &str) -> bool {
        if allowed.contains(&line.tokens.len()) {
            return true;
        }
        let span = if line.tokens.len() > *allowed.iter().max().unwrap_or(&0) {
            line.tokens[*allowed.iter().max().unwrap_or(&0)].span
        } else {
            line.end_span()
        };
        self.syntax(span, format!("expected `{usage}`"));
        false
    }

    fn identifier(&mut self, tok: Token<'_>, what: &str) -> bool {
        if is_identifier(tok.text) {
            return true;
        }
        self.syntax(tok.span, format!("invalid {what} name `{}`", tok.text));
        false
    }

    fn modality(&mut self, tok: Token<'_>) -> Option<Modality> {
        match tok.text.parse() {
            Ok(m) => Some(m),
            Err(msg) => {
                self.syntax(tok.span, msg);
                None
            }
        }
    }
}

pub fn parse_policy(text: &str) -> std::result::Result<Policy, Vec<ParseError>> {
    let lines = lex(text);
    let mut diag = Diagnostics(Vec::new());
    let mut policy = Policy::new("", Modality::Prohibition);

    let mut body = &lines[..];
    match lines.first() {
        None => diag.syntax(SourceSpan::new(1, 1), "missing policy header"),
        Some(first) if first.tokens[0].text != "policy" => {
            diag.syntax(first.tokens[0].span, "missing policy header");
        }
        Some(first) => {
            body = &lines[1..];
            if diag.arity(first, &[4], "policy <name> default <permission|prohibition>") {
                let t = &first.tokens;
                if diag.identifier(t[1], "policy") {
                    policy.name = t[1].text.to_owned();
                }
                if t[2].text != "default" {
                    diag.syntax(t[2].span, format!("expected `default`, found `{}`", t[2].text));
                }
                if let Some(m) = diag.modality(t[3]) {
                    policy.default_decision = m;
                }
            }
        }
    }

    let mut declared: HashMap<(EntityKind, String), SourceSpan> = HashMap::new();
    let mut rule_ids: HashMap<String, SourceSpan> = HashMap::new();
    let mut tuples: HashMap<RuleTuple, String> = HashMap::new();

    for line in body {
        let t = &line.tokens;
        match t[0].text {
            "policy" => diag.push(
                t[0].span,
                ParseErrorKind::DuplicateDeclaration,
                "policy header declared twice",
            ),
            kw @ ("role" | "action") => {
                let kind = if kw == "role" { EntityKind::Role } else { EntityKind::Action };
                let usage = format!("{kw} <name> [extends <name>]");
                if !diag.arity(line, &[2, 4], &usage) || !diag.identifier(t[1], kw) {
                    continue;
                }
                let mut parent = None;
                if t.len() == 4 {
                    if t[2].text != "extends" {
                        diag.syntax(t[2].span, format!("expected `extends`, found `{}`", t[2].text));
                        continue;
                    }
                    if !declared.contains_key(&(kind, t[3].text.to_owned())) {
                        diag.push(
                            t[3].span,
                            ParseErrorKind::UnknownEntity,
                            format!("unknown {kind} `{}`", t[3].text),
                        );
                        continue;
                    }
                    parent = Some(t[3].text);
                }
                declare(&mut diag, &mut declared, &mut policy, kind, t[1], parent);
            }
            "context" => {
                if t.len() > 2 && t[2].text == "extends" {
                    diag.syntax(t[2].span, "contexts cannot extend other contexts");
                    continue;
                }
                if !diag.arity(line, &[2], "context <name>") || !diag.identifier(t[1], "context") {
                    continue;
                }
                declare(&mut diag, &mut declared, &mut policy, EntityKind::Context, t[1], None);
            }
            "rule" => {
                if !diag.arity(
                    line,
                    &[6],
                    "rule <id> <permission|prohibition> <role> <action> <context>",
                ) {
                    continue;
                }
                let mut ok = true;
                if !is_rule_id(t[1].text) {
                    diag.syntax(t[1].span, format!("invalid rule id `{}`", t[1].text));
                    ok = false;
                } else if let Some(prev) = rule_ids.get(t[1].text) {
                    diag.push(
                        t[1].span,
                        ParseErrorKind::DuplicateDeclaration,
                        format!("rule `{}` already declared at {prev}", t[1].text),
                    );
                    ok = false;
                }
                let modality = diag.modality(t[2]);
                for (kind, tok) in [
                    (EntityKind::Role, t[3]),
                    (EntityKind::Action, t[4]),
                    (EntityKind::Context, t[5]),
                ] {
                    if !declared.contains_key(&(kind, tok.text.to_owned())) {
                        diag.push(
                            tok.span,
                            ParseErrorKind::UnknownEntity,
                            format!("unknown {kind} `{}`", tok.text),
                        );
                        ok = false;
                    }
                }
                let (Some(modality), true) = (modality, ok) else { continue };
                let rule = Rule::new(t[1].text, modality, t[3].text, t[4].text, t[5].text);
                if let Some(other) = tuples.get(&rule.tuple()) {
                    diag.push(
                        t[1].span,
                        ParseErrorKind::DuplicateDeclaration,
                        format!("rule `{}` repeats rule `{other}`", rule.id),
                    );
                    continue;
                }
                rule_ids.insert(rule.id.clone(), t[1].span);
                tuples.insert(rule.tuple(), rule.id.clone());
                policy.rules.push(rule);
            }
            other => diag.syntax(t[0].span, format!("unknown directive `{other}`")),
        }
    }

    if diag.0.is_empty() {
        let end = SourceSpan::new(lines.last().map_or(1, |l| l.number), 1);
        if policy.names(EntityKind::Role).next().is_none() {
            diag.syntax(end, "policy declares no role");
        }
        if policy.leaf_actions().is_empty() {
            diag.syntax(end, "policy declares no action");
        }
        if policy.names(EntityKind::Context).next().is_none() {
            diag.syntax(end, "policy declares no context");
        }
    }
    if diag.0.is_empty() {
        let report = validate_policy(&policy);
        for v in report.violations {
            diag.syntax(SourceSpan::new(1, 1), v.reason);
        }
    }

    if diag.0.is_empty() {
        Ok(policy)
    } else {
        Err(diag.0)
    }
}

fn declare(
    diag: &mut Diagnostics,
    declared: &mut HashMap<(EntityKind, String), SourceSpan>,
    policy: &mut Policy,
    kind: EntityKind,
    name: Token<'_>,
    parent: Option<&str>,
) {
    let key = (kind, name.text.to_owned());
    if let Some(prev) = declared.get(&key) {
        diag.push(
            name.span,
            ParseErrorKind::DuplicateDeclaration,
            format!("{kind} `{}` already declared at {prev}", name.text),
        );
        return;
    }
    declared.insert(key, name.span);
    policy.entities.push(crate::policy::Entity::new(kind, name.text, parent));
}

/// Renders a policy in the `.acpol` language. Parents are always written
/// before their children; otherwise declaration order is kept.
pub fn serialize_policy(policy: &Policy) -> Result<String> {
    let report = validate_policy(policy);
    if !report.is_valid() {
        return Err(Error::InvalidPolicy(report));
    }
    let mut out = format!("policy {} default {}\n", policy.name, policy.default_decision);
    for kind in [EntityKind::Role, EntityKind::Action, EntityKind::Context] {
        out.push('\n');
        for e in parents_first(policy, kind) {
            match &e.parent {
                Some(p) => out.push_str(&format!("{kind} {} extends {p}\n", e.name)),
                None => out.push_str(&format!("{kind} {}\n", e.name)),
            }
        }
    }
    if !policy.rules.is_empty() {
        out.push('\n');
        for r in &policy.rules {
            out.push_str(&format!(
                "rule {} {} {} {} {}\n",
                r.id, r.modality, r.role, r.action, r.context
            ));
        }
    }
    Ok(out)
}

fn parents_first(policy: &Policy, kind: EntityKind) -> Vec<&crate::policy::Entity> {
    let pending: Vec<_> = policy.entities.iter().filter(|e| e.kind == kind).collect();
    let mut emitted: HashSet<&str> = HashSet::new();
    let mut out = Vec::with_capacity(pending.len());
    while out.len() < pending.len() {
        for e in &pending {
            if emitted.contains(e.name.as_str()) {
                continue;
            }
            if e.parent.as_deref().is_none_or(|p| emitted.contains(p)) {
                emitted.insert(&e.name);
                out.push(*e);
            }
        }
    }
    out
}

/// Parses a `.acsys` file:
///
/// ```text
/// system <name>
/// policy <path>
/// hidden <permission|prohibition> <role> <action> <context>
/// missing_capability <role> <action>
/// ```
///
/// Entity names are only checked against the visible policy when the
/// system is built.
pub fn parse_system_spec(text: &str) -> std::result::Result<SystemSpec, Vec<ParseError>> {
    let lines = lex(text);
    let mut diag = Diagnostics(Vec::new());
    let mut name = None;
    let mut policy_path: Option<PathBuf> = None;
    let mut hidden_rules = Vec::new();
    let mut missing_capabilities = Vec::new();

    let mut body = &lines[..];
    match lines.first() {
        None => diag.syntax(SourceSpan::new(1, 1), "missing system header"),
        Some(first) if first.tokens[0].text != "system" => {
            diag.syntax(first.tokens[0].span, "missing system header");
        }
        Some(first) => {
            body = &lines[1..];
            if diag.arity(first, &[2], "system <name>") && diag.identifier(first.tokens[1], "system") {
                name = Some(first.tokens[1].text.to_owned());
            }
        }
    }

    for line in body {
        let t = &line.tokens;
        match t[0].text {
            "system" => diag.push(
                t[0].span,
                ParseErrorKind::DuplicateDeclaration,
                "system header declared twice",
            ),
            "policy" => {
                if !diag.arity(line, &[2], "policy <path>") {
                    continue;
                }
                if policy_path.is_some() {
                    diag.push(
                        t[0].span,
                        ParseErrorKind::DuplicateDeclaration,
                        "policy path declared twice",
                    );
                    continue;
                }
                policy_path = Some(PathBuf::from(t[1].text));
            }
            "hidden" => {
                if !diag.arity(
                    line,
                    &[5],
                    "hidden <permission|prohibition> <role> <action> <context>",
                ) {
                    continue;
                }
                let modality = diag.modality(t[1]);
                // every name is checked so all diagnostics are reported
                let bad_names = t[2..5]
                    .iter()
                    .filter(|tok| !diag.identifier(**tok, "entity"))
                    .count();
                let names_ok = bad_names == 0;
                if let (Some(m), true) = (modality, names_ok) {
                    hidden_rules.push(RuleTuple::new(m, t[2].text, t[3].text, t[4].text));
                }
            }
            "missing_capability" => {
                if !diag.arity(line, &[3], "missing_capability <role> <action>") {
                    continue;
                }
                let ok = diag.identifier(t[1], "role") & diag.identifier(t[2], "action");
                if ok {
                    missing_capabilities.push(Capability::new(t[1].text, t[2].text));
                }
            }
            other => diag.syntax(t[0].span, format!("unknown directive `{other}`")),
        }
    }

    if policy_path.is_none() && diag.0.is_empty() {
        let end = lines.last().map_or(SourceSpan::new(1, 1), Line::end_span);
        diag.syntax(end, "missing `policy <path>` directive");
    }

    match (diag.0.is_empty(), name, policy_path) {
        (true, Some(name), Some(policy_path)) => Ok(SystemSpec {
            name,
            policy_path,
            hidden_rules,
            missing_capabilities,
        }),
        _ => Err(diag.0),
    }
}

/// Renders a system spec back to `.acsys` text.
pub fn serialize_system_spec(spec: &SystemSpec) -> String {
    let mut out = format!("system {}\npolicy {}\n", spec.name, spec.policy_path.display());
    for h in &spec.hidden_rules {
        out.push_str(&format!("{}\n", hidden_directive(h)));
    }
    for c in &spec.missing_capabilities {
        out.push_str(&format!("{}\n", capability_directive(c)));
    }
    out
}

pub fn hidden_directive(rule: &RuleTuple) -> String {
    format!(
        "hidden {} {} {} {}",
        rule.modality, rule.role, rule.action, rule.context
    )
}

pub fn capability_directive(cap: &Capability) -> String {
    format!("missing_capability {} {}", cap.role, cap.action)
}

/// Parses a deltas file, one micro-evolution per line:
///
/// ```text
/// add <permission|prohibition> <role> <action> <context> [as <id>]
/// remove <rule-id>
/// ```
///
/// Removals are resolved against `policy` and the additions earlier in the
/// file. Additions without `as` get the id `d<n>`, `n` being the 1-based
/// position of the delta.
pub fn parse_deltas(
    text: &str,
    policy: &Policy,
) -> std::result::Result<Vec<MicroEvolution>, Vec<ParseError>> {
    let mut diag = Diagnostics(Vec::new());
    let mut known: HashMap<String, Modality> = policy
        .rules
        .iter()
        .map(|r| (r.id.clone(), r.modality))
        .collect();
    let mut deltas = Vec::new();

    for line in lex(text) {
        let t = &line.tokens;
        match t[0].text {
            "add" => {
                if !diag.arity(
                    &line,
                    &[5, 7],
                    "add <permission|prohibition> <role> <action> <context> [as <id>]",
                ) {
                    continue;
                }
                let modality = diag.modality(t[1]);
                let mut ok = true;
                for (kind, tok) in [
                    (EntityKind::Role, t[2]),
                    (EntityKind::Action, t[3]),
                    (EntityKind::Context, t[4]),
                ] {
                    if !policy.is_declared(kind, tok.text) {
                        diag.push(
                            tok.span,
                            ParseErrorKind::UnknownEntity,
                            format!("unknown {kind} `{}`", tok.text),
                        );
                        ok = false;
                    }
                }
                let id = if t.len() == 7 {
                    if t[5].text != "as" {
                        diag.syntax(t[5].span, format!("expected `as`, found `{}`", t[5].text));
                        continue;
                    }
                    if !is_rule_id(t[6].text) {
                        diag.syntax(t[6].span, format!("invalid rule id `{}`", t[6].text));
                        continue;
                    }
                    t[6].text.to_owned()
                } else {
                    format!("d{}", deltas.len() + 1)
                };
                let (Some(modality), true) = (modality, ok) else { continue };
                known.insert(id.clone(), modality);
                deltas.push(MicroEvolution::Add(Rule::new(id, modality, t[2].text, t[3].text, t[4].text)));
            }
            "remove" => {
                if !diag.arity(&line, &[2], "remove <rule-id>") {
                    continue;
                }
                match known.get(t[1].text) {
                    Some(&modality) => deltas.push(MicroEvolution::Remove {
                        id: t[1].text.to_owned(),
                        modality,
                    }),
                    None => diag.push(
                        t[1].span,
                        ParseErrorKind::UnknownEntity,
                        format!("unknown rule `{}`", t[1].text),
                    ),
                }
            }
            other => diag.syntax(t[0].span, format!("unknown directive `{other}`")),
        }
    }

    if diag.0.is_empty() {
        Ok(deltas)
    } else {
        Err(diag.0)
    }
}

/// SHA-256 of the canonical `.acpol` rendering, hex encoded.
pub fn policy_hash(policy: &Policy) -> Result<String> {
    use sha2::{Digest, Sha256};
    let text = serialize_policy(policy)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Reads and parses a policy file.
pub fn read_policy(path: &std::path::Path) -> Result<Policy> {
    let text = read_text(path)?;
    parse_policy(&text).map_err(Error::Parse)
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{faculty, FACULTY_ACPOL};

    #[test]
    fn parses_faculty_fixture() {
        let p = parse_policy(FACULTY_ACPOL).unwrap();
        assert!(p.structurally_eq(&faculty()));
        assert_eq!(p.rules.len(), 3);
        assert_eq!(p.names(EntityKind::Role).count(), 5);
        assert_eq!(p.names(EntityKind::Action).count(), 6);
        assert_eq!(p.leaf_actions().len(), 5);
        assert_eq!(p.names(EntityKind::Context).count(), 5);
    }

    #[test]
    fn empty_input_is_missing_header() {
        for text in ["", "\n\n  # just a comment\n"] {
            let errs = parse_policy(text).unwrap_err();
            assert_eq!(errs.len(), 1);
            assert_eq!(errs[0].kind, ParseErrorKind::Syntax);
            assert_eq!(errs[0].span, SourceSpan::new(1, 1));
            assert_eq!(errs[0].message, "missing policy header");
        }
    }

    #[test]
    fn unknown_context_names_it_with_span() {
        let text = "policy p default prohibition\nrole r\naction a\ncontext c\nrule X permission r a  weekend\n";
        let errs = parse_policy(text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, ParseErrorKind::UnknownEntity);
        assert!(errs[0].message.contains("weekend"));
        assert_eq!(errs[0].span, SourceSpan::new(5, 24));
    }

    #[test]
    fn declaration_must_precede_use() {
        let text = "policy p default permission\nrole child extends parent\nrole parent\naction a\ncontext c\n";
        let errs = parse_policy(text).unwrap_err();
        assert_eq!(errs[0].kind, ParseErrorKind::UnknownEntity);
        assert_eq!(errs[0].span, SourceSpan::new(2, 20));
    }

    #[test]
    fn reports_several_errors() {
        let text = "policy p default maybe\nrole r\nrole r\naction a\ncontext c extends d\nfirewall on\nrule 1x permission r a c\n";
        let kinds: Vec<_> = parse_policy(text).unwrap_err().into_iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ParseErrorKind::Syntax,
                ParseErrorKind::DuplicateDeclaration,
                ParseErrorKind::Syntax,
                ParseErrorKind::Syntax,
                ParseErrorKind::Syntax,
                ParseErrorKind::UnknownEntity,
            ]
        );
    }

    #[test]
    fn duplicate_rule_tuple_is_rejected() {
        let text = "policy p default permission\nrole r\naction a\ncontext c\nrule A permission r a c\nrule B permission r a c\n";
        let errs = parse_policy(text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, ParseErrorKind::DuplicateDeclaration);
    }

    #[test]
    fn crlf_and_comments() {
        let text = "policy p default permission # header\r\nrole r\r\naction a\r\ncontext c#trailing\r\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(p.contexts(), vec!["c"]);
    }

    #[test]
    fn serialize_round_trips_faculty() {
        let text = serialize_policy(&faculty()).unwrap();
        assert_eq!(parse_policy(&text).unwrap(), faculty());
    }

    #[test]
    fn zero_rule_policy_has_no_rule_block() {
        let text = serialize_policy(&faculty().with_rules(vec![])).unwrap();
        assert!(text.starts_with("policy faculty default prohibition\n"));
        assert!(!text.contains("rule"));
        assert!(text.contains("context default_ctx"));
    }

    #[test]
    fn serialize_orders_parents_first() {
        let p = Policy::new("p", Modality::Permission)
            .with_entity(EntityKind::Role, "kid", Some("mom"))
            .with_entity(EntityKind::Role, "mom", None)
            .with_entity(EntityKind::Action, "a", None)
            .with_entity(EntityKind::Context, "c", None);
        let text = serialize_policy(&p).unwrap();
        assert!(text.find("role mom").unwrap() < text.find("role kid").unwrap());
        assert!(parse_policy(&text).unwrap().structurally_eq(&p));
    }

    #[test]
    fn serialize_rejects_invalid_policy() {
        let p = faculty().with_rule(Rule::new("R9", Modality::Permission, "dean", "enter_marks", "studies"));
        assert!(matches!(serialize_policy(&p), Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn system_spec_directives() {
        let spec = parse_system_spec(
            "system faculty_legacy\npolicy faculty.acpol\nhidden prohibition teacher enter_marks deliberation\n",
        )
        .unwrap();
        assert_eq!(spec.hidden_rules.len(), 1);
        assert_eq!(spec.policy_path, PathBuf::from("faculty.acpol"));

        let spec = parse_system_spec("system s\npolicy p.acpol\nmissing_capability secretary modify_account\n").unwrap();
        assert_eq!(spec.missing_capabilities, vec![Capability::new("secretary", "modify_account")]);

        let errs = parse_system_spec("system s\npolicy p.acpol\nfirewall on\n").unwrap_err();
        assert_eq!(errs[0].kind, ParseErrorKind::Syntax);
        assert_eq!(errs[0].span, SourceSpan::new(3, 1));

        let errs = parse_system_spec("system s\n").unwrap_err();
        assert!(errs[0].message.contains("policy"));
    }

    #[test]
    fn system_spec_round_trip() {
        let text = "system s\npolicy dir/p.acpol\nhidden prohibition a b c\nmissing_capability a b\n";
        let spec = parse_system_spec(text).unwrap();
        assert_eq!(serialize_system_spec(&spec), text);
    }

    #[test]
    fn deltas_resolve_removals() {
        let deltas = parse_deltas(
            "add permission teacher enter_marks deliberation\nremove R3\nremove d1\nadd prohibition user access_courses holiday as X\nremove X\n",
            &faculty(),
        )
        .unwrap();
        assert_eq!(deltas.len(), 5);
        assert_eq!(
            deltas[1],
            MicroEvolution::Remove { id: "R3".into(), modality: Modality::Prohibition }
        );
        assert_eq!(
            deltas[2],
            MicroEvolution::Remove { id: "d1".into(), modality: Modality::Permission }
        );

        let errs = parse_deltas("remove R9\nadd permission dean a b\n", &faculty()).unwrap_err();
        assert_eq!(errs.len(), 4);
    }
}
