//! Skill files, selection by task kind, context composition and directive priority.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::task::TaskKind;

pub const META_SKILL: &str = "meta-planner";

const BUILTIN: [&str; 5] = [
    include_str!("../assets/skills/meta-planner.md"),
    include_str!("../assets/skills/multi-video-compare.md"),
    include_str!("../assets/skills/video-reader.md"),
    include_str!("../assets/skills/temporal-grounding.md"),
    include_str!("../assets/skills/subtitle.md"),
];

/// Priority class of a skill rule. Ordered `Default < TaskSpecific < OutputFormat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveTier {
    Default,
    TaskSpecific,
    OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub text: String,
    pub tier: DirectiveTier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skill {
    pub name: String,
    pub description: String,
    /// Everything after the closing frontmatter delimiter, byte for byte.
    pub body: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SkillError {
    #[error("skill file has no frontmatter block")]
    MissingFrontmatter,
    #[error("frontmatter lacks `{0}`")]
    MissingField(&'static str),
    #[error("frontmatter closing delimiter is ambiguous")]
    DuplicateDelimiter,
    #[error("duplicate skill name {0}")]
    DuplicateName(String),
    #[error("library has no {META_SKILL} skill")]
    MissingMeta,
}

fn is_delimiter(line: &str) -> bool {
    line.trim_end_matches(['\r', '\n']) == "---"
}

/// Parses a skill file: a `---` frontmatter block with `name` and
/// `description`, followed by a markdown body.
pub fn parse_skill(text: &str) -> Result<Skill, SkillError> {
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(first) if is_delimiter(first) => {}
        _ => return Err(SkillError::MissingFrontmatter),
    }
    let mut offset = text.split_inclusive('\n').next().map_or(0, str::len);
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut closed = false;
    for line in lines.by_ref() {
        offset += line.len();
        if is_delimiter(line) {
            closed = true;
            break;
        }
        let trimmed = line.trim_end();
        if trimmed.starts_with([' ', '\t']) {
            // continuation of a folded value
            if let Some((_, v)) = fields.last_mut() {
                v.push(' ');
                v.push_str(trimmed.trim());
            }
        } else if let Some((k, v)) = trimmed.split_once(':') {
            fields.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    if !closed {
        return Err(SkillError::MissingFrontmatter);
    }
    let body = &text[offset..];
    if body.split_inclusive('\n').find(|l| !l.trim().is_empty()).is_some_and(is_delimiter) {
        return Err(SkillError::DuplicateDelimiter);
    }
    let field = |key: &'static str| {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.trim_matches(['"', '\'']).to_string())
            .filter(|v| !v.is_empty())
            .ok_or(SkillError::MissingField(key))
    };
    Ok(Skill {
        name: field("name")?,
        description: field("description")?,
        body: body.to_string(),
        rules: classify_rules(body),
    })
}

fn tier_regexes() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"<!--\s*tier:\s*([a-z_-]+)\s*-->").expect("static regex"),
            Regex::new(r"(?i)\boutput\b.*\b(final|format)\b").expect("static regex"),
            Regex::new(r"(?i)\b(counting|counts?|similarity|similar|style|action matching|sequence|ordering)\b")
                .expect("static regex"),
        )
    })
}

/// Default tier of one rule line; a `<!-- tier: ... -->` comment overrides.
pub fn classify_rule(line: &str) -> DirectiveTier {
    let (hint, output, kind) = tier_regexes();
    if let Some(c) = hint.captures(line) {
        match c[1].replace('-', "_").as_str() {
            "output_format" => return DirectiveTier::OutputFormat,
            "task_specific" => return DirectiveTier::TaskSpecific,
            "default" => return DirectiveTier::Default,
            _ => {}
        }
    }
    if output.is_match(line) {
        DirectiveTier::OutputFormat
    } else if kind.is_match(line) {
        DirectiveTier::TaskSpecific
    } else {
        DirectiveTier::Default
    }
}

fn rule_text(line: &str) -> Option<&str> {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix("- ") {
        return Some(rest.trim());
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        return t[digits..].strip_prefix(". ").map(str::trim);
    }
    None
}

fn classify_rules(body: &str) -> Vec<Rule> {
    body.lines()
        .filter_map(|l| rule_text(l).map(|t| Rule { text: t.to_string(), tier: classify_rule(l) }))
        .collect()
}

/// Immutable set of skills with a designated meta skill.
#[derive(Debug, Clone)]
pub struct SkillLibrary {
    skills: BTreeMap<String, Skill>,
    /// Load order, used for inject-all composition after the meta skill.
    order: Vec<String>,
}

impl SkillLibrary {
    pub fn new(skills: Vec<Skill>) -> Result<Self, SkillError> {
        let mut map = BTreeMap::new();
        let mut order = Vec::new();
        for s in skills {
            if map.contains_key(&s.name) {
                return Err(SkillError::DuplicateName(s.name));
            }
            order.push(s.name.clone());
            map.insert(s.name.clone(), s);
        }
        if !map.contains_key(META_SKILL) {
            return Err(SkillError::MissingMeta);
        }
        Ok(SkillLibrary { skills: map, order })
    }

    /// The five shipped skills.
    pub fn builtin() -> Self {
        let skills = BUILTIN.iter().map(|t| parse_skill(t).expect("shipped skill parses")).collect();
        SkillLibrary::new(skills).expect("shipped library is valid")
    }

    pub fn get(&self, name: &str) -> Option<&Skill> {
        self.skills.get(name)
    }

    pub fn meta(&self) -> &Skill {
        &self.skills[META_SKILL]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }
}

/// Whether every skill is injected or only the ones the kind table names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    #[default]
    InjectAll,
    SelectByKind,
}

/// Kind → specialized skills. The meta skill is implicit and always first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub kinds: BTreeMap<String, Vec<String>>,
    pub fallback: Vec<String>,
}

impl Default for SelectionTable {
    fn default() -> Self {
        let compare = ["multi-video-compare", "video-reader"];
        let grounding = ["temporal-grounding", "video-reader"];
        let speech = ["subtitle", "video-reader"];
        let rows: [(&str, &[&str]); 11] = [
            ("counting", &compare),
            ("action_matching", &compare),
            ("art_style", &compare),
            ("video_similarity", &compare),
            ("forensic_detection", &compare),
            ("re_identification", &compare),
            ("multi_view", &compare),
            ("sequence", &grounding),
            ("counterfactual", &grounding),
            ("defeasible_entailment", &speech),
            ("spatial_relation", &["video-reader"]),
        ];
        SelectionTable {
            kinds: rows
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
            fallback: vec!["video-reader".into()],
        }
    }
}

/// Meta skill first, then the kind's specialized skills in table order.
/// Unknown kinds get the fallback list; names missing from the library are skipped.
pub fn select_skills<'a>(kind: &TaskKind, library: &'a SkillLibrary, table: &SelectionTable) -> Vec<&'a Skill> {
    let names = table.kinds.get(kind.as_str()).unwrap_or(&table.fallback);
    let mut out = vec![library.meta()];
    for n in names {
        if let Some(s) = library.get(n) {
            if !out.iter().any(|o| o.name == s.name) {
                out.push(s);
            }
        }
    }
    out
}

/// Every skill, meta first, then load order.
pub fn all_skills(library: &SkillLibrary) -> Vec<&Skill> {
    let mut out = vec![library.meta()];
    out.extend(library.names().filter(|n| *n != META_SKILL).filter_map(|n| library.get(n)));
    out
}

/// Header line that introduces a skill body in the composed context.
pub fn skill_header(name: &str) -> String {
    format!("## Skill: {name}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedContext {
    pub text: String,
    pub skill_names: Vec<String>,
}

impl ComposedContext {
    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Skill bodies in order, each under its header line.
pub fn compose_context(skills: &[&Skill]) -> ComposedContext {
    let mut text = String::new();
    for s in skills {
        if !text.is_empty() && !text.ends_with("\n\n") {
            text.push('\n');
        }
        text.push_str(&skill_header(&s.name));
        text.push('\n');
        text.push_str(&s.body);
        if !text.ends_with('\n') {
            text.push('\n');
        }
    }
    ComposedContext { text, skill_names: skills.iter().map(|s| s.name.clone()).collect() }
}

/// Highest tier wins; within a tier the earliest entry wins.
pub fn resolve_directives<T: Clone>(directives: &[(DirectiveTier, T)]) -> Option<T> {
    let best = directives.iter().map(|(t, _)| *t).max()?;
    directives.iter().find(|(t, _)| *t == best).map(|(_, d)| d.clone())
}
