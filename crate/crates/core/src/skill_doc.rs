//! SKILL.md document model.
//!
//! A skill is a `---`-delimited frontmatter block of flat `key: value` lines
//! followed by a Markdown body split into `# section_name` sections. Only the
//! flat subset of YAML that skill files use is understood.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{compliance_score, ComplianceLimits};

const DELIMITER: &str = "---";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub text: String,
}

impl Section {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkillDoc {
    pub name: String,
    pub description: String,
    pub compatibility: String,
    /// The `metadata` mapping plus any unrecognized frontmatter keys.
    pub metadata: IndexMap<String, String>,
    pub allowed_tools: Vec<String>,
    /// Body sections in document order. A section with an empty name holds
    /// text that precedes the first header.
    pub sections: Vec<Section>,
}

impl SkillDoc {
    pub fn parse(text: &str) -> Result<Self> {
        parse(text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section_mut(&mut self, name: &str) -> Option<&mut Section> {
        self.sections.iter_mut().find(|s| s.name == name)
    }

    pub fn section_names(&self) -> Vec<String> {
        self.sections
            .iter()
            .filter(|s| !s.name.is_empty())
            .map(|s| s.name.clone())
            .collect()
    }

    /// Description length in characters (code points).
    pub fn description_len(&self) -> usize {
        self.description.chars().count()
    }

    /// Body length in characters: the summed text of every section. Header
    /// lines are not counted.
    pub fn body_len(&self) -> usize {
        self.sections.iter().map(|s| s.text.chars().count()).sum()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(DELIMITER);
        out.push('\n');
        push_field(&mut out, "name", &self.name);
        push_field(&mut out, "description", &self.description);
        push_field(&mut out, "compatibility", &self.compatibility);
        let meta = self
            .metadata
            .iter()
            .map(|(k, v)| {
                if v.is_empty() {
                    format!("{k}:")
                } else {
                    format!("{k}: {v}")
                }
            })
            .collect::<Vec<_>>()
            .join(", ");
        push_field(&mut out, "metadata", &meta);
        let tools = format!("[{}]", self.allowed_tools.join(", "));
        push_field(&mut out, "allowed-tools", &tools);
        out.push_str(DELIMITER);
        out.push('\n');
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if !section.name.is_empty() {
                out.push_str("# ");
                out.push_str(&section.name);
                out.push('\n');
            }
            if !section.text.is_empty() {
                out.push_str(&section.text);
                out.push('\n');
            }
        }
        out
    }

    /// `(description_compliance, body_compliance)`.
    pub fn measure(&self, limits: &ComplianceLimits) -> (f64, f64) {
        (
            compliance_score(self.description_len(), limits.description),
            compliance_score(self.body_len(), limits.body),
        )
    }

    pub fn compliance_report(&self, limits: &ComplianceLimits) -> ComplianceReport {
        ComplianceReport {
            entries: vec![
                ComplianceEntry::new("description", self.description_len(), limits.description),
                ComplianceEntry::new("body", self.body_len(), limits.body),
            ],
        }
    }
}

impl fmt::Display for SkillDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn push_field(out: &mut String, key: &str, value: &str) {
    out.push_str(key);
    out.push(':');
    if !value.is_empty() {
        out.push(' ');
        out.push_str(value);
    }
    out.push('\n');
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn unquote(value: &str) -> &str {
    let v = value.trim();
    if v.len() >= 2
        && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\'')))
    {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn parse_inline_map(value: &str, into: &mut IndexMap<String, String>) {
    let v = value.trim();
    let v = v.strip_prefix('{').and_then(|v| v.strip_suffix('}')).unwrap_or(v);
    for item in v.split(", ").map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once(':') {
            Some((k, val)) => into.insert(k.trim().to_string(), unquote(val).to_string()),
            None => into.insert(item.to_string(), String::new()),
        };
    }
}

fn parse_inline_list(value: &str) -> Vec<String> {
    let v = value.trim();
    let v = v.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(v);
    v.split(',')
        .map(|s| unquote(s).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    None,
    Metadata,
    Tools,
}

/// Parses a SKILL.md document.
pub fn parse(text: &str) -> Result<SkillDoc> {
    let lines: Vec<&str> = text.lines().collect();
    let mut idx = 0;
    while idx < lines.len() && lines[idx].trim().is_empty() {
        idx += 1;
    }
    if idx >= lines.len() || lines[idx].trim_end() != DELIMITER {
        return Err(parse_err(idx + 1, "missing opening `---` frontmatter delimiter"));
    }
    idx += 1;

    let mut doc = SkillDoc::default();
    let mut block = Block::None;
    let mut closed = false;
    while idx < lines.len() {
        let line = lines[idx];
        let line_no = idx + 1;
        idx += 1;
        if line.trim_end() == DELIMITER {
            closed = true;
            break;
        }
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if line.starts_with(' ') || line.starts_with('\t') {
            let item = line.trim();
            match block {
                Block::Metadata => {
                    let (k, v) = item
                        .split_once(':')
                        .ok_or_else(|| parse_err(line_no, "expected `key: value` under metadata"))?;
                    doc.metadata.insert(k.trim().to_string(), unquote(v).to_string());
                }
                Block::Tools => {
                    let tool = item
                        .strip_prefix('-')
                        .ok_or_else(|| parse_err(line_no, "expected `- tool` list item"))?;
                    doc.allowed_tools.push(unquote(tool).to_string());
                }
                Block::None => return Err(parse_err(line_no, "unexpected indented line")),
            }
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, "expected `key: value`"))?;
        let key = key.trim();
        let value = value.trim();
        block = Block::None;
        match key {
            "name" => doc.name = unquote(value).to_string(),
            "description" => doc.description = unquote(value).to_string(),
            "compatibility" => doc.compatibility = unquote(value).to_string(),
            "metadata" => {
                if value.is_empty() {
                    block = Block::Metadata;
                } else {
                    parse_inline_map(value, &mut doc.metadata);
                }
            }
            "allowed-tools" | "allowed_tools" => {
                if value.is_empty() {
                    block = Block::Tools;
                } else {
                    doc.allowed_tools = parse_inline_list(value);
                }
            }
            other => {
                doc.metadata.insert(other.to_string(), unquote(value).to_string());
            }
        }
    }
    if !closed {
        return Err(parse_err(
            lines.len() + 1,
            "missing closing `---` frontmatter delimiter",
        ));
    }
    if doc.name.is_empty() {
        return Err(parse_err(1, "frontmatter `name` is required"));
    }

    let mut current: Option<(String, Vec<&str>)> = None;
    let mut in_fence = false;
    let finish = |section: Option<(String, Vec<&str>)>, doc: &mut SkillDoc| {
        if let Some((name, body)) = section {
            let text = clean_section_text(&body);
            if !(name.is_empty() && text.is_empty()) {
                doc.sections.push(Section { name, text });
            }
        }
    };
    while idx < lines.len() {
        let line = lines[idx];
        let line_no = idx + 1;
        idx += 1;
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        let header = if in_fence { None } else { line.strip_prefix("# ") };
        match header {
            Some(name) => {
                let name = name.trim().to_string();
                if doc.sections.iter().any(|s| s.name == name)
                    || current.as_ref().is_some_and(|(n, _)| *n == name)
                {
                    return Err(parse_err(line_no, format!("duplicate section `{name}`")));
                }
                finish(current.take(), &mut doc);
                current = Some((name, Vec::new()));
            }
            None => current
                .get_or_insert_with(|| (String::new(), Vec::new()))
                .1
                .push(line),
        }
    }
    finish(current.take(), &mut doc);
    Ok(doc)
}

fn clean_section_text(lines: &[&str]) -> String {
    let start = lines
        .iter()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(lines.len());
    lines[start..].join("\n").trim_end().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ComplianceStatus {
    Pass,
    Fail,
}

impl fmt::Display for ComplianceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplianceStatus::Pass => "PASS",
            ComplianceStatus::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceEntry {
    pub field: String,
    pub status: ComplianceStatus,
    pub length: usize,
    pub limit: usize,
}

impl ComplianceEntry {
    /// A length equal to the limit passes.
    pub fn new(field: &str, length: usize, limit: usize) -> Self {
        let status = if length > limit {
            ComplianceStatus::Fail
        } else {
            ComplianceStatus::Pass
        };
        ComplianceEntry {
            field: field.to_string(),
            status,
            length,
            limit,
        }
    }
}

impl fmt::Display for ComplianceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({}/{} chars)",
            self.field,
            self.status,
            thousands(self.length),
            thousands(self.limit)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub entries: Vec<ComplianceEntry>,
}

impl ComplianceReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.status == ComplianceStatus::Pass)
    }
}

impl fmt::Display for ComplianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Formats an integer with `,` thousands separators.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Fills the shared mutation prompt. Every selection strategy sends exactly
/// this text to the mutator.
pub fn render_mutation_prompt(
    doc: &SkillDoc,
    report: &ComplianceReport,
    limits: &ComplianceLimits,
    feedback: &str,
    components: &[String],
) -> String {
    let fence = "```";
    format!(
        "You are optimizing a SKILL.md specification for a language model skill.\n\
         \n\
         ## SKILL.md Format Constraints\n\
         (all fields are optimization targets)\n\
         - description: \u{2264}{desc_limit} characters\n\
         - body: \u{2264}{body_limit} characters\n\
         - All YAML frontmatter fields must remain valid YAML\n\
         \n\
         ## Current SKILL.md\n\
         {fence}\n\
         {skill}\
         {fence}\n\
         \n\
         ## Compliance Status\n\
         {report}\n\
         \n\
         ## Task Examples with Feedback\n\
         {feedback}\n\
         \n\
         ## Sections to Improve: {components}\n\
         \n\
         Rewrite the SKILL.md: TOP priority is to improve task accuracy by adding as many steps \
         or instructions as necessary while still respecting all field constraints. You may \
         modify ANY field (description, body sections). Maintain valid YAML frontmatter and \
         `# section_name` headers in the body.\n\
         \n\
         Return the complete SKILL.md within {fence} blocks.\n",
        desc_limit = thousands(limits.description),
        body_limit = thousands(limits.body),
        skill = doc.serialize(),
        report = report,
        feedback = feedback,
        components = components.join(", "),
    )
}

/// Contents of the first triple-backtick fenced block in `text`, without the
/// fence lines. The opening fence may carry an info string.
pub fn extract_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.find(|l| l.trim_start().starts_with("```"))?;
    let mut body = Vec::new();
    for line in lines {
        if line.trim() == "```" {
            let mut out = body.join("\n");
            out.push('\n');
            return Some(out);
        }
        body.push(line);
    }
    None
}

/// Extracts and parses the SKILL.md inside the first fenced block.
pub fn parse_fenced_skill(text: &str) -> Result<SkillDoc> {
    let block =
        extract_fenced_block(text).ok_or_else(|| Error::Task("response contains no fenced block".into()))?;
    parse(&block)
}
