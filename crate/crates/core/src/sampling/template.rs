use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template {template}: missing value for placeholder `{name}`")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template}: unbalanced brace at byte {offset}")]
    Syntax { template: String, offset: usize },
    #[error("unknown template `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// Text with `{name}` placeholders; `{{` / `}}` are literal braces.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn parse(name: &str, body: &str) -> Result<Self, TemplateError> {
        let pieces = tokenize(name, body)?;
        let required_placeholders = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Text(_) => None,
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            body: body.to_string(),
            required_placeholders,
            pieces,
        })
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = values
                        .get(name.as_str())
                        .ok_or_else(|| TemplateError::MissingPlaceholder {
                            template: self.name.clone(),
                            name: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn tokenize(name: &str, body: &str) -> Result<Vec<Piece>, TemplateError> {
    let syntax = |offset| TemplateError::Syntax {
        template: name.to_string(),
        offset,
    };
    let bytes = body.as_bytes();
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                text.push('{');
                i += 2;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                text.push('}');
                i += 2;
            }
            b'{' => {
                let close = body[i + 1..].find('}').ok_or_else(|| syntax(i))? + i + 1;
                let ident = &body[i + 1..close];
                let valid = !ident.is_empty()
                    && !ident.starts_with(|c: char| c.is_ascii_digit())
                    && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid {
                    return Err(syntax(i));
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(ident.to_string()));
                i = close + 1;
            }
            b'}' => return Err(syntax(i)),
            _ => {
                let ch = body[i..].chars().next().expect("in bounds");
                text.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

#[derive(Deserialize)]
struct Manifest {
    template: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub required: Vec<String>,
}

const MANIFEST: &str = include_str!("../../templates/manifest.toml");

fn asset(file: &str) -> Option<&'static str> {
    Some(match file {
        "spring_system.txt" => include_str!("../../templates/spring_system.txt"),
        "spring_user.txt" => include_str!("../../templates/spring_user.txt"),
        "trip_system.txt" => include_str!("../../templates/trip_system.txt"),
        "trip_user.txt" => include_str!("../../templates/trip_user.txt"),
        "meeting_system.txt" => include_str!("../../templates/meeting_system.txt"),
        "meeting_user.txt" => include_str!("../../templates/meeting_user.txt"),
        _ => return None,
    })
}

/// Manifest entries as shipped.
pub fn manifest() -> Vec<ManifestEntry> {
    toml::from_str::<Manifest>(MANIFEST)
        .expect("bundled manifest parses")
        .template
}

fn registry() -> &'static BTreeMap<String, PromptTemplate> {
    static REGISTRY: OnceLock<BTreeMap<String, PromptTemplate>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        manifest()
            .into_iter()
            .map(|entry| {
                let body = asset(&entry.file).unwrap_or_else(|| panic!("missing template asset {}", entry.file));
                let body = body.trim_end_matches('\n');
                let template = PromptTemplate::parse(&entry.name, body)
                    .unwrap_or_else(|e| panic!("bundled template {} is invalid: {e}", entry.name));
                (entry.name, template)
            })
            .collect()
    })
}

pub fn template(name: &str) -> Result<&'static PromptTemplate, TemplateError> {
    registry()
        .get(name)
        .ok_or_else(|| TemplateError::Unknown(name.to_string()))
}

pub fn template_names() -> Vec<&'static str> {
    registry().keys().map(String::as_str).collect()
}
