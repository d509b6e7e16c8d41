//! Prompt templates with `{name}` placeholders.
//!
//! Only the placeholders listed for each template are substituted, so
//! literal JSON braces in a template pass through untouched.

use std::path::Path;

use thiserror::Error;

const KEYPHRASES: &str = include_str!("../templates/keyphrases.txt");
const INITIALIZE: &str = include_str!("../templates/initialize.txt");
const PROPOSE: &str = include_str!("../templates/propose.txt");
const ANNOTATE: &str = include_str!("../templates/annotate.txt");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("template {name} lacks the {placeholder} placeholder")]
    MissingPlaceholder { name: &'static str, placeholder: &'static str },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Templates {
    pub keyphrases: String,
    pub initialize: String,
    pub propose: String,
    pub annotate: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            keyphrases: KEYPHRASES.into(),
            initialize: INITIALIZE.into(),
            propose: PROPOSE.into(),
            annotate: ANNOTATE.into(),
        }
    }
}

/// Placeholders each template must contain.
const REQUIRED: [(&str, &[&str]); 4] = [
    ("keyphrases", &["{note}"]),
    ("initialize", &["{k}", "{top_keyphrases}"]),
    ("propose", &["{existing_concepts}", "{top_keyphrases}"]),
    ("annotate", &["{note}", "{questions}"]),
];

impl Templates {
    /// Defaults overridden by `keyphrases.txt`, `initialize.txt`,
    /// `propose.txt` and `annotate.txt` where present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Templates::default();
        for (name, slot) in [
            ("keyphrases", &mut t.keyphrases),
            ("initialize", &mut t.initialize),
            ("propose", &mut t.propose),
            ("annotate", &mut t.annotate),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)
                    .map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        for (name, needed) in REQUIRED {
            let text = match name {
                "keyphrases" => &self.keyphrases,
                "initialize" => &self.initialize,
                "propose" => &self.propose,
                _ => &self.annotate,
            };
            if let Some(placeholder) = needed.iter().find(|p| !text.contains(**p)) {
                return Err(TemplateError::MissingPlaceholder { name, placeholder });
            }
        }
        Ok(())
    }
}

/// Substitutes each `{name}` in `values`, leaving other braces alone.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
