//! Prompt templates and placeholder substitution.
//!
//! The built-in templates live in `templates/*.txt` and are compiled in. A
//! directory holding files of the same names overrides them one by one. Each
//! template's digest goes into the run configuration snapshot so a manifest
//! records exactly which wording produced it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::store::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub code_challenges: String,
    pub code_needs: String,
    pub group_themes: String,
    pub write_persona: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::builtin()
    }
}

impl Templates {
    pub const FILE_NAMES: [&'static str; 4] = [
        "code_challenges.txt",
        "code_needs.txt",
        "group_themes.txt",
        "write_persona.txt",
    ];

    pub fn builtin() -> Self {
        Templates {
            code_challenges: include_str!("../templates/code_challenges.txt").to_owned(),
            code_needs: include_str!("../templates/code_needs.txt").to_owned(),
            group_themes: include_str!("../templates/group_themes.txt").to_owned(),
            write_persona: include_str!("../templates/write_persona.txt").to_owned(),
        }
    }

    /// Built-in templates, with any file present in `dir` taking precedence.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let mut t = Templates::builtin();
        let Some(dir) = dir else { return Ok(t) };
        for name in Templates::FILE_NAMES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            *t.slot_mut(name) = text;
        }
        t.check()?;
        Ok(t)
    }

    fn slot_mut(&mut self, name: &str) -> &mut String {
        match name {
            "code_challenges.txt" => &mut self.code_challenges,
            "code_needs.txt" => &mut self.code_needs,
            "group_themes.txt" => &mut self.group_themes,
            _ => &mut self.write_persona,
        }
    }

    fn check(&self) -> Result<()> {
        let required: [(&str, &str, &[&str]); 4] = [
            ("code_challenges.txt", &self.code_challenges, &["text"]),
            ("code_needs.txt", &self.code_needs, &["text"]),
            ("group_themes.txt", &self.group_themes, &["n_groups", "topic_list"]),
            ("write_persona.txt", &self.write_persona, &["needs_list", "challenges_list"]),
        ];
        for (name, body, keys) in required {
            for key in keys {
                if !body.contains(&format!("{{{key}}}")) {
                    return Err(Error::Config(format!("template {name} lacks the {{{key}}} placeholder")));
                }
            }
        }
        Ok(())
    }

    /// Template file name to sha256 of its text.
    pub fn digests(&self) -> BTreeMap<String, String> {
        [
            ("code_challenges.txt", &self.code_challenges),
            ("code_needs.txt", &self.code_needs),
            ("group_themes.txt", &self.group_themes),
            ("write_persona.txt", &self.write_persona),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), sha256_hex(v.as_bytes())))
        .collect()
    }
}

/// Replace `{name}` placeholders in one pass. Substituted text is not
/// scanned again, so braces inside transcript text are left alone, and
/// unknown placeholders stay as written.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// The token arithmetic a renderer needs to decide whether a prompt fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub tokenizer: Tokenizer,
    pub context_limit: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            tokenizer: Tokenizer::default(),
            context_limit: 4097,
        }
    }
}

impl Budget {
    pub fn fits(&self, prompt: &str, response_tokens: usize) -> bool {
        self.check(prompt, response_tokens).is_ok()
    }

    pub fn check(&self, prompt: &str, response_tokens: usize) -> Result<()> {
        let prompt_tokens = self.tokenizer.count(prompt);
        if prompt_tokens + response_tokens > self.context_limit {
            return Err(Error::TokenBudgetExceeded {
                prompt_tokens,
                response_tokens,
                limit: self.context_limit,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        let out = fill("a {text} b {other}", &[("text", "{other} {text}"), ("other", "X")]);
        assert_eq!(out, "a {other} {text} b X");
    }

    #[test]
    fn unknown_placeholders_survive() {
        assert_eq!(fill("{x} {", &[]), "{x} {");
    }

    #[test]
    fn builtin_templates_have_their_placeholders() {
        Templates::builtin().check().unwrap();
    }

    #[test]
    fn override_directory_replaces_single_templates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("code_needs.txt"), "Needs please: {text}").unwrap();
        let t = Templates::load(Some(dir.path())).unwrap();
        assert_eq!(t.code_needs, "Needs please: {text}");
        assert_eq!(t.code_challenges, Templates::builtin().code_challenges);
        assert_ne!(t.digests()["code_needs.txt"], Templates::builtin().digests()["code_needs.txt"]);
    }

    #[test]
    fn override_without_placeholder_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("group_themes.txt"), "Create groups").unwrap();
        assert!(matches!(Templates::load(Some(dir.path())), Err(Error::Config(_))));
    }
}
