//! Bundled and user-supplied presets.
//!
//! A preset file is a JSON object mapping preset names to
//! `{"description": "...", "config": {...}}`. The bundled file is compiled in;
//! user files are passed with `--presets PATH`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::config::{ConfigError, Overrides, RunConfig, MODEL_PRESETS};

const BUNDLED: &str = include_str!("../presets/bundled.json");

/// Penalty presets on finite spaces, with what each one represents.
const FINITE_PENALTIES: [(&str, &str); 4] = [
    ("zero", "psi = 0 everywhere; risk is the worst outcome over all atoms"),
    ("worst_case", "psi = 0 on Q << P, +inf otherwise; the coherent worst-case measure"),
    ("entropic:gamma", "psi = H(Q|P) / gamma; risk (1/gamma) ln E[exp(-gamma X)]"),
    ("linear:c1,...,cn", "psi = E_Q[c] on Q << P; affine, hence its own biconjugate"),
];

/// Penalty specifications `(h, h0, h1, delta)` for Lévy models.
const SPECS: [(&str, &str); 3] = [
    ("entropic", "h = id, h0 = x^2/2, h1 = (1+x)ln(1+x) - x, delta = 1; the relative entropy H(Q|P)"),
    ("quadratic", "h = id, h0 = h1 = x^2/2, delta = 1"),
    ("custom", "h = id with tabulated convex h0 and h1 (JSON object {h0, h1, delta})"),
];

/// Coefficient strings accepted wherever a measure is named.
const COEFFICIENTS: [(&str, &str); 4] = [
    ("zero", "theta = 0, so Q = P"),
    ("const:t0,t1", "constant Brownian and jump coefficients"),
    ("linear-in-t:a0,b0,a1,b1", "theta0 = a0 + b0 t, theta1 = a1 + b1 t"),
    ("per-atom:t0;v1,...,vk", "constant theta0 and one jump coefficient per atom"),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default)]
    description: String,
    config: Value,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: Value,
    pub source: Option<PathBuf>,
}

impl Preset {
    pub fn kind(&self) -> &str {
        self.config.get("experiment").and_then(Value::as_str).unwrap_or("?")
    }

    pub fn validate(&self) -> Result<RunConfig, ConfigError> {
        RunConfig::from_value(self.config.clone(), &self.name, Overrides::default())
    }
}

/// A preset or whole file that failed to load, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Invalid {
    pub name: String,
    pub source: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub presets: Vec<Preset>,
    pub invalid: Vec<Invalid>,
}

fn parse_entries(text: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("preset file must be a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

impl Catalog {
    pub fn bundled() -> Self {
        let mut catalog = Catalog::default();
        let entries = parse_entries(BUNDLED).expect("bundled presets are valid JSON");
        for (name, value) in entries {
            let entry: Entry = serde_json::from_value(value).expect("bundled presets are well formed");
            catalog.presets.push(Preset { name, description: entry.description, config: entry.config, source: None });
        }
        catalog
    }

    /// Adds every valid preset of a user file; bad files and bad entries go to `invalid`.
    pub fn load_file(&mut self, path: &Path) {
        let reject = |catalog: &mut Catalog, name: &str, reason: String| {
            catalog.invalid.push(Invalid { name: name.to_string(), source: path.to_path_buf(), reason })
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return reject(self, "*", format!("cannot read file: {e}")),
        };
        let entries = match parse_entries(&text) {
            Ok(m) => m,
            Err(reason) => return reject(self, "*", reason),
        };
        for (name, value) in entries {
            if self.find(&name).is_some() {
                reject(self, &name, "name already taken by an earlier preset".into());
                continue;
            }
            let entry: Entry = match serde_json::from_value(value) {
                Ok(e) => e,
                Err(e) => {
                    reject(self, &name, format!("expected {{\"description\", \"config\"}}: {e}"));
                    continue;
                }
            };
            let preset =
                Preset { name: name.clone(), description: entry.description, config: entry.config, source: Some(path.into()) };
            match preset.validate() {
                Ok(_) => self.presets.push(preset),
                Err(e) => reject(self, &name, e.0),
            }
        }
    }

    pub fn find(&self, name: &str) -> Option<&Preset> {
        self.presets.iter().find(|p| p.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, rows: &mut dyn Iterator<Item = (String, String)>| {
            let _ = writeln!(out, "{title}:");
            for (name, text) in rows {
                let _ = writeln!(out, "  {name:<26} {text}");
            }
            out.push('\n');
        };
        section("penalties (finite spaces)", &mut FINITE_PENALTIES.iter().map(|(n, d)| (n.to_string(), d.to_string())));
        section("penalty specs (Levy models)", &mut SPECS.iter().map(|(n, d)| (n.to_string(), d.to_string())));
        section("models", &mut MODEL_PRESETS.iter().map(|m| (m.name.to_string(), m.description.to_string())));
        section("coefficients", &mut COEFFICIENTS.iter().map(|(n, d)| (n.to_string(), d.to_string())));
        section(
            "experiments",
            &mut self.presets.iter().map(|p| {
                let origin = p.source.as_ref().map_or_else(String::new, |s| format!(" [{}]", s.display()));
                (p.name.clone(), format!("{}: {}{origin}", p.kind(), p.description))
            }),
        );
        if !self.invalid.is_empty() {
            section(
                "invalid",
                &mut self.invalid.iter().map(|i| (i.name.clone(), format!("{}: {}", i.source.display(), i.reason))),
            );
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_preset_validates() {
        let catalog = Catalog::bundled();
        assert!(catalog.presets.len() >= 8);
        for p in &catalog.presets {
            let run = p.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(run.output, p.name);
        }
    }

    #[test]
    fn listing_names_the_core_penalties() {
        let text = Catalog::bundled().render();
        for name in ["entropic", "worst_case", "zero", "worst_case_3pt"] {
            assert!(text.contains(name), "{name} missing");
        }
        assert!(!text.contains("invalid:"));
    }
}
