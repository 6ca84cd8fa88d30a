//! Run configuration files.
//!
//! ```toml
//! pathway = "linear"              # or "discrete"
//! stabilize = "all"               # "none", or a list such as ["base", "c1c0"]
//!
//! [model.outcome]
//! family = "gaussian"
//! terms = "1, c0, e, c1, m, e*m"
//!
//! [model.c1_mean]                 # every C1 component
//! terms = "1, c0, e, c0*e"
//!
//! [model.c1_mean_2]               # component 2 only
//! terms = "1, c0, e"
//! ```
//!
//! Roles: `outcome`, `mediator`, `c1_mean`, `c1_mean_<j>`, `propensity_c0`,
//! `propensity_c1`, `propensity_m`, `propensity_c0_ratio`,
//! `propensity_c1_mratio`, `outcome_marginal`. A role section may give
//! `family`, `terms`, or both; omitted keys keep the defaults. Flags on the
//! command line override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pathfx_core::design::DesignSpec;
use pathfx_core::glm::Family;
use pathfx_core::nuisance::{ModelSpec, Pathway, StabilizeFlags, WorkingModelSet};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: unknown role [model.{0}]")]
    UnknownRole(String),
    #[error("config: unknown family {0:?} (gaussian, logit, probit)")]
    Family(String),
    #[error("config: unknown pathway {0:?} (linear, discrete)")]
    Pathway(String),
    #[error("config: unknown stabilization role {0:?} (base, c1c0, mc1c0, all, none)")]
    Stabilize(String),
    #[error("config: [model.{role}] terms: {source}")]
    Terms { role: String, source: pathfx_core::design::DesignError },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub family: Option<String>,
    pub terms: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum StabilizeValue {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub pathway: Option<String>,
    pub stabilize: Option<StabilizeValue>,
    #[serde(default)]
    pub model: BTreeMap<String, ModelEntry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}

pub fn parse_family(s: &str) -> Result<Family, ConfigError> {
    match s.trim() {
        "gaussian" => Ok(Family::Gaussian),
        "logit" | "logistic" => Ok(Family::Logit),
        "probit" => Ok(Family::Probit),
        other => Err(ConfigError::Family(other.into())),
    }
}

pub fn parse_pathway(s: &str) -> Result<Pathway, ConfigError> {
    match s.trim() {
        "linear" => Ok(Pathway::Linear),
        "discrete" => Ok(Pathway::Discrete),
        other => Err(ConfigError::Pathway(other.into())),
    }
}

/// `all`, `none`, or a comma-separated subset of `base,c1c0,mc1c0`.
pub fn parse_stabilize(items: &[&str]) -> Result<StabilizeFlags, ConfigError> {
    let mut f = StabilizeFlags::NONE;
    for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        match item {
            "all" => f = StabilizeFlags::ALL,
            "none" => {}
            "base" => f.base = true,
            "c1c0" => f.c1c0 = true,
            "mc1c0" => f.mc1c0 = true,
            other => return Err(ConfigError::Stabilize(other.into())),
        }
    }
    Ok(f)
}

pub fn stabilize_from_str(s: &str) -> Result<StabilizeFlags, ConfigError> {
    parse_stabilize(&s.split(',').collect::<Vec<_>>())
}

pub fn stabilize_name(f: StabilizeFlags) -> String {
    let parts: Vec<&str> = [(f.base, "base"), (f.c1c0, "c1c0"), (f.mc1c0, "mc1c0")]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("+")
    }
}

/// Main effects in every role plus `e*m` in the outcome.
pub fn default_models(pathway: Pathway, d0: usize, d1: usize) -> WorkingModelSet {
    let spec = |t: &str| DesignSpec::parse(t, d0, d1).expect("default designs parse");
    let mean_family = match pathway {
        Pathway::Linear => Family::Gaussian,
        Pathway::Discrete => Family::Logit,
    };
    let c1 = if d1 > 0 { ", c1" } else { "" };
    WorkingModelSet {
        outcome: ModelSpec::new(spec(&format!("1, c0, e{c1}, m, e*m")), Family::Gaussian),
        mediator: ModelSpec::new(spec(&format!("1, c0, e{c1}")), mean_family),
        c1_means: vec![ModelSpec::new(spec("1, c0, e"), mean_family); d1],
        propensity_c0: ModelSpec::new(spec("1, c0"), Family::Logit),
        propensity_c1: ModelSpec::new(spec(&format!("1, c0{c1}")), Family::Logit),
        propensity_m: ModelSpec::new(spec(&format!("1, c0{c1}, m")), Family::Logit),
        propensity_c0_ratio: None,
        propensity_c1_mratio: None,
        outcome_marginal: ModelSpec::new(spec("1, c0, e"), Family::Gaussian),
    }
}

fn apply(entry: &ModelEntry, role: &str, base: &ModelSpec, d0: usize, d1: usize) -> Result<ModelSpec, ConfigError> {
    let family = entry.family.as_deref().map(parse_family).transpose()?.unwrap_or(base.family);
    let design = match &entry.terms {
        Some(t) => DesignSpec::parse(t, d0, d1).map_err(|source| ConfigError::Terms { role: role.into(), source })?,
        None => base.design.clone(),
    };
    Ok(ModelSpec::new(design, family))
}

/// Resolves the model sections of `file` over `base`.
pub fn resolve_models(
    file: &ConfigFile,
    mut set: WorkingModelSet,
    d0: usize,
    d1: usize,
) -> Result<WorkingModelSet, ConfigError> {
    // The shared c1_mean section goes first so per-component sections win.
    if let Some(entry) = file.model.get("c1_mean") {
        for j in 0..d1 {
            set.c1_means[j] = apply(entry, "c1_mean", &set.c1_means[j], d0, d1)?;
        }
    }
    for (role, entry) in &file.model {
        match role.as_str() {
            "c1_mean" => {}
            "outcome" => set.outcome = apply(entry, role, &set.outcome, d0, d1)?,
            "mediator" => set.mediator = apply(entry, role, &set.mediator, d0, d1)?,
            "propensity_c0" => set.propensity_c0 = apply(entry, role, &set.propensity_c0, d0, d1)?,
            "propensity_c1" => set.propensity_c1 = apply(entry, role, &set.propensity_c1, d0, d1)?,
            "propensity_m" => set.propensity_m = apply(entry, role, &set.propensity_m, d0, d1)?,
            "outcome_marginal" => set.outcome_marginal = apply(entry, role, &set.outcome_marginal, d0, d1)?,
            "propensity_c0_ratio" => {
                let base = set.propensity_c0_ratio.clone().unwrap_or_else(|| set.propensity_c0.clone());
                set.propensity_c0_ratio = Some(apply(entry, role, &base, d0, d1)?);
            }
            "propensity_c1_mratio" => {
                let base = set.propensity_c1_mratio.clone().unwrap_or_else(|| set.propensity_c1.clone());
                set.propensity_c1_mratio = Some(apply(entry, role, &base, d0, d1)?);
            }
            other => {
                let j = other
                    .strip_prefix("c1_mean_")
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&j| (1..=d1).contains(&j))
                    .ok_or_else(|| ConfigError::UnknownRole(other.into()))?;
                set.c1_means[j - 1] = apply(entry, role, &set.c1_means[j - 1], d0, d1)?;
            }
        }
    }
    Ok(set)
}

/// The resolved models in config-file syntax.
pub fn render_models(set: &WorkingModelSet) -> String {
    let mut out = String::new();
    for (role, spec) in set.roles() {
        let name = role.to_string().replace("c1_mean[", "c1_mean_").replace(']', "");
        let _ = writeln!(out, "[model.{name}]\nfamily = \"{}\"\nterms = \"{}\"\n", spec.family.name(), spec.design);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_defaults() {
        let file = ConfigFile::parse(
            r#"
            pathway = "linear"
            stabilize = ["base", "c1c0"]
            [model.outcome]
            terms = "1, c0, e, c1, m"
            [model.c1_mean]
            terms = "1, c0, e, c0*e"
            [model.c1_mean_2]
            terms = "1, e"
            [model.propensity_c0_ratio]
            family = "probit"
            "#,
        )
        .unwrap();
        let set = resolve_models(&file, default_models(Pathway::Linear, 1, 3), 1, 3).unwrap();
        assert_eq!(set.outcome.design.to_string(), "1, c0_1, e, c1_1, c1_2, c1_3, m");
        assert_eq!(set.c1_means[0].design.to_string(), "1, c0_1, e, c0_1*e");
        assert_eq!(set.c1_means[1].design.to_string(), "1, e");
        assert_eq!(set.propensity_c0_ratio.unwrap().family, Family::Probit);
        match file.stabilize {
            Some(StabilizeValue::Many(v)) => {
                let f = parse_stabilize(&v.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
                assert_eq!(f, StabilizeFlags { base: true, c1c0: true, mc1c0: false });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rendered_models_parse_back() {
        let set = default_models(Pathway::Linear, 2, 2);
        let file = ConfigFile::parse(&render_models(&set)).unwrap();
        let back = resolve_models(&file, default_models(Pathway::Discrete, 2, 2), 2, 2).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_unknown_things() {
        assert!(ConfigFile::parse("colour = 1").is_err());
        let file = ConfigFile::parse("[model.exposure]\nfamily = \"logit\"").unwrap();
        assert!(matches!(
            resolve_models(&file, default_models(Pathway::Linear, 1, 1), 1, 1),
            Err(ConfigError::UnknownRole(_))
        ));
        assert!(stabilize_from_str("base,foo").is_err());
        assert_eq!(stabilize_name(stabilize_from_str("mc1c0,base").unwrap()), "base+mc1c0");
    }
}
