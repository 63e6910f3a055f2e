//! Datasets on disk: a domain file, one problem and one optimal plan file
//! per instance, a JSON-lines manifest and the spec that produced them.
//!
//! ```text
//! DIR/domain.pddl
//! DIR/problems/{id}.pddl
//! DIR/plans/{id}.plan
//! DIR/manifest.jsonl   {id, domain_kind, problem, plan, optimal_length, gen_spec_hash}
//! DIR/spec.json
//! DIR/templates.json   sentence templates for the domain
//! DIR/map.json         for obfuscated datasets
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use planeval_core::gen::{generate, Dataset, GenSpec};
use planeval_core::obfuscate::{deceptive_map, randomized_map_over, MapKind, ObfuscationMap};
use planeval_core::pddl::{domain_to_pddl, parse_domain, parse_plan, parse_problem, plan_to_pddl, problem_to_pddl};
use planeval_core::translate::DomainTemplates;
use planeval_core::{DomainModel, Plan, ProblemInstance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Obfuscation {
    Deceptive,
    Randomized { seed: u64 },
}

/// A generation spec file: a [`GenSpec`] plus an optional renaming that turns
/// the result into a Mystery dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenFile {
    #[serde(flatten)]
    pub spec: GenSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obfuscation: Option<Obfuscation>,
}

impl GenFile {
    /// Hex SHA-256 of the spec's canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("specs serialize")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub domain_kind: String,
    /// Relative to the dataset directory.
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_length: Option<usize>,
    pub gen_spec_hash: String,
}

/// Generates the dataset a spec file describes, renamed if asked.
pub fn build(file: &GenFile) -> Result<(Dataset, Option<ObfuscationMap>, String)> {
    let dataset = generate(&file.spec)?;
    let kind = file.spec.domain_kind.as_str().to_string();
    match file.obfuscation {
        None => Ok((dataset, None, kind)),
        Some(how) => {
            let map = match how {
                Obfuscation::Deceptive => deceptive_map(&dataset.domain)?,
                Obfuscation::Randomized { seed } => {
                    randomized_map_over(&dataset.domain, dataset.instances.iter().flat_map(|i| i.object_names()), seed)
                }
            };
            let mapped = dataset.obfuscate(&map, "mystery")?;
            Ok((mapped, Some(map), "mystery".into()))
        }
    }
}

/// Templates that fit `domain`: the shipped ones when the domain is one of
/// the shipped domains, mechanical ones otherwise.
pub fn templates_for(domain: &DomainModel, map: Option<&ObfuscationMap>) -> DomainTemplates {
    let shipped = [DomainTemplates::blocksworld(), DomainTemplates::logistics(), DomainTemplates::mystery_deceptive()];
    let deceptive_ok = map.is_none_or(|m| m.kind == MapKind::Deceptive);
    shipped
        .into_iter()
        .find(|t| t.domain == domain.name && deceptive_ok && t.check(domain).is_ok())
        .unwrap_or_else(|| DomainTemplates::generic(domain))
}

/// Writes a generated dataset and its spec under `dir`.
pub fn write_generated(dir: &Path, file: &GenFile) -> Result<usize> {
    let (dataset, map, kind) = build(file)?;
    let plans: Vec<Option<Plan>> = dataset.optimal_plans.into_iter().map(Some).collect();
    let parts = Parts { domain: &dataset.domain, instances: &dataset.instances, plans: &plans, kind: &kind };
    write(dir, parts, Some(file), map.as_ref())?;
    Ok(dataset.instances.len())
}

/// What a dataset directory holds, borrowed.
#[derive(Clone, Copy)]
pub struct Parts<'a> {
    pub domain: &'a DomainModel,
    pub instances: &'a [ProblemInstance],
    pub plans: &'a [Option<Plan>],
    pub kind: &'a str,
}

/// Writes a dataset under `dir`, which may already exist. Output bytes are a
/// function of the arguments only.
pub fn write(dir: &Path, parts: Parts<'_>, file: Option<&GenFile>, map: Option<&ObfuscationMap>) -> Result<()> {
    assert_eq!(parts.instances.len(), parts.plans.len());
    let spec_hash = file.map(GenFile::hash).unwrap_or_default();
    fs::create_dir_all(dir.join("problems"))?;
    fs::write(dir.join("domain.pddl"), domain_to_pddl(parts.domain))?;
    let mut manifest = String::new();
    for (inst, plan) in parts.instances.iter().zip(parts.plans) {
        let problem = format!("problems/{}.pddl", inst.id);
        fs::write(dir.join(&problem), problem_to_pddl(inst))?;
        let plan_path = match plan {
            Some(plan) => {
                let rel = format!("plans/{}.plan", inst.id);
                fs::create_dir_all(dir.join("plans"))?;
                fs::write(dir.join(&rel), plan_to_pddl(plan))?;
                Some(rel)
            }
            None => None,
        };
        let entry = ManifestEntry {
            id: inst.id.clone(),
            domain_kind: parts.kind.into(),
            problem,
            plan: plan_path,
            optimal_length: plan.as_ref().map(Plan::len),
            gen_spec_hash: spec_hash.clone(),
        };
        manifest.push_str(&serde_json::to_string(&entry)?);
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.jsonl"), manifest)?;
    if let Some(file) = file {
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(file)? + "\n")?;
    }
    fs::write(dir.join("templates.json"), templates_for(parts.domain, map).to_json() + "\n")?;
    if let Some(map) = map {
        fs::write(dir.join("map.json"), map.to_json() + "\n")?;
    }
    Ok(())
}

/// Renames a loaded dataset; instances become `mystery-{i}`.
pub fn obfuscate_loaded(data: &Loaded, map: &ObfuscationMap) -> Result<(DomainModel, Vec<ProblemInstance>, Vec<Option<Plan>>)> {
    let domain = map.apply_domain(&data.domain)?;
    let mut instances = Vec::with_capacity(data.instances.len());
    for (i, inst) in data.instances.iter().enumerate() {
        let mut mapped = map.apply_instance(inst)?;
        mapped.id = format!("mystery-{i}");
        instances.push(mapped);
    }
    let plans = data.plans.iter().map(|p| p.as_ref().map(|p| map.apply_plan(p)).transpose()).collect::<Result<_, _>>()?;
    Ok((domain, instances, plans))
}

/// The spec file a dataset was generated from, if it was.
pub fn read_spec(dir: &Path) -> Result<Option<GenFile>> {
    let path = dir.join("spec.json");
    if !path.exists() {
        return Ok(None);
    }
    GenFile::load(&path).map(Some)
}

/// A dataset read back from disk, instances in manifest order.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dir: PathBuf,
    pub domain: DomainModel,
    pub entries: Vec<ManifestEntry>,
    pub instances: Vec<ProblemInstance>,
    pub plans: Vec<Option<Plan>>,
    pub templates: DomainTemplates,
}

impl Loaded {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

/// Reads a dataset directory, or a manifest file inside one.
pub fn load(path: &Path) -> Result<Loaded> {
    let (dir, manifest) = if path.is_dir() {
        (path.to_path_buf(), path.join("manifest.jsonl"))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let domain_path = dir.join("domain.pddl");
    let domain = parse_domain(&fs::read_to_string(&domain_path).with_context(|| format!("reading {}", domain_path.display()))?)
        .with_context(|| format!("parsing {}", domain_path.display()))?;
    let entries = read_manifest(&manifest)?;
    let mut instances = Vec::with_capacity(entries.len());
    let mut plans = Vec::with_capacity(entries.len());
    for e in &entries {
        let p = dir.join(&e.problem);
        let inst = parse_problem(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?, &domain)
            .with_context(|| format!("parsing {}", p.display()))?;
        if inst.id != e.id {
            bail!("{} declares problem `{}` but the manifest calls it `{}`", p.display(), inst.id, e.id);
        }
        instances.push(inst);
        plans.push(match &e.plan {
            Some(rel) => {
                let p = dir.join(rel);
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                Some(parse_plan(&text, &domain).with_context(|| format!("parsing {}", p.display()))?)
            }
            None => None,
        });
    }
    let templates_path = dir.join("templates.json");
    let templates = match fs::read_to_string(&templates_path) {
        Ok(text) => DomainTemplates::from_json(&text).with_context(|| format!("parsing {}", templates_path.display()))?,
        Err(_) => templates_for(&domain, None),
    };
    Ok(Loaded { dir, domain, entries, instances, plans, templates })
}
