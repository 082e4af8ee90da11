use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::FacetCounts;

/// A single training or dev example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    /// Regression target, or class index for classifiers.
    pub target: f64,
    pub facet: usize,
}

/// Training data split into facets, plus a dev set with the same number of
/// examples from every facet.
#[derive(Debug, Clone)]
pub struct FacetedDataset {
    names: Vec<String>,
    facets: Vec<Vec<Example>>,
    dev: Vec<Example>,
    dim: usize,
}

impl FacetedDataset {
    pub fn new(names: Vec<String>, facets: Vec<Vec<Example>>, dev: Vec<Example>) -> Result<Self> {
        if facets.is_empty() {
            return Err(Error::config("dataset has no facets"));
        }
        if names.len() != facets.len() {
            return Err(Error::config(format!(
                "{} facet names for {} facets",
                names.len(),
                facets.len()
            )));
        }
        if let Some(i) = facets.iter().position(Vec::is_empty) {
            return Err(Error::config(format!("facet `{}` is empty", names[i])));
        }
        if dev.is_empty() {
            return Err(Error::config("dev set is empty"));
        }
        let dim = facets[0][0].features.len();
        let all = facets.iter().flatten().chain(&dev);
        for ex in all {
            if ex.features.len() != dim {
                return Err(Error::config(format!(
                    "example has {} features, expected {dim}",
                    ex.features.len()
                )));
            }
            if ex.facet >= facets.len() {
                return Err(Error::config(format!("unknown facet index {}", ex.facet)));
            }
            if ex.features.iter().any(|x| !x.is_finite()) || !ex.target.is_finite() {
                return Err(Error::config("non-finite value in example"));
            }
        }
        for (f, facet) in facets.iter().enumerate() {
            if facet.iter().any(|ex| ex.facet != f) {
                return Err(Error::config(format!(
                    "facet `{}` holds examples labelled with another facet",
                    names[f]
                )));
            }
        }
        let mut dev_counts = vec![0usize; facets.len()];
        for ex in &dev {
            dev_counts[ex.facet] += 1;
        }
        if dev_counts.iter().any(|&c| c != dev_counts[0]) {
            return Err(Error::config(format!(
                "dev set is not facet-balanced: {dev_counts:?}"
            )));
        }
        Ok(Self {
            names,
            facets,
            dev,
            dim,
        })
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn facet(&self, f: usize) -> &[Example] {
        &self.facets[f]
    }

    pub fn dev(&self) -> &[Example] {
        &self.dev
    }

    pub fn counts(&self) -> FacetCounts {
        FacetCounts::new(self.facets.iter().map(|f| f.len() as u64).collect())
            .expect("facets are non-empty")
    }

    pub fn total(&self) -> usize {
        self.facets.iter().map(Vec::len).sum()
    }

    /// Uniform batch from one facet.
    pub fn sample_facet_batch<R: Rng + ?Sized>(
        &self,
        facet: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Vec<&Example> {
        sample_uniform(&self.facets[facet], batch_size, rng)
    }

    /// Batch whose examples are drawn independently from the concatenation of
    /// all facets, as a shuffled mixed corpus would produce.
    pub fn sample_mixed_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Vec<&Example> {
        let total = self.total();
        (0..batch_size)
            .map(|_| {
                let mut i = rng.random_range(0..total);
                let mut f = 0;
                while i >= self.facets[f].len() {
                    i -= self.facets[f].len();
                    f += 1;
                }
                &self.facets[f][i]
            })
            .collect()
    }

    /// Dev batch for reward evaluation.
    pub fn sample_eval_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Example>> {
        if self.dev.is_empty() {
            return Err(Error::config("dev set is empty"));
        }
        if batch_size == 0 {
            return Err(Error::config("eval batch size must be positive"));
        }
        Ok(sample_uniform(&self.dev, batch_size, rng))
    }

    /// Loads a facet directory tree:
    ///
    /// ```text
    /// root/<facet>/*.txt      training examples, one per line
    /// root/dev/<facet>/*.txt  dev examples for the same facet names
    /// ```
    ///
    /// Each line holds whitespace- or comma-separated numbers; the last one
    /// is the target. Blank lines and lines starting with `#` are skipped.
    /// Facets are ordered by name.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let mut names = Vec::new();
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if name != "dev" {
                    names.push(name);
                }
            }
        }
        names.sort();
        if names.is_empty() {
            return Err(Error::config(format!(
                "no facet directories under {}",
                root.display()
            )));
        }
        let dev_root = root.join("dev");
        if !dev_root.is_dir() {
            return Err(Error::config(format!(
                "missing dev directory {}",
                dev_root.display()
            )));
        }

        let mut seen = HashSet::new();
        let mut facets = Vec::with_capacity(names.len());
        let mut dev = Vec::new();
        for (f, name) in names.iter().enumerate() {
            let lines = read_facet_lines(&root.join(name))?;
            let mut examples = Vec::with_capacity(lines.len());
            for (path, line) in lines {
                if !seen.insert(line.clone()) {
                    return Err(Error::config(format!(
                        "example `{line}` appears in more than one facet ({})",
                        path.display()
                    )));
                }
                examples.push(parse_example(&line, f, &path)?);
            }
            facets.push(examples);
            let dev_dir = dev_root.join(name);
            if !dev_dir.is_dir() {
                return Err(Error::config(format!(
                    "missing dev directory for facet `{name}`"
                )));
            }
            for (path, line) in read_facet_lines(&dev_dir)? {
                dev.push(parse_example(&line, f, &path)?);
            }
        }
        Self::new(names, facets, dev)
    }
}

fn sample_uniform<'a, R: Rng + ?Sized>(
    pool: &'a [Example],
    batch_size: usize,
    rng: &mut R,
) -> Vec<&'a Example> {
    if pool.len() >= batch_size {
        index::sample(rng, pool.len(), batch_size)
            .into_iter()
            .map(|i| &pool[i])
            .collect()
    } else {
        (0..batch_size)
            .map(|_| &pool[rng.random_range(0..pool.len())])
            .collect()
    }
}

fn read_facet_lines(dir: &Path) -> Result<Vec<(PathBuf, String)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path)?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push((path.clone(), line.to_string()));
        }
    }
    Ok(out)
}

fn parse_example(line: &str, facet: usize, path: &Path) -> Result<Example> {
    let values = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::config(format!("{}: `{line}`: {e}", path.display())))?;
    let (target, features) = values
        .split_last()
        .ok_or_else(|| Error::config(format!("{}: empty example", path.display())))?;
    if features.is_empty() {
        return Err(Error::config(format!(
            "{}: example `{line}` has no features",
            path.display()
        )));
    }
    Ok(Example {
        features: features.to_vec(),
        target: *target,
        facet,
    })
}
