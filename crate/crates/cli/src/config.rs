use std::path::Path;

use anyhow::{bail, Context, Result};
use bellstrength::games::{strength, GameOptions, Mode};
use bellstrength::json::proof_from_json;
use bellstrength::quantum::{catalog, CATALOG_NAMES};
use bellstrength::{NonlocalityProof, SettingDistribution};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Everything a command needs besides its own flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: String,
    pub format: Format,
    pub game: GameOptions,
}

impl RunConfig {
    pub fn new(source: String, format: Format) -> Self {
        Self {
            source,
            format,
            game: GameOptions::default(),
        }
    }

    /// A catalog name, or else a path to a proof document.
    pub fn load_proof(&self) -> Result<NonlocalityProof> {
        if CATALOG_NAMES.contains(&self.source.as_str()) {
            return Ok(catalog(&self.source)?);
        }
        let path = Path::new(&self.source);
        if !path.exists() {
            bail!(
                "`{}` is neither a catalog proof ({}) nor a file",
                self.source,
                CATALOG_NAMES.join(", ")
            );
        }
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        proof_from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn positive(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{text}`")),
    }
}

fn numbers(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad probability `{t}`"))
        })
        .collect()
}

/// Parses a setting distribution.
///
/// Accepted forms: `uniform`; `uncorrelated` or `correlated` for the optimum of
/// that game; comma-separated joint probabilities; per-party marginals joined
/// by `/`, as in `0.5,0.5/0.3,0.7`.
pub fn parse_sigma(
    text: &str,
    proof: &NonlocalityProof,
    game: &GameOptions,
) -> Result<SettingDistribution> {
    let sc = proof.scenario();
    Ok(match text.trim() {
        "uniform" => SettingDistribution::uniform(sc),
        "uncorrelated" => strength(proof, Mode::Uncorrelated, game)?.sigma_star,
        "correlated" => strength(proof, Mode::Correlated, game)?.sigma_star,
        s if s.contains('/') => {
            let marginals = s.split('/').map(numbers).collect::<Result<Vec<_>>>()?;
            SettingDistribution::product(sc, marginals)?
        }
        s => SettingDistribution::general(sc, numbers(s)?)?,
    })
}
