//! Rank-detection benchmark: draw synthetic replicates, detect `k` with one
//! or more schemes, and summarize the errors against the true `k*`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fit, SolverConfig, SolverKind};
use crate::consensus::{consensus_criteria, DEFAULT_RUNS};
use crate::data::{EncodedConfounds, MaskedMatrix};
use crate::error::{IcqfError, Result};
use crate::eval::detection_error_stats;
use crate::io::format_f64;
use crate::rank::{bic1, default_plan, select_k};
use crate::synthetic::{gen_dataset, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectScheme {
    /// Smallest blockwise cross-validation error.
    Bcv,
    /// Smallest BIC₁ of a full-data fit.
    Bic1,
    /// Largest cophenetic correlation of the restart consensus.
    Ccc,
    /// Largest dispersion of the restart consensus.
    Dispersion,
}

impl DetectScheme {
    pub const ALL: [DetectScheme; 4] = [DetectScheme::Bcv, DetectScheme::Bic1, DetectScheme::Ccc, DetectScheme::Dispersion];

    pub fn name(self) -> &'static str {
        match self {
            DetectScheme::Bcv => "bcv",
            DetectScheme::Bic1 => "bic1",
            DetectScheme::Ccc => "ccc",
            DetectScheme::Dispersion => "dispersion",
        }
    }
}

impl fmt::Display for DetectScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectScheme {
    type Err = IcqfError;

    fn from_str(s: &str) -> Result<Self> {
        DetectScheme::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| IcqfError::Config(format!("unknown scheme {s:?}; expected bcv, bic1, ccc or dispersion")))
    }
}

/// Settings shared by all schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSettings {
    pub k_grid: Vec<usize>,
    pub beta: f64,
    pub config: SolverConfig,
    pub consensus_runs: usize,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            k_grid: (2..=20).collect(),
            beta: 0.1,
            config: SolverConfig::default().with_solver(SolverKind::Auto),
            consensus_runs: DEFAULT_RUNS,
        }
    }
}

/// Per-`k` criterion values and the chosen `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scheme: DetectScheme,
    pub k_hat: usize,
    pub scores: Vec<(usize, f64)>,
}

fn pick(scores: &[(usize, f64)], maximize: bool) -> usize {
    let mut best = scores[0];
    for &(k, s) in &scores[1..] {
        let better = if maximize { s > best.1 } else { s < best.1 };
        if better || (s == best.1 && k < best.0) {
            best = (k, s);
        }
    }
    best.0
}

/// Detects `k` on one dataset.
pub fn detect_rank(
    data: &MaskedMatrix,
    confounds: &EncodedConfounds,
    scheme: DetectScheme,
    settings: &DetectSettings,
    seed: u64,
) -> Result<Detection> {
    if settings.k_grid.is_empty() {
        return Err(IcqfError::Invalid("empty k grid".into()));
    }
    let cfg = settings.config.clone().with_beta(settings.beta);
    let scores: Vec<(usize, f64)> = match scheme {
        DetectScheme::Bcv => {
            let plan = default_plan(data.nrows(), data.ncols(), seed)?;
            let res = select_k(data, confounds, &settings.k_grid, &[settings.beta], &plan, &cfg)?;
            res.grid.iter().map(|g| (g.k, g.score.error)).collect()
        }
        DetectScheme::Bic1 => settings
            .k_grid
            .par_iter()
            .map(|&k| {
                let (model, _) = fit(data, confounds, &cfg.clone().with_k(k))?;
                Ok((k, bic1(data, &model, confounds)?))
            })
            .collect::<Result<_>>()?,
        DetectScheme::Ccc | DetectScheme::Dispersion => settings
            .k_grid
            .par_iter()
            .map(|&k| {
                let s = consensus_criteria(data, confounds, k, &cfg, settings.consensus_runs, seed)?;
                Ok((k, if scheme == DetectScheme::Ccc { s.ccc } else { s.dispersion }))
            })
            .collect::<Result<_>>()?,
    };
    let maximize = matches!(scheme, DetectScheme::Ccc | DetectScheme::Dispersion);
    Ok(Detection {
        scheme,
        k_hat: pick(&scores, maximize),
        scores,
    })
}

/// A replicate sweep over noise levels and schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    /// Template for the generator; `delta` and `seed` are overridden.
    pub synthetic: SyntheticSpec,
    pub deltas: Vec<f64>,
    pub replicates: usize,
    pub schemes: Vec<DetectScheme>,
    pub seed: u64,
    pub settings: DetectSettings,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            synthetic: SyntheticSpec::default(),
            deltas: vec![0.1, 0.3],
            replicates: 10,
            schemes: vec![DetectScheme::Bcv],
            seed: 0,
            settings: DetectSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: DetectScheme,
    pub delta: f64,
    pub k_hats: Vec<usize>,
    pub mean_error: f64,
    pub std_error: f64,
}

/// Replicate `r` at every noise level uses generator and scheme seed
/// `seed + r`. Replicates run in parallel; results do not depend on the
/// schedule.
pub fn bench_detect(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    if spec.replicates == 0 || spec.deltas.is_empty() || spec.schemes.is_empty() {
        return Err(IcqfError::Config("bench needs replicates, deltas and schemes".into()));
    }
    let k_star = spec.synthetic.k_star;
    let mut rows = Vec::new();
    for &delta in &spec.deltas {
        let per_rep: Vec<Vec<usize>> = (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = spec.seed.wrapping_add(r as u64);
                let ds = gen_dataset(&spec.synthetic.clone().with_delta(delta).with_seed(seed))?;
                let data = ds.observed();
                let conf = EncodedConfounds::none(data.nrows());
                spec.schemes
                    .iter()
                    .map(|&s| detect_rank(&data, &conf, s, &spec.settings, seed).map(|d| d.k_hat))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            let k_hats: Vec<usize> = per_rep.iter().map(|v| v[si]).collect();
            let (mean_error, std_error) = detection_error_stats(&k_hats, k_star)?;
            rows.push(BenchRow {
                scheme,
                delta,
                k_hats,
                mean_error,
                std_error,
            });
        }
    }
    Ok(rows)
}

/// Writes `scheme,delta,replicates,mean_error,std_error,k_hats` rows, with
/// the detected ranks joined by `;`.
pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("scheme,delta,replicates,mean_error,std_error,k_hats\n");
    for r in rows {
        let ks: Vec<String> = r.k_hats.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scheme,
            format_f64(r.delta),
            r.k_hats.len(),
            format_f64(r.mean_error),
            format_f64(r.std_error),
            ks.join(";")
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| IcqfError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| IcqfError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_roundtrip() {
        for s in DetectScheme::ALL {
            assert_eq!(s.name().parse::<DetectScheme>().unwrap(), s);
        }
        assert!("aic".parse::<DetectScheme>().is_err());
    }

    #[test]
    fn pick_breaks_ties_low() {
        assert_eq!(pick(&[(4, 1.0), (2, 1.0), (3, 2.0)], false), 2);
        assert_eq!(pick(&[(4, 1.0), (2, 1.0), (3, 2.0)], true), 3);
    }

    #[test]
    fn small_bench_runs() {
        let spec = BenchSpec {
            synthetic: SyntheticSpec {
                n: 40,
                m: 30,
                k_star: 2,
                ..Default::default()
            },
            deltas: vec![0.0],
            replicates: 2,
            schemes: vec![DetectScheme::Bic1],
            seed: 1,
            settings: DetectSettings {
                k_grid: vec![1, 2, 3],
                ..Default::default()
            },
        };
        let rows = bench_detect(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].k_hats.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        write_bench_csv(&rows, dir.path().join("b.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
        assert!(text.starts_with("scheme,delta,replicates"));
    }
}
