//! Sparse-PCA test instances and table-style experiment campaigns.
//!
//! Component `k` holds a data matrix `B_k` whose entries are, independently,
//! `N(a, c)` with `a, c ~ U(0, 1)` with probability `p` and exactly zero
//! otherwise. Its smooth term is `g_k(z) = -|B_k z|^2 / 2`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::algorithms::{run, Algorithm, DelayBounds, RunConfig, Termination};
use crate::error::{Error, Result};
use crate::problem::{ConsensusProblem, QuadraticComponent, SmoothComponent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsePcaSpec {
    /// Dimension `N`.
    pub dim: usize,
    /// Number of components `K`.
    pub components: usize,
    /// Rows `M` of each data matrix.
    pub rows: usize,
    /// Probability `p` that an entry is nonzero.
    pub density: f64,
    /// Weight `lambda` of the l1 penalty.
    pub l1_weight: f64,
    pub seed: u64,
}

impl Default for SparsePcaSpec {
    /// Desk scale: `N = 50`, `K = 5`, `M = 20`, `p = 0.1`, `lambda = 0`.
    fn default() -> Self {
        SparsePcaSpec {
            dim: 50,
            components: 5,
            rows: 20,
            density: 0.1,
            l1_weight: 0.0,
            seed: 0,
        }
    }
}

impl SparsePcaSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.components == 0 || self.rows == 0 {
            return Err(Error::InvalidArgument(
                "dim, components and rows must all be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidArgument(format!(
                "density must lie in [0, 1], got {}",
                self.density
            )));
        }
        if !(self.l1_weight >= 0.0) || !self.l1_weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "l1_weight must be finite and nonnegative, got {}",
                self.l1_weight
            )));
        }
        Ok(())
    }

    /// The data matrices `B_1, ..., B_K`, a pure function of the spec.
    ///
    /// Every entry consumes the same four draws whether or not it ends up
    /// zero, so changing `p` does not reshuffle the other entries.
    pub fn data(&self) -> Result<Vec<DMatrix<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.components)
            .map(|_| {
                let mut b = DMatrix::zeros(self.rows, self.dim);
                for i in 0..self.rows {
                    for j in 0..self.dim {
                        let pick: f64 = rng.random();
                        let mean: f64 = rng.random();
                        let var: f64 = rng.random();
                        let z: f64 = rng.sample(StandardNormal);
                        if pick < self.density {
                            b[(i, j)] = mean + var.sqrt() * z;
                        }
                    }
                }
                b
            })
            .collect())
    }

    /// Builds the consensus problem over the unit ball.
    pub fn generate(&self) -> Result<ConsensusProblem> {
        let components = self
            .data()?
            .iter()
            .map(|b| Arc::new(QuadraticComponent::from_data(b)) as Arc<dyn SmoothComponent>)
            .collect();
        ConsensusProblem::new(self.dim, components, self.l1_weight, 1.0)
    }
}

/// One table cell: an instance family and how to run it. The instance and
/// run seeds are assigned per repetition by the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignCell {
    #[serde(default)]
    pub instance: SparsePcaSpec,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    /// Repetitions per cell; repetition `s` uses seed `base_seed + s` for
    /// both the instance and the run.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub cells: Vec<CampaignCell>,
}

fn default_seeds() -> usize {
    20
}

/// Aggregated iterations-to-epsilon for one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub dim: usize,
    pub components: usize,
    pub delay_bounds: DelayBounds,
    pub l1_weight: f64,
    pub seed_count: usize,
    /// Mean over converged repetitions; NaN when none converged.
    pub mean_iters: f64,
    pub std_iters: f64,
    /// Repetitions that did not converge (budget exhausted or aborted).
    pub censored_count: usize,
    /// Per repetition: iterations when converged, `None` when censored.
    pub iterations: Vec<Option<usize>>,
}

pub const CAMPAIGN_CSV_HEADER: [&str; 9] = [
    "algorithm",
    "N",
    "K",
    "T",
    "lambda",
    "seed_count",
    "mean_iters",
    "std_iters",
    "censored_count",
];

impl Campaign {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidArgument("campaign has no cells".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument(
                "campaign needs at least one seed".into(),
            ));
        }
        for cell in &self.cells {
            cell.instance.validate()?;
            cell.run.validate()?;
            cell.run.delay_bounds.resolve(cell.instance.components)?;
        }
        Ok(())
    }

    /// Runs every cell and repetition, in parallel, and aggregates per cell.
    /// The result is independent of thread scheduling.
    pub fn run(&self) -> Result<Vec<CellResult>> {
        self.validate()?;
        let jobs: Vec<(usize, usize)> = (0..self.cells.len())
            .flat_map(|c| (0..self.seeds).map(move |s| (c, s)))
            .collect();
        let outcomes: Vec<Result<Option<usize>>> = jobs
            .par_iter()
            .map(|&(c, s)| {
                let cell = &self.cells[c];
                let seed = self.base_seed + s as u64;
                let problem = SparsePcaSpec {
                    seed,
                    ..cell.instance.clone()
                }
                .generate()?;
                let out = run(
                    &problem,
                    &RunConfig {
                        seed,
                        record_snapshots: false,
                        ..cell.run.clone()
                    },
                )?;
                Ok((out.termination == Termination::Converged).then_some(out.iterations))
            })
            .collect();

        let mut iter = outcomes.into_iter();
        self.cells
            .iter()
            .map(|cell| {
                let iterations: Vec<Option<usize>> =
                    iter.by_ref().take(self.seeds).collect::<Result<_>>()?;
                let (mean_iters, std_iters) = mean_std(&iterations);
                Ok(CellResult {
                    algorithm: cell.run.algorithm,
                    dim: cell.instance.dim,
                    components: cell.instance.components,
                    delay_bounds: cell.run.delay_bounds.clone(),
                    l1_weight: cell.instance.l1_weight,
                    seed_count: self.seeds,
                    mean_iters,
                    std_iters,
                    censored_count: iterations.iter().filter(|i| i.is_none()).count(),
                    iterations,
                })
            })
            .collect()
    }
}

fn mean_std(iterations: &[Option<usize>]) -> (f64, f64) {
    let done: Vec<f64> = iterations.iter().flatten().map(|&i| i as f64).collect();
    if done.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = done.len() as f64;
    let mean = done.iter().sum::<f64>() / n;
    let std = if done.len() > 1 {
        (done.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

pub fn write_results_csv<W: Write>(results: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CAMPAIGN_CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.algorithm.name().to_string(),
            r.dim.to_string(),
            r.components.to_string(),
            r.delay_bounds.to_string(),
            r.l1_weight.to_string(),
            r.seed_count.to_string(),
            format!("{:.2}", r.mean_iters),
            format!("{:.2}", r.std_iters),
            r.censored_count.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Small instances that finish in seconds.
    Desk,
    /// Full-size instances (`N = 500`, `K = 10`, `M = 100`).
    Paper,
}

pub const PRESETS: [&str; 4] = ["table1", "table2", "table3", "table4"];

const COMPARED: [Algorithm; 3] = [
    Algorithm::SyncAdmm,
    Algorithm::SyncPadmm,
    Algorithm::AsyncPadmm,
];

fn cells_for(instances: Vec<(SparsePcaSpec, DelayBounds)>) -> Vec<CampaignCell> {
    instances
        .into_iter()
        .flat_map(|(instance, delay_bounds)| {
            COMPARED.into_iter().map(move |algorithm| CampaignCell {
                instance: instance.clone(),
                run: RunConfig {
                    algorithm,
                    delay_bounds: delay_bounds.clone(),
                    ..RunConfig::default()
                },
            })
        })
        .collect()
}

/// The built-in campaigns: `table1` varies `K`, `table2` the delay bounds
/// (including a single slow worker), `table3` the dimension and `table4` the
/// l1 weight. Desk scale shrinks the sizes and averages over 20 seeds; full
/// scale averages over 50.
pub fn preset(name: &str, scale: Scale) -> Result<Campaign> {
    let base = match scale {
        Scale::Desk => SparsePcaSpec::default(),
        Scale::Paper => SparsePcaSpec {
            dim: 500,
            components: 10,
            rows: 100,
            ..SparsePcaSpec::default()
        },
    };
    let desk = scale == Scale::Desk;
    let instances: Vec<(SparsePcaSpec, DelayBounds)> = match name {
        "table1" => {
            let ks: &[usize] = if desk {
                &[5, 10, 15, 20, 25]
            } else {
                &[10, 20, 30, 40, 50]
            };
            ks.iter()
                .map(|&components| {
                    (
                        SparsePcaSpec {
                            components,
                            ..base.clone()
                        },
                        DelayBounds::Uniform(5),
                    )
                })
                .collect()
        }
        "table2" => {
            let k = base.components;
            let slow = |t: usize| {
                let mut ts = vec![0; k];
                ts[k - 1] = t;
                DelayBounds::PerComponent(ts)
            };
            [0, 3, 6, 9]
                .into_iter()
                .map(DelayBounds::Uniform)
                .chain([slow(5), slow(10)])
                .map(|d| (base.clone(), d))
                .collect()
        }
        "table3" => {
            let ns: &[usize] = if desk {
                &[20, 40, 60, 80, 100]
            } else {
                &[200, 400, 600, 800, 1000]
            };
            ns.iter()
                .map(|&dim| {
                    (
                        SparsePcaSpec {
                            dim,
                            ..base.clone()
                        },
                        DelayBounds::Uniform(5),
                    )
                })
                .collect()
        }
        "table4" => {
            let lambdas: &[f64] = if desk {
                &[0.4, 0.8, 1.2, 1.6, 2.0]
            } else {
                &[20.0, 40.0, 60.0, 80.0, 100.0]
            };
            lambdas
                .iter()
                .map(|&l1_weight| {
                    (
                        SparsePcaSpec {
                            l1_weight,
                            ..base.clone()
                        },
                        DelayBounds::Uniform(5),
                    )
                })
                .collect()
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(Campaign {
        seeds: if desk { 20 } else { 50 },
        base_seed: 0,
        cells: cells_for(instances),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_gives_degenerate_components() {
        let spec = SparsePcaSpec {
            density: 0.0,
            ..SparsePcaSpec::default()
        };
        let p = spec.generate().unwrap();
        assert!(p.lipschitz().iter().all(|&l| l == f64::EPSILON));
        assert!(spec
            .data()
            .unwrap()
            .iter()
            .all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn two_by_two_lipschitz_matches_closed_form() {
        let spec = SparsePcaSpec {
            dim: 2,
            components: 3,
            rows: 2,
            density: 1.0,
            l1_weight: 0.0,
            seed: 11,
        };
        let data = spec.data().unwrap();
        let p = spec.generate().unwrap();
        for (b, l) in data.iter().zip(p.lipschitz()) {
            let g = b.transpose() * b;
            let (a, bb, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
            let top = 0.5 * (a + d) + (0.25 * (a - d).powi(2) + bb * bb).sqrt();
            assert!((l - top).abs() <= 1e-8 * top, "{l} vs {top}");
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SparsePcaSpec::default();
        assert_eq!(spec.data().unwrap(), spec.data().unwrap());
        let other = SparsePcaSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(spec.data().unwrap(), other.data().unwrap());
    }

    #[test]
    fn nonzero_fraction_matches_density() {
        for (seed, p) in [(1u64, 0.1), (2, 0.5), (3, 0.9)] {
            let spec = SparsePcaSpec {
                dim: 100,
                components: 4,
                rows: 50,
                density: p,
                l1_weight: 0.0,
                seed,
            };
            let n = (100 * 50 * 4) as f64;
            let nonzero = spec
                .data()
                .unwrap()
                .iter()
                .flat_map(|b| b.iter().copied().collect::<Vec<_>>())
                .filter(|&v| v != 0.0)
                .count() as f64;
            // one-degree-of-freedom chi-square, well inside the 99.9% quantile
            let chi2 = (nonzero - n * p).powi(2) / (n * p * (1.0 - p));
            assert!(chi2 < 10.83, "p = {p}: chi2 = {chi2}");
        }
    }

    #[test]
    fn components_are_concave() {
        let p = SparsePcaSpec::default().generate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for c in p.components() {
            for _ in 0..20 {
                let z = crate::problem::random_unit(&mut rng, 50);
                assert!(z.dot(&c.gradient(&z)) <= 0.0);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for bad in [
            SparsePcaSpec {
                dim: 0,
                ..Default::default()
            },
            SparsePcaSpec {
                density: 1.5,
                ..Default::default()
            },
            SparsePcaSpec {
                l1_weight: -1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.generate().is_err());
        }
    }

    #[test]
    fn mean_and_std_skip_censored_runs() {
        let (m, s) = mean_std(&[Some(10), None, Some(20)]);
        assert_eq!(m, 15.0);
        assert!((s - 50f64.sqrt()).abs() < 1e-12);
        assert!(mean_std(&[None]).0.is_nan());
        assert_eq!(mean_std(&[Some(3)]), (3.0, 0.0));
    }

    #[test]
    fn table2_preset_has_three_algorithms_per_column() {
        let c = preset("table2", Scale::Desk).unwrap();
        assert_eq!(c.cells.len(), 18);
        assert_eq!(
            c.cells[12].run.delay_bounds,
            DelayBounds::PerComponent(vec![0, 0, 0, 0, 5])
        );
        assert!(preset("table9", Scale::Desk).is_err());
        let paper = preset("table1", Scale::Paper).unwrap();
        assert_eq!(paper.seeds, 50);
        assert_eq!(paper.cells[0].instance.dim, 500);
    }

    #[test]
    fn empty_campaign_is_an_error() {
        let c = Campaign {
            seeds: 3,
            base_seed: 0,
            cells: vec![],
        };
        assert!(c.run().is_err());
    }

    #[test]
    fn campaign_csv_layout() {
        let campaign = Campaign {
            seeds: 2,
            base_seed: 5,
            cells: vec![CampaignCell {
                instance: SparsePcaSpec {
                    dim: 10,
                    components: 2,
                    rows: 8,
                    density: 0.5,
                    ..Default::default()
                },
                run: RunConfig {
                    delay_bounds: DelayBounds::PerComponent(vec![0, 2]),
                    max_iters: 3000,
                    ..RunConfig::default()
                },
            }],
        };
        let results = campaign.run().unwrap();
        assert_eq!(results, campaign.run().unwrap());
        let mut buf = Vec::new();
        write_results_csv(&results, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "algorithm,N,K,T,lambda,seed_count,mean_iters,std_iters,censored_count"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("async_padmm,10,2,0;2,0,2,"));
    }
}
