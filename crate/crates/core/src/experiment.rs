//! Numerical studies: randomized request ensembles, the four storage
//! strategies (Bell union, merging, clustering, clustering+merging), and a
//! deterministic CSV experiment runner with figure presets.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merging::{cluster_then_merge, merge_requests, ResourceState};
use crate::request::{
    cluster_requests_from_1d, cluster_requests_from_2d, gen_grouped, gen_uniform, RequestSet,
};
use crate::spectral::{build_hierarchy, SpectralOrder};
use crate::verification::{verify_recipe, VerdictStatus};

#[derive(Debug, Clone, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("spectral clustering failed: {0}")]
    Spectral(String),
    #[error(
        "verification failed (experiment={experiment}, n={n}, trial={trial}, \
         strategy={strategy}): {detail}\nfailing instance: {instance}"
    )]
    VerificationFailed {
        experiment: String,
        n: usize,
        trial: usize,
        strategy: String,
        detail: String,
        /// Serialized RequestSet reproducing the failure.
        instance: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    /// Uniform random requests (Fig. 4a/4b).
    MergingRandom,
    /// Requests reachable from a 1D cluster state (Fig. 4c).
    MergingCluster1D,
    /// Requests reachable from a 2D cluster state (Fig. 4d).
    MergingCluster2D,
    /// Group-biased random requests, one clustering round (Fig. 5a).
    ClusteringGrouped,
    /// Group-biased random requests, iterated clustering (Fig. 5b).
    Combined,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MergingRandom => "merging_random",
            Experiment::MergingCluster1D => "merging_cluster_1d",
            Experiment::MergingCluster2D => "merging_cluster_2d",
            Experiment::ClusteringGrouped => "clustering_grouped",
            Experiment::Combined => "combined",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "merging_random" => Ok(Experiment::MergingRandom),
            "merging_cluster_1d" => Ok(Experiment::MergingCluster1D),
            "merging_cluster_2d" => Ok(Experiment::MergingCluster2D),
            "clustering_grouped" => Ok(Experiment::ClusteringGrouped),
            "combined" => Ok(Experiment::Combined),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

/// Request count as a function of n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MRule {
    NSquared,
    TwoN,
    N,
}

impl MRule {
    pub fn m(self, n: usize) -> usize {
        match self {
            MRule::NSquared => n * n,
            MRule::TwoN => 2 * n,
            MRule::N => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MRule::NSquared => "n^2",
            MRule::TwoN => "2n",
            MRule::N => "n",
        }
    }
}

impl FromStr for MRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "n^2" | "n2" | "nsq" => Ok(MRule::NSquared),
            "2n" => Ok(MRule::TwoN),
            "n" => Ok(MRule::N),
            other => Err(format!("unknown m rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_range: Vec<usize>,
    pub m_rule: MRule,
    pub group_size: usize,
    pub bias: f64,
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
    /// Restrict cluster-state request families to nearest-neighbor links.
    pub nearest_neighbor: bool,
}

impl ExperimentConfig {
    /// Named presets encoding the figure captions' parameters; n ranges and
    /// trial counts not stated in the captions are fixed here explicitly.
    pub fn preset(name: &str) -> Option<Self> {
        let base = |experiment, n_range: Vec<usize>, m_rule, rounds, trials| ExperimentConfig {
            experiment,
            n_range,
            m_rule,
            group_size: 4,
            bias: 10.0,
            rounds,
            trials,
            seed: 1,
            nearest_neighbor: false,
        };
        let steps4 = |hi: usize| (8..=hi).step_by(4).collect::<Vec<_>>();
        Some(match name {
            "fig4a" => base(Experiment::MergingRandom, steps4(24), MRule::NSquared, 1, 10),
            "fig4b" => base(Experiment::MergingRandom, steps4(48), MRule::TwoN, 1, 50),
            "fig4c" => base(Experiment::MergingCluster1D, steps4(48), MRule::TwoN, 1, 50),
            "fig4d" => base(
                Experiment::MergingCluster2D,
                vec![9, 16, 25, 36],
                MRule::TwoN,
                1,
                20,
            ),
            "fig5a" => base(Experiment::ClusteringGrouped, steps4(48), MRule::N, 1, 50),
            "fig5" | "fig5b" => base(Experiment::Combined, steps4(48), MRule::TwoN, 2, 50),
            _ => return None,
        })
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials < 1 {
            return Err(ExperimentError::BadConfig("trials must be >= 1".into()));
        }
        if self.n_range.is_empty() || self.n_range.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::BadConfig(
                "n_range must be non-empty and ascending".into(),
            ));
        }
        if self.experiment == Experiment::MergingCluster2D {
            for &n in &self.n_range {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(ExperimentError::BadConfig(format!(
                        "2D cluster experiments need square n, got {n}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rayon pool capped by the QNET_THREADS environment variable when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = std::env::var("QNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
    {
        builder = builder.num_threads(t);
    }
    builder.build().expect("thread pool builds")
}

/// Qubits of the full-pairwise-connectivity GHZ construction for any n:
/// progressive GHZ states of sizes n, n-1, ..., over ceil(n/2) levels.
fn full_connectivity_qubits(n: usize) -> u64 {
    (0..n.div_ceil(2)).map(|i| (n - i) as u64).sum()
}

/// Deduplicated Bell-union baseline: one Bell pair per distinct link.
fn bell_union_storage(rs: &RequestSet) -> u64 {
    let links: BTreeSet<(u32, u32)> = rs
        .requests()
        .iter()
        .flat_map(|r| r.links().iter().map(|&(a, b)| (a.min(b), a.max(b))))
        .collect();
    2 * links.len() as u64
}

/// Clustering-only storage: full-connectivity construction inside every
/// cluster of every hierarchy layer, direct Bell pairs for the top router
/// layer's links.
fn clustering_storage(rs: &RequestSet, rounds: usize) -> Result<u64, ExperimentError> {
    let h = build_hierarchy(rs, rounds, SpectralOrder::Smallest)
        .map_err(|e| ExperimentError::Spectral(e.to_string()))?;
    if h.layers.is_empty() {
        // Degenerate single cluster: full connectivity over the whole layer.
        return Ok(full_connectivity_qubits(rs.n()));
    }
    let mut total = 0u64;
    for layer in &h.layers {
        for c in 0..layer.num_clusters {
            if layer.intra[c].is_empty() {
                continue;
            }
            let size = layer.partition.iter().filter(|&&l| l as usize == c).count();
            total += full_connectivity_qubits(size);
        }
    }
    total += bell_union_storage(&h.layers.last().unwrap().induced);
    Ok(total)
}

fn generate_instance(cfg: &ExperimentConfig, n: usize, rng: &mut ChaCha8Rng) -> RequestSet {
    let m = cfg.m_rule.m(n);
    match cfg.experiment {
        Experiment::MergingRandom => gen_uniform(n, m, rng),
        Experiment::MergingCluster1D => {
            cluster_requests_from_1d(n, cfg.nearest_neighbor, Some(m), rng)
        }
        Experiment::MergingCluster2D => {
            cluster_requests_from_2d(n, cfg.nearest_neighbor, Some(m), rng)
        }
        Experiment::ClusteringGrouped | Experiment::Combined => {
            gen_grouped(n, m, cfg.group_size, cfg.bias, rng)
        }
    }
}

/// Checks that every request's recipe reproduces its links exactly.
fn verify_resource(res: &ResourceState, rs: &RequestSet) -> Result<(), String> {
    for (j, r) in rs.requests().iter().enumerate() {
        let verdict = verify_recipe(res, j, r).map_err(|e| format!("request {j}: {e}"))?;
        if verdict.status != VerdictStatus::RecipeVerified {
            return Err(format!("request {j}: recipe not verified"));
        }
    }
    Ok(())
}

pub const STRATEGIES: [&str; 4] = ["bell_union", "merging", "clustering", "combined"];

/// One trial: storage of each strategy, instances verified before counting.
fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<[u64; 4], ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
    let rs = generate_instance(cfg, n, &mut rng);
    let fail = |strategy: &str, detail: String| ExperimentError::VerificationFailed {
        experiment: cfg.experiment.name().into(),
        n,
        trial,
        strategy: strategy.into(),
        detail,
        instance: rs.to_json(),
    };

    let bell_union = bell_union_storage(&rs);

    let merged = merge_requests(&rs);
    verify_resource(&merged, &rs).map_err(|e| fail("merging", e))?;
    let merging = merged.storage as u64;

    let clustering = clustering_storage(&rs, cfg.rounds)?;

    let combined_res = cluster_then_merge(&rs, cfg.rounds, SpectralOrder::Smallest)
        .map_err(|e| ExperimentError::Spectral(e.to_string()))?;
    verify_resource(&combined_res, &rs).map_err(|e| fail("combined", e))?;
    // clustering is optional: the combined protocol keeps the plain merging
    // output whenever partitioning did not pay off on this instance
    let combined = (combined_res.storage as u64).min(merging);

    Ok([bell_union, merging, clustering, combined])
}

/// Runs the experiment and renders the CSV report: a config header line,
/// then one row per (n, strategy) with mean/std over trials. Deterministic
/// for a fixed config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
    cfg.validate()?;
    let pool = thread_pool();
    let mut out = format!(
        "# config {}\nn,strategy,mean_total,mean_per_node,std\n",
        serde_json::to_string(cfg).expect("config serializes")
    );
    for &n in &cfg.n_range {
        let totals: Vec<[u64; 4]> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(cfg, n, t))
                .collect::<Result<_, _>>()
        })?;
        for (s, name) in STRATEGIES.iter().enumerate() {
            let xs: Vec<f64> = totals.iter().map(|row| row[s] as f64).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push_str(&format!(
                "{n},{name},{mean:.4},{:.4},{std:.4}\n",
                mean / n as f64
            ));
        }
    }
    Ok(out)
}

/// Convenience: a gnuplot script plotting mean_per_node per strategy from a
/// CSV produced by `run_experiment`.
pub fn gnuplot_script(csv_path: &str) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key left top\nset xlabel 'n'\nset ylabel 'qubits per node'\nplot \\\n",
    );
    for (i, name) in STRATEGIES.iter().enumerate() {
        let cont = if i + 1 < STRATEGIES.len() { ", \\" } else { "" };
        s.push_str(&format!(
            "  '<grep \",{name},\" {csv_path}' using 1:4 with linespoints title '{name}'{cont}\n"
        ));
    }
    s
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(experiment: Experiment, n: usize, m_rule: MRule, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            n_range: vec![n],
            m_rule,
            group_size: 4,
            bias: 10.0,
            rounds: 1,
            trials,
            seed: 7,
            nearest_neighbor: false,
        }
    }

    fn rows(csv: &str) -> Vec<(usize, String, f64)> {
        csv.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("n,"))
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                (cols[0].parse().unwrap(), cols[1].into(), cols[2].parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn deterministic_csv() {
        let cfg = small_cfg(Experiment::MergingRandom, 6, MRule::TwoN, 3);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# config "));
    }

    #[test]
    fn nearest_neighbor_1d_recovers_cluster() {
        let mut cfg = small_cfg(Experiment::MergingCluster1D, 8, MRule::TwoN, 2);
        cfg.nearest_neighbor = true;
        let csv = run_experiment(&cfg).unwrap();
        let merging: Vec<_> = rows(&csv)
            .into_iter()
            .filter(|(_, s, _)| s == "merging")
            .collect();
        assert_eq!(merging.len(), 1);
        // The merging output is exactly the 1D cluster: n qubits.
        assert!((merging[0].2 - 8.0).abs() < 1e-9, "{}", merging[0].2);
    }

    #[test]
    fn grouped_strategy_dominance() {
        let cfg = small_cfg(Experiment::ClusteringGrouped, 8, MRule::TwoN, 5);
        let csv = run_experiment(&cfg).unwrap();
        let mean = |name: &str| {
            rows(&csv)
                .into_iter()
                .find(|(_, s, _)| s == name)
                .unwrap()
                .2
        };
        assert!(mean("combined") <= mean("merging") + 1e-9);
        assert!(mean("merging") <= mean("bell_union") + 1e-9);
    }

    #[test]
    fn presets_encode_captions() {
        let f4b = ExperimentConfig::preset("fig4b").unwrap();
        assert_eq!(f4b.experiment, Experiment::MergingRandom);
        assert_eq!(f4b.m_rule, MRule::TwoN);
        assert_eq!(f4b.n_range, (8..=48).step_by(4).collect::<Vec<_>>());
        assert_eq!(f4b.trials, 50);
        let f5 = ExperimentConfig::preset("fig5").unwrap();
        assert_eq!(f5.rounds, 2);
        assert_eq!(f5.group_size, 4);
        assert!(ExperimentConfig::preset("fig9z").is_none());
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = small_cfg(Experiment::MergingRandom, 6, MRule::N, 0);
        assert!(run_experiment(&cfg).is_err());
        cfg.trials = 1;
        cfg.n_range = vec![8, 8];
        assert!(run_experiment(&cfg).is_err());
        let cfg2 = small_cfg(Experiment::MergingCluster2D, 8, MRule::N, 1);
        assert!(run_experiment(&cfg2).is_err());
    }

    #[test]
    fn full_connectivity_formula() {
        assert_eq!(full_connectivity_qubits(4), 7); // 4 + 3
        assert_eq!(full_connectivity_qubits(6), 15); // 6 + 5 + 4
        assert_eq!(full_connectivity_qubits(2), 2);
    }
}
