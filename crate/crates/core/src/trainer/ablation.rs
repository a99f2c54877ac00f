use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{Model, TrainConfig};
use super::experiment::{loss_trend, run_experiment, Report};
use crate::error::{Error, Result};
use crate::heatmap::SupervisionLadder;
use crate::metrics::reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Table1,
    Table2,
    Table3,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Suite::Table1),
            "table2" => Ok(Suite::Table2),
            "table3" => Ok(Suite::Table3),
            _ => Err(Error::Config(format!(
                "unknown suite {s:?}; expected table1, table2 or table3"
            ))),
        }
    }
}

/// One expected ordering: `better` should reach a lower test MPJPE than `worse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub better: String,
    pub worse: String,
    /// Published errors (mm) of the two configurations, for reference only.
    pub published_mm: [f64; 2],
    /// Whether a tie counts as preserving the ordering.
    pub ties_pass: bool,
    pub better_mpjpe_mm: Vec<f64>,
    pub worse_mpjpe_mm: Vec<f64>,
    /// Per-seed ratio of end-of-run to early smoothed training loss.
    pub better_loss_trend: Vec<Option<f64>>,
    pub worse_loss_trend: Vec<Option<f64>>,
    pub seeds_preserving: usize,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub comparisons: Vec<Comparison>,
    pub verdict: String,
}

impl AblationReport {
    pub fn passed(&self) -> bool {
        self.verdict == "PASS"
    }
}

struct Pair {
    name: &'static str,
    better: TrainConfig,
    worse: TrainConfig,
    published_mm: [f64; 2],
    ties_pass: bool,
}

fn stacked(base: &TrainConfig, ladder: &[usize], fuse: bool) -> Result<TrainConfig> {
    let mut c = base.clone();
    c.model = Model::Volumetric;
    c.ladder = SupervisionLadder::new(ladder.to_vec())?;
    c.fuse_features = fuse;
    c.grid.d = c.ladder.final_depth();
    Ok(c)
}

fn pairs(suite: Suite, base: &TrainConfig) -> Result<Vec<Pair>> {
    let d = base.grid.d;
    Ok(match suite {
        Suite::Table1 => {
            let mut coord = base.clone();
            coord.model = Model::Coordinate;
            vec![Pair {
                name: "volume vs coordinate regression",
                better: stacked(base, &[d], true)?,
                worse: coord,
                published_mm: [reference::TABLE1_VOLUME_D64, reference::TABLE1_COORDINATE],
                ties_pass: false,
            }]
        }
        Suite::Table2 => vec![
            Pair {
                name: "coarse-to-fine vs naive, two stages",
                better: stacked(base, &[1, d], true)?,
                worse: stacked(base, &[d, d], true)?,
                published_mm: [reference::TABLE2_C2F_1_64, reference::TABLE2_NAIVE_64_64],
                ties_pass: false,
            },
            Pair {
                name: "coarse-to-fine vs naive, three stages",
                better: stacked(base, &[1, 2, d], true)?,
                worse: stacked(base, &[d, d, d], true)?,
                published_mm: [
                    reference::TABLE2_C2F_1_2_64,
                    reference::TABLE2_NAIVE_64_64_64,
                ],
                ties_pass: false,
            },
        ],
        Suite::Table3 => vec![Pair {
            name: "fused vs decoupled",
            better: stacked(base, &[1, d], true)?,
            worse: stacked(base, &[1, d], false)?,
            published_mm: [
                reference::TABLE3_COARSE_TO_FINE,
                reference::TABLE3_DECOUPLED,
            ],
            ties_pass: true,
        }],
    })
}

/// Runs `jobs` on up to `threads` workers; results come back in job order.
fn run_all(jobs: Vec<TrainConfig>, threads: usize) -> Result<Vec<Report>> {
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(run_experiment).collect();
    }
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<Result<Report>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(job) = jobs.get(i) else { break };
                *slots[i].lock().expect("result slot") = Some(run_experiment(job));
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

/// Trains every configuration of `suite` once per seed and checks each ordering
/// by majority over seeds. Runs shared between comparisons are trained once.
pub fn run_ablation(
    suite: Suite,
    seeds: &[u64],
    base: &TrainConfig,
    threads: usize,
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let pairs = pairs(suite, base)?;
    let mut jobs: Vec<TrainConfig> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut key_of = |cfg: &TrainConfig, seed: u64, jobs: &mut Vec<TrainConfig>| -> Result<usize> {
        let mut c = cfg.clone();
        c.seed = seed;
        let key = serde_json::to_string(&c)?;
        Ok(*index.entry(key).or_insert_with(|| {
            jobs.push(c);
            jobs.len() - 1
        }))
    };
    let mut plan = Vec::new();
    for p in &pairs {
        let mut ids = Vec::new();
        for &s in seeds {
            ids.push((
                key_of(&p.better, s, &mut jobs)?,
                key_of(&p.worse, s, &mut jobs)?,
            ));
        }
        plan.push(ids);
    }
    let reports = run_all(jobs, threads)?;

    let mut comparisons = Vec::new();
    for (p, ids) in pairs.iter().zip(plan) {
        let better: Vec<f64> = ids.iter().map(|&(b, _)| reports[b].test_mpjpe_mm).collect();
        let worse: Vec<f64> = ids.iter().map(|&(_, w)| reports[w].test_mpjpe_mm).collect();
        let preserving = better
            .iter()
            .zip(&worse)
            .filter(|(b, w)| if p.ties_pass { b <= w } else { b < w })
            .count();
        let pass = 2 * preserving > seeds.len();
        comparisons.push(Comparison {
            name: p.name.to_string(),
            better: p.better.label(),
            worse: p.worse.label(),
            published_mm: p.published_mm,
            ties_pass: p.ties_pass,
            better_mpjpe_mm: better,
            worse_mpjpe_mm: worse,
            better_loss_trend: ids
                .iter()
                .map(|&(b, _)| loss_trend(&reports[b].loss_curve))
                .collect(),
            worse_loss_trend: ids
                .iter()
                .map(|&(_, w)| loss_trend(&reports[w].loss_curve))
                .collect(),
            seeds_preserving: preserving,
            verdict: if pass { "PASS" } else { "FAIL" }.into(),
        });
    }
    let all = comparisons.iter().all(|c| c.verdict == "PASS");
    Ok(AblationReport {
        suite,
        seeds: seeds.to_vec(),
        steps: base.steps,
        comparisons,
        verdict: if all { "PASS" } else { "FAIL" }.into(),
    })
}
