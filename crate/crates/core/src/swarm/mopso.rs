use super::{initial_swarm, PsoParams, Result, SwarmError};
use crate::data::Bounds;
use crate::rng::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

impl FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "min" | "minimize" => Ok(Sense::Minimize),
            "max" | "maximize" => Ok(Sense::Maximize),
            other => Err(format!("unknown objective sense `{other}` (expected min or max)")),
        }
    }
}

/// True iff `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], senses: &[Sense]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(SwarmError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() != senses.len() {
        return Err(SwarmError::LengthMismatch(a.len(), senses.len()));
    }
    Ok(dominates_min(
        &a.iter().zip(senses).map(|(v, s)| v * s.sign()).collect::<Vec<_>>(),
        &b.iter().zip(senses).map(|(v, s)| v * s.sign()).collect::<Vec<_>>(),
    ))
}

fn dominates_min(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MopsoParams {
    pub pso: PsoParams,
    pub archive_capacity: usize,
    pub senses: Vec<Sense>,
}

impl MopsoParams {
    pub fn new(bounds: Vec<Bounds>, senses: Vec<Sense>) -> Self {
        Self {
            pso: PsoParams::new(bounds),
            archive_capacity: 100,
            senses,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pso.validate()?;
        if self.archive_capacity < 1 {
            return Err(SwarmError::InvalidParams("archive capacity must be >= 1".into()));
        }
        if self.senses.len() < 2 {
            return Err(SwarmError::InvalidParams(format!(
                "need at least 2 objectives, got {}",
                self.senses.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSolution {
    pub decision: Vec<f64>,
    /// Objective values as returned by the objective function.
    pub objectives: Vec<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MopsoResult {
    pub solutions: Vec<ParetoSolution>,
    /// Archive size after initialization and after each iteration.
    pub archive_sizes: Vec<usize>,
}

/// Per-column ranges over a set of solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSummary {
    pub decision_ranges: Vec<Bounds>,
    pub objective_ranges: Vec<Bounds>,
}

impl ParetoSummary {
    pub fn of(solutions: &[ParetoSolution]) -> Option<Self> {
        let first = solutions.first()?;
        let ranges = |pick: &dyn Fn(&ParetoSolution) -> &[f64], width: usize| {
            (0..width)
                .map(|j| {
                    let (lo, hi) = solutions
                        .iter()
                        .map(|s| pick(s)[j])
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                    Bounds::new(lo, hi)
                })
                .collect()
        };
        Some(Self {
            decision_ranges: ranges(&|s| &s.decision, first.decision.len()),
            objective_ranges: ranges(&|s| &s.objectives, first.objectives.len()),
        })
    }
}

/// Decision columns, then objective columns, then `feasible`.
pub fn pareto_csv(solutions: &[ParetoSolution], decision_names: &[String], objective_names: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = decision_names
        .iter()
        .chain(objective_names)
        .map(String::as_str)
        .chain(["feasible"])
        .collect();
    w.write_record(&header).expect("in-memory write");
    for s in solutions {
        let mut rec: Vec<String> = s.decision.iter().chain(&s.objectives).map(f64::to_string).collect();
        rec.push(s.feasible.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// NSGA-II crowding distance; boundary points get infinity.
pub fn crowding_distances(objectives: &[Vec<f64>]) -> Vec<f64> {
    let n = objectives.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    #[allow(clippy::needless_range_loop)]
    for m in 0..objectives[0].len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objectives[a][m].total_cmp(&objectives[b][m]).then(a.cmp(&b)));
        let lo = objectives[order[0]][m];
        let hi = objectives[order[n - 1]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                let gap = objectives[order[k + 1]][m] - objectives[order[k - 1]][m];
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Non-dominated archive in minimization space.
struct Archive {
    capacity: usize,
    decisions: Vec<Vec<f64>>,
    objectives: Vec<Vec<f64>>,
}

impl Archive {
    fn insert(&mut self, x: &[f64], f: &[f64]) {
        if self.objectives.iter().any(|a| a == f || dominates_min(a, f)) {
            return;
        }
        let mut k = 0;
        while k < self.objectives.len() {
            if dominates_min(f, &self.objectives[k]) {
                self.objectives.remove(k);
                self.decisions.remove(k);
            } else {
                k += 1;
            }
        }
        self.decisions.push(x.to_vec());
        self.objectives.push(f.to_vec());
        if self.objectives.len() > self.capacity {
            let d = crowding_distances(&self.objectives);
            let mut worst = 0;
            for i in 1..d.len() {
                if d[i] < d[worst] {
                    worst = i;
                }
            }
            self.objectives.remove(worst);
            self.decisions.remove(worst);
        }
    }

    /// Binary tournament on crowding distance; the larger distance wins.
    fn leader(&self, rng: &mut SeededRng, crowding: &[f64]) -> usize {
        let a = rng.index(self.decisions.len());
        let b = rng.index(self.decisions.len());
        if crowding[b] > crowding[a] {
            b
        } else {
            a
        }
    }
}

fn evaluate<F>(f: &F, xs: &[Vec<f64>], senses: &[Sense]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let raw: Vec<Vec<f64>> = xs.par_iter().map(|x| f(x)).collect();
    raw.into_iter()
        .zip(xs)
        .map(|(v, x)| {
            if v.len() != senses.len() {
                return Err(SwarmError::LengthMismatch(v.len(), senses.len()));
            }
            if v.iter().any(|o| !o.is_finite()) {
                return Err(SwarmError::NonFinite { position: x.clone() });
            }
            Ok(v.iter().zip(senses).map(|(o, s)| o * s.sign()).collect())
        })
        .collect()
}

/// Multi-objective PSO with a crowding-truncated external archive.
///
/// Maximized objectives are negated internally.
pub fn mopso<F>(f: F, params: &MopsoParams) -> Result<MopsoResult>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    params.validate()?;
    let p = &params.pso;
    let mut rng = SeededRng::new(p.seed);
    let mut x = initial_swarm(&mut rng, p, None)?;
    let mut v = vec![vec![0.0; p.dims()]; p.swarm_size];
    let fx = evaluate(&f, &x, &params.senses)?;
    let mut pbest = x.clone();
    let mut pbest_f = fx.clone();
    let mut archive = Archive {
        capacity: params.archive_capacity,
        decisions: Vec::new(),
        objectives: Vec::new(),
    };
    for (xi, fi) in x.iter().zip(&fx) {
        archive.insert(xi, fi);
    }
    let mut archive_sizes = vec![archive.decisions.len()];
    for it in 1..=p.iterations {
        let w = p.inertia(it);
        let crowding = crowding_distances(&archive.objectives);
        for i in 0..p.swarm_size {
            let leader = archive.decisions[archive.leader(&mut rng, &crowding)].clone();
            super::step(&mut rng, p, w, &mut x[i], &mut v[i], &pbest[i], &leader);
        }
        let fx = evaluate(&f, &x, &params.senses)?;
        for i in 0..p.swarm_size {
            let replace = if dominates_min(&fx[i], &pbest_f[i]) {
                true
            } else if dominates_min(&pbest_f[i], &fx[i]) {
                false
            } else {
                rng.uniform() < 0.5
            };
            if replace {
                pbest[i].clone_from(&x[i]);
                pbest_f[i].clone_from(&fx[i]);
            }
            archive.insert(&x[i], &fx[i]);
        }
        archive_sizes.push(archive.decisions.len());
    }
    let solutions = archive
        .decisions
        .into_iter()
        .zip(archive.objectives)
        .map(|(d, o)| ParetoSolution {
            feasible: d.iter().zip(&p.bounds).all(|(v, b)| b.contains(*v)),
            decision: d,
            objectives: o.iter().zip(&params.senses).map(|(v, s)| v * s.sign()).collect(),
        })
        .collect();
    Ok(MopsoResult {
        solutions,
        archive_sizes,
    })
}
