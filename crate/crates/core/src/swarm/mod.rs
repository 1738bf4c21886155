//! Particle swarm optimization, single- and multi-objective.

mod mopso;

pub use mopso::{
    crowding_distances, dominates, mopso, pareto_csv, MopsoParams, MopsoResult, ParetoSolution, ParetoSummary, Sense,
};

use crate::data::Bounds;
use crate::rng::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SwarmError {
    #[error("invalid swarm parameters: {0}")]
    InvalidParams(String),
    #[error("objective returned a non-finite value at {position:?}")]
    NonFinite { position: Vec<f64> },
    #[error("objective vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, SwarmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub iterations: usize,
    /// Inertia at the first update; decays linearly to `inertia_end` at the last.
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub bounds: Vec<Bounds>,
    /// Per-dimension velocity limit as a fraction of the bound span.
    pub velocity_clamp: f64,
    pub seed: u64,
}

impl PsoParams {
    pub fn new(bounds: Vec<Bounds>) -> Self {
        Self {
            swarm_size: 40,
            iterations: 500,
            inertia_start: 0.9,
            inertia_end: 0.4,
            c1: 2.0,
            c2: 2.0,
            bounds,
            velocity_clamp: 0.2,
            seed: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SwarmError::InvalidParams(m));
        if self.swarm_size < 2 {
            return bad(format!("swarm size {} < 2", self.swarm_size));
        }
        for w in [self.inertia_start, self.inertia_end] {
            if !(0.0..=1.0).contains(&w) {
                return bad(format!("inertia {w} outside [0, 1]"));
            }
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return bad("acceleration coefficients must be finite and >= 0".into());
        }
        if !(self.velocity_clamp > 0.0 && self.velocity_clamp.is_finite()) {
            return bad("velocity clamp must be > 0".into());
        }
        if self.bounds.is_empty() {
            return bad("no dimensions".into());
        }
        for (d, b) in self.bounds.iter().enumerate() {
            if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
                return bad(format!("dimension {d}: bounds [{}, {}] not increasing", b.min, b.max));
            }
        }
        Ok(())
    }

    fn inertia(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.inertia_start;
        }
        let t = (iteration - 1) as f64 / (self.iterations - 1) as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * t
    }
}

/// State of the swarm after an iteration; iteration 0 is the initial swarm.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub positions: &'a [Vec<f64>],
    pub values: &'a [f64],
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Global best after initialization and after each iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Two-column `iteration value` text.
pub fn trace_text(trace: &[f64]) -> String {
    let mut out = String::from("iteration\tbest\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{v}");
    }
    out
}

pub(crate) fn random_position(rng: &mut SeededRng, bounds: &[Bounds]) -> Vec<f64> {
    bounds.iter().map(|b| rng.uniform_in(b.min, b.max)).collect()
}

/// One velocity/position update. Random factors come from `rng` in dimension order.
pub(crate) fn step(
    rng: &mut SeededRng,
    params: &PsoParams,
    w: f64,
    x: &mut [f64],
    v: &mut [f64],
    pbest: &[f64],
    leader: &[f64],
) {
    for d in 0..x.len() {
        let (r1, r2) = (rng.uniform(), rng.uniform());
        let b = params.bounds[d];
        let vmax = params.velocity_clamp * b.span();
        let vd = w * v[d] + params.c1 * r1 * (pbest[d] - x[d]) + params.c2 * r2 * (leader[d] - x[d]);
        v[d] = vd.clamp(-vmax, vmax);
        let next = x[d] + v[d];
        if next < b.min || next > b.max {
            x[d] = next.clamp(b.min, b.max);
            v[d] = 0.0;
        } else {
            x[d] = next;
        }
    }
}

pub(crate) fn initial_swarm(
    rng: &mut SeededRng,
    params: &PsoParams,
    initial: Option<&[Vec<f64>]>,
) -> Result<Vec<Vec<f64>>> {
    match initial {
        None => Ok((0..params.swarm_size).map(|_| random_position(rng, &params.bounds)).collect()),
        Some(rows) => {
            if rows.len() != params.swarm_size || rows.iter().any(|r| r.len() != params.dims()) {
                return Err(SwarmError::InvalidParams(format!(
                    "initial swarm must be {} positions of width {}",
                    params.swarm_size,
                    params.dims()
                )));
            }
            Ok(rows
                .iter()
                .map(|r| r.iter().zip(&params.bounds).map(|(v, b)| v.clamp(b.min, b.max)).collect())
                .collect())
        }
    }
}

fn evaluate<F>(f: &F, xs: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = xs.par_iter().map(|x| f(x)).collect();
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SwarmError::NonFinite { position: xs[i].clone() }),
        None => Ok(values),
    }
}

pub fn pso_minimize<F>(f: F, params: &PsoParams) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pso_minimize_with(f, params, None, |_| {})
}

/// Global-best PSO. Evaluations within an iteration run in parallel; all random
/// draws happen beforehand, so results depend only on the seed.
pub fn pso_minimize_with<F, O>(
    f: F,
    params: &PsoParams,
    initial: Option<&[Vec<f64>]>,
    mut observer: O,
) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(&IterationView),
{
    params.validate()?;
    let mut rng = SeededRng::new(params.seed);
    let mut x = initial_swarm(&mut rng, params, initial)?;
    let mut v = vec![vec![0.0; params.dims()]; params.swarm_size];
    let mut values = evaluate(&f, &x)?;
    let mut pbest = x.clone();
    let mut pbest_val = values.clone();
    let mut g = argmin(&pbest_val);
    let mut trace = vec![pbest_val[g]];
    observer(&IterationView {
        iteration: 0,
        positions: &x,
        values: &values,
        best_value: pbest_val[g],
    });
    for it in 1..=params.iterations {
        let w = params.inertia(it);
        let leader = pbest[g].clone();
        for i in 0..params.swarm_size {
            step(&mut rng, params, w, &mut x[i], &mut v[i], &pbest[i], &leader);
        }
        values = evaluate(&f, &x)?;
        for i in 0..params.swarm_size {
            if values[i] < pbest_val[i] {
                pbest_val[i] = values[i];
                pbest[i].clone_from(&x[i]);
            }
        }
        g = argmin(&pbest_val);
        trace.push(pbest_val[g]);
        observer(&IterationView {
            iteration: it,
            positions: &x,
            values: &values,
            best_value: pbest_val[g],
        });
    }
    Ok(PsoResult {
        best_position: pbest[g].clone(),
        best_value: pbest_val[g],
        trace,
        evaluations: params.swarm_size * (params.iterations + 1),
    })
}

/// Lowest index among the minima.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_converges_for_most_seeds() {
        let mut hits = 0;
        for seed in 0..10 {
            let mut p = PsoParams::new(vec![Bounds::new(-5.0, 5.0); 10]);
            p.seed = seed;
            let r = pso_minimize(sphere, &p).unwrap();
            if r.best_value < 1e-4 {
                hits += 1;
            }
            assert_eq!(r.trace.len(), 501);
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        }
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn one_dimensional_quadratic() {
        let mut p = PsoParams::new(vec![Bounds::new(0.0, 10.0)]);
        p.iterations = 200;
        let r = pso_minimize(|x| (x[0] - 3.0).powi(2), &p).unwrap();
        assert!((r.best_position[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn swarm_at_optimum_stays() {
        let mut p = PsoParams::new(vec![Bounds::new(-1.0, 1.0); 3]);
        p.swarm_size = 5;
        p.iterations = 20;
        let init = vec![vec![0.0; 3]; 5];
        let mut max_seen = 0.0f64;
        let r = pso_minimize_with(sphere, &p, Some(&init), |view| {
            max_seen = view.positions.iter().flatten().fold(max_seen, |m, v| m.max(v.abs()));
        })
        .unwrap();
        assert_eq!(r.best_position, vec![0.0; 3]);
        assert_eq!(r.best_value, 0.0);
        assert_eq!(max_seen, 0.0);
    }

    #[test]
    fn positions_respect_bounds_and_reproduce() {
        let bounds = vec![Bounds::new(1.0, 2.0), Bounds::new(-3.0, -1.0)];
        let mut p = PsoParams::new(bounds.clone());
        p.iterations = 60;
        p.seed = 9;
        // Optimum outside the box pushes particles onto the walls.
        let f = |x: &[f64]| (x[0] + 10.0).powi(2) + (x[1] - 10.0).powi(2);
        let mut seen = Vec::new();
        let a = pso_minimize_with(f, &p, None, |view| {
            for x in view.positions {
                for (v, b) in x.iter().zip(&bounds) {
                    assert!(b.contains(*v));
                }
            }
            seen.push(view.values.to_vec());
        })
        .unwrap();
        assert_eq!(a.best_position, vec![1.0, -1.0]);
        let b = pso_minimize(f, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(seen.len(), 61);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let p = PsoParams::new(vec![Bounds::new(-1.0, 1.0)]);
        let err = pso_minimize(|x| if x[0] > 0.5 { f64::NAN } else { x[0] }, &p).unwrap_err();
        assert!(matches!(err, SwarmError::NonFinite { .. }));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = PsoParams::new(vec![Bounds::new(1.0, 1.0)]);
        assert!(p.validate().is_err());
        p.bounds = vec![Bounds::new(0.0, 1.0)];
        p.swarm_size = 1;
        assert!(p.validate().is_err());
        p.swarm_size = 2;
        p.inertia_start = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn trace_format() {
        assert_eq!(trace_text(&[2.0, 1.5]), "iteration\tbest\n0\t2\n1\t1.5\n");
    }
}
