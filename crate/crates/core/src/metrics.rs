//! Evaluation: goal-reaching success, state coverage and the
//! uncertainty-density correlation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, SacAgent};
use crate::density::{Histogram, StateBox};
use crate::envs::{MazeSpec, Point, RewardConfig};
use crate::error::{Error, Result};

/// Anything that maps a state and goal to an action.
pub trait GoalPolicy {
    fn action<R: Rng + ?Sized>(&self, s: Point, g: Point, rng: &mut R) -> Point;
}

impl GoalPolicy for SacAgent {
    fn action<R: Rng + ?Sized>(&self, s: Point, g: Point, rng: &mut R) -> Point {
        self.act(s, g, ActMode::Exploit, false, rng)
    }
}

/// Uniform actions in `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl GoalPolicy for RandomPolicy {
    fn action<R: Rng + ?Sized>(&self, _s: Point, _g: Point, rng: &mut R) -> Point {
        [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
    }
}

/// Uniform draws from the maze's goal region: a uniform cell, then a
/// uniform point inside it.
pub fn target_goals<R: Rng + ?Sized>(maze: &MazeSpec, n: usize, rng: &mut R) -> Vec<Point> {
    (0..n).map(|_| sample_target_goal(maze, rng)).collect()
}

pub fn sample_target_goal<R: Rng + ?Sized>(maze: &MazeSpec, rng: &mut R) -> Point {
    let cells = maze.goal_region();
    let (r, c) = cells[rng.random_range(0..cells.len())];
    let cs = maze.cell_size();
    [
        (c as f64 + rng.random::<f64>()) * cs,
        (r as f64 + rng.random::<f64>()) * cs,
    ]
}

/// Whether one episode toward `g` comes within the success radius at any
/// step, including the initial state.
pub fn episode_success<P: GoalPolicy, R: Rng + ?Sized>(
    policy: &P,
    maze: &MazeSpec,
    reward: &RewardConfig,
    g: Point,
    horizon: usize,
    seed: u64,
    rng: &mut R,
) -> bool {
    let mut s = maze.reset(seed);
    if reward.reached(s.position, g) {
        return true;
    }
    for _ in 0..horizon {
        s = maze.step(s, policy.action(s.position, g, rng));
        if reward.reached(s.position, g) {
            return true;
        }
    }
    false
}

/// Fraction of evaluation episodes that reach their goal. Deterministic in `seed`.
pub fn success_rate<P: GoalPolicy>(
    policy: &P,
    maze: &MazeSpec,
    reward: &RewardConfig,
    goals: &[Point],
    episodes_per_goal: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if goals.is_empty() || episodes_per_goal == 0 {
        return Err(Error::InvalidArgument("need at least one goal and one episode per goal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for g in goals {
        for _ in 0..episodes_per_goal {
            if episode_success(policy, maze, reward, *g, horizon, seed, &mut rng) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (goals.len() * episodes_per_goal) as f64)
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Accumulated visitation histogram with bins aligned to maze cells.
/// Counts are never evicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitCounter {
    histogram: Histogram,
    free_bins: usize,
}

impl VisitCounter {
    pub fn new(maze: &MazeSpec, bins_per_cell: usize) -> Result<Self> {
        if bins_per_cell == 0 {
            return Err(Error::InvalidArgument("bins_per_cell must be positive".into()));
        }
        let (lo, hi) = maze.bounds();
        let histogram = Histogram::new(
            StateBox::new(lo, hi)?,
            [maze.cols() * bins_per_cell, maze.rows() * bins_per_cell],
        )?;
        let free_bins = (0..histogram.bin_count())
            .filter(|i| maze.is_free(histogram.bin_center(*i)))
            .count();
        Ok(Self { histogram, free_bins })
    }

    pub fn add(&mut self, p: Point) {
        self.histogram.add(p);
    }

    pub fn histogram(&self) -> &Histogram {
        &self.histogram
    }

    pub fn total(&self) -> u64 {
        self.histogram.total()
    }

    /// Number of bins lying in free space: the reachable maximum support.
    pub fn free_bins(&self) -> usize {
        self.free_bins
    }

    pub fn entropy(&self) -> f64 {
        self.histogram.entropy()
    }

    /// Entropy over `ln(free bins)`, in `[0, 1]`.
    pub fn normalized(&self) -> f64 {
        normalized_coverage(self.entropy(), self.free_bins)
    }
}

pub fn normalized_coverage(entropy: f64, bins: usize) -> f64 {
    if bins <= 1 {
        return 0.0;
    }
    (entropy / (bins as f64).ln()).clamp(0.0, 1.0)
}

/// Coverage entropy of each snapshot, with snapshots ordered by env steps.
pub fn coverage_curve(snapshots: &[(u64, Vec<Point>)], bounds: StateBox, bins: [usize; 2]) -> Result<Vec<(u64, f64)>> {
    if snapshots.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::InvalidArgument("snapshots must be ordered by env steps".into()));
    }
    snapshots
        .iter()
        .map(|(steps, states)| {
            let mut h = Histogram::new(bounds, bins)?;
            for p in states {
                h.add(*p);
            }
            Ok((*steps, h.entropy()))
        })
        .collect()
}

/// First env-step count at which `value >= threshold`, if any.
pub fn steps_to_threshold(curve: &[(u64, f64)], threshold: f64) -> Option<u64> {
    curve.iter().find(|(_, v)| *v >= threshold).map(|(s, _)| *s)
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub epoch: usize,
    pub env_steps: u64,
    pub success_rate: f64,
    pub coverage_entropy: f64,
    pub normalized_coverage: f64,
    /// Empty when either input has zero variance.
    pub pearson_r: Option<f64>,
}

/// Per-epoch coverage row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub coverage_entropy: f64,
    pub normalized_coverage: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{coverage_entropy, DensityModel};
    use proptest::prelude::*;
    use rand::Rng;

    fn open_room() -> MazeSpec {
        MazeSpec::builtin("point_maze_a").unwrap()
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        let l = [-0.3, -1.2, -4.0, -2.2];
        let neg: Vec<f64> = l.iter().map(|v| -v).collect();
        assert!((pearson(&neg, &l).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&l, &l).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[0.0, 1.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            xs in prop::collection::vec(-10.0f64..10.0, 3..30),
            seed in 0u64..1000,
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + rng.random_range(-3.0..3.0)).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xs2: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let r2 = pearson(&xs2, &ys).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn goal_at_start_always_succeeds() {
        let m = open_room();
        let s0 = m.reset(0).position;
        let r = success_rate(&RandomPolicy, &m, &RewardConfig::default(), &[s0; 5], 2, 50, 3).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn unreachable_goal_never_succeeds() {
        let m = MazeSpec::from_grid(&["S.#.", "..#."], 1.0, 0.25).unwrap();
        let r = success_rate(&RandomPolicy, &m, &RewardConfig::default(), &[[3.5, 0.5]], 50, 50, 4).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn random_policy_is_strictly_between() {
        let m = open_room();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let goals = target_goals(&m, 100, &mut rng);
        let r = success_rate(&RandomPolicy, &m, &RewardConfig::default(), &goals, 1, 50, 6).unwrap();
        assert!(r > 0.0 && r < 1.0, "{r}");
    }

    #[test]
    fn success_rate_concentrates_across_seeds() {
        let m = open_room();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let goals = target_goals(&m, 200, &mut rng);
        let cfg = RewardConfig::default();
        let a = success_rate(&RandomPolicy, &m, &cfg, &goals, 1, 50, 8).unwrap();
        let b = success_rate(&RandomPolicy, &m, &cfg, &goals, 1, 50, 9).unwrap();
        let p = 0.5 * (a + b);
        let se = (p * (1.0 - p) / 200.0).sqrt();
        assert!((a - b).abs() < 3.0 * se * 2f64.sqrt(), "{a} {b}");
        assert_eq!(a, success_rate(&RandomPolicy, &m, &cfg, &goals, 1, 50, 8).unwrap());
    }

    #[test]
    fn target_goals_lie_in_goal_region() {
        let m = MazeSpec::builtin("square_large").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for g in target_goals(&m, 2000, &mut rng) {
            assert!(m.is_free(g));
        }
    }

    #[test]
    fn counter_entropy_matches_density_module() {
        let m = MazeSpec::builtin("square_large").unwrap();
        let mut c = VisitCounter::new(&m, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in target_goals(&m, 5000, &mut rng) {
            c.add(g);
        }
        let model = DensityModel::Histogram(c.histogram().clone());
        assert_eq!(c.entropy().to_bits(), coverage_entropy(&model).unwrap().to_bits());
        assert_eq!(c.free_bins(), 104 * 4);
        assert!(c.normalized() > 0.95 && c.normalized() <= 1.0);
    }

    #[test]
    fn coverage_curve_examples() {
        let bounds = StateBox::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let single = vec![(10, vec![[0.5, 0.5]; 5]), (20, vec![[0.5, 0.5]; 9])];
        let c = coverage_curve(&single, bounds, [4, 4]).unwrap();
        assert!(c.iter().all(|(_, h)| *h == 0.0));
        let all: Vec<Point> = (0..16)
            .map(|i| [((i % 4) as f64 + 0.5) / 4.0, ((i / 4) as f64 + 0.5) / 4.0])
            .collect();
        let c = coverage_curve(&[(5, all.clone())], bounds, [4, 4]).unwrap();
        assert!((c[0].1 - 16f64.ln()).abs() < 1e-12);
        assert!(coverage_curve(&[(5, all.clone()), (4, all)], bounds, [4, 4]).is_err());
        assert_eq!(steps_to_threshold(&[(1, 0.2), (2, 0.6), (3, 0.9)], 0.5), Some(2));
        assert_eq!(steps_to_threshold(&[(1, 0.2)], 0.5), None);
    }
}
