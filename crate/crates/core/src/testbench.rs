//! Analytic test problems with known convex fronts.
//!
//! The registry (name, dimensions, design box and metric specs) lives in
//! `problems.toml` next to this crate and is compiled in. Objective bodies are
//! the standard ZDT1, Schaffer, DTLZ2-style sphere (metrics negated) and MaF3
//! definitions. Each problem also carries a dense discretization of its true
//! front, indexed by a k-d tree, for distance queries.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::OnceLock;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{MetricSet, MetricVector};

const REGISTRY: &str = include_str!("../problems.toml");

/// Samples along a 1-D front parameter.
pub const CURVE_RESOLUTION: usize = 100_000;
/// Cells per side of the 2-D parameter grid for 3-metric fronts.
pub const SURFACE_RESOLUTION: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Zdt1,
    Sch,
    Sph,
    Maf3,
}

impl ProblemKind {
    fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "ZDT1" => Some(ProblemKind::Zdt1),
            "SCH" => Some(ProblemKind::Sch),
            "SPH" => Some(ProblemKind::Sph),
            "MAF3" => Some(ProblemKind::Maf3),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    problem: Vec<RegistryEntry>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct RegistryEntry {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub omega: Vec<[f64; 2]>,
    pub f_max: Vec<f64>,
    pub front: String,
}

fn registry_entries() -> &'static [RegistryEntry] {
    static ENTRIES: OnceLock<Vec<RegistryEntry>> = OnceLock::new();
    ENTRIES.get_or_init(|| {
        let file: RegistryFile = toml::from_str(REGISTRY).expect("bundled problem registry parses");
        file.problem
    })
}

/// Names of all registered problems, in registry order.
pub fn problem_names() -> Vec<String> {
    registry_entries().iter().map(|e| e.name.clone()).collect()
}

/// Raw text of the bundled registry document.
pub fn registry_document() -> &'static str {
    REGISTRY
}

/// A point in design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignVector(Vec<f64>);

impl DesignVector {
    pub fn new(values: Vec<f64>) -> Self {
        DesignVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    kind: ProblemKind,
    name: String,
    d: usize,
    m: usize,
    omega: Vec<(f64, f64)>,
    f_max: MetricVector,
    front: String,
}

impl PartialEq for Problem {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl Problem {
    /// Looks a problem up by (case-insensitive) name.
    pub fn by_name(name: &str) -> Result<Problem> {
        let unknown = || Error::UnknownProblem { name: name.to_string(), known: problem_names().join(", ") };
        let entry = registry_entries().iter().find(|e| e.name.eq_ignore_ascii_case(name)).ok_or_else(unknown)?;
        let kind = ProblemKind::from_name(&entry.name).ok_or_else(unknown)?;
        if entry.omega.len() != entry.d || entry.f_max.len() != entry.m {
            return Err(Error::Config(format!("registry entry {} is inconsistent", entry.name)));
        }
        Ok(Problem {
            kind,
            name: entry.name.clone(),
            d: entry.d,
            m: entry.m,
            omega: entry.omega.iter().map(|b| (b[0], b[1])).collect(),
            f_max: MetricVector::new(entry.f_max.clone())?,
            front: entry.front.clone(),
        })
    }

    pub fn all() -> Vec<Problem> {
        problem_names().iter().map(|n| Problem::by_name(n).expect("registered")).collect()
    }

    pub fn zdt1() -> Problem {
        Problem::by_name("ZDT1").expect("registered")
    }

    pub fn sch() -> Problem {
        Problem::by_name("SCH").expect("registered")
    }

    pub fn sph() -> Problem {
        Problem::by_name("SPH").expect("registered")
    }

    pub fn maf3() -> Problem {
        Problem::by_name("MAF3").expect("registered")
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn omega(&self) -> &[(f64, f64)] {
        &self.omega
    }

    pub fn f_max(&self) -> &MetricVector {
        &self.f_max
    }

    /// Human-readable implicit equation of the front.
    pub fn front_equation(&self) -> &str {
        &self.front
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && x.iter().zip(&self.omega).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn evaluate(&self, x: &DesignVector) -> Result<MetricVector> {
        if x.len() != self.d {
            return Err(Error::dim(self.d, x.len()));
        }
        if !self.contains(x.as_slice()) {
            return Err(Error::Domain(format!("design {:?} lies outside the box of {}", x.0, self.name)));
        }
        let mut out = vec![0.0; self.m];
        self.eval_into(x.as_slice(), &mut out);
        MetricVector::new(out)
    }

    /// Unchecked evaluation for solver inner loops; `x` must lie in the box.
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ProblemKind::Zdt1 => {
                let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
                out[0] = x[0];
                out[1] = g * (1.0 - (x[0] / g).sqrt());
            }
            ProblemKind::Sch => {
                out[0] = x[0] * x[0];
                out[1] = (x[0] - 2.0) * (x[0] - 2.0);
            }
            ProblemKind::Sph => {
                let r = 1.0 - 4.0 * (x[2] - 0.5) * (x[2] - 0.5);
                let (a, b) = (x[0] * FRAC_PI_2, x[1] * FRAC_PI_2);
                out[0] = -r * a.cos() * b.cos();
                out[1] = -r * a.cos() * b.sin();
                out[2] = -r * a.sin();
            }
            ProblemKind::Maf3 => {
                let g = 100.0
                    * (2.0
                        + x[2..]
                            .iter()
                            .map(|v| (v - 0.5) * (v - 0.5) - (20.0 * std::f64::consts::PI * (v - 0.5)).cos())
                            .sum::<f64>());
                let s = 1.0 + g;
                let (a, b) = (x[0] * FRAC_PI_2, x[1] * FRAC_PI_2);
                out[0] = (s * a.cos() * b.cos()).powi(4);
                out[1] = (s * a.cos() * b.sin()).powi(4);
                out[2] = (s * a.sin()).powi(2);
            }
        }
    }

    /// Maps front parameters in `[0, 1]^(m-1)` onto the true front.
    fn front_point(&self, u: &[f64]) -> Vec<f64> {
        match self.kind {
            ProblemKind::Sch => {
                let x = 2.0 * u[0];
                vec![x * x, (x - 2.0) * (x - 2.0)]
            }
            ProblemKind::Zdt1 => vec![u[0] * u[0], 1.0 - u[0]],
            ProblemKind::Sph => {
                let (t, p) = (u[0] * FRAC_PI_2, u[1] * FRAC_PI_2);
                vec![-t.cos() * p.cos(), -t.cos() * p.sin(), -t.sin()]
            }
            ProblemKind::Maf3 => {
                // sqrt(f1), sqrt(f2) in [0, 0.5] keeps the point inside the front bounds.
                let (a, b) = (0.5 * u[0], 0.5 * u[1]);
                vec![a * a, b * b, 1.0 - a - b]
            }
        }
    }

    /// Residual of the implicit front equation at `f`.
    pub fn front_residual(&self, f: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Zdt1 => f[0].sqrt() + f[1] - 1.0,
            ProblemKind::Sch => (f[0].sqrt() - 2.0).powi(2) - f[1],
            ProblemKind::Sph => f.iter().map(|v| v * v).sum::<f64>() - 1.0,
            ProblemKind::Maf3 => f[0].sqrt() + f[1].sqrt() + f[2] - 1.0,
        }
    }

    /// Random points on the true front within the front bounds.
    pub fn true_pf_sample(&self, n: usize, seed: u64) -> Result<MetricSet> {
        if n == 0 {
            return Err(Error::Precondition("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = MetricSet::new();
        while out.len() < n {
            let f = match self.kind {
                ProblemKind::Sph => {
                    // Uniform direction in the negative octant.
                    let g: [f64; 3] = std::array::from_fn(|_| gaussian(&mut rng).abs());
                    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    g.iter().map(|v| -v / norm).collect()
                }
                _ => {
                    let u: Vec<f64> = (0..self.m - 1).map(|_| rng.gen::<f64>()).collect();
                    self.front_point(&u)
                }
            };
            out.insert(MetricVector::new(f)?)?;
        }
        Ok(out)
    }

    /// Dense discretization of the true front used by [`Problem::distance_to_true_pf`].
    pub fn front_grid(&self) -> &'static FrontGrid {
        static GRIDS: [OnceLock<FrontGrid>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        GRIDS[self.kind.index()].get_or_init(|| FrontGrid::build(self))
    }

    /// Minimum Euclidean distance from `f` to the discretized true front.
    pub fn distance_to_true_pf(&self, f: &MetricVector) -> Result<f64> {
        if f.len() != self.m {
            return Err(Error::dim(self.m, f.len()));
        }
        Ok(self.front_grid().nearest_distance(f.as_slice()))
    }
}

/// Closed-form distance from `f` to the unit sphere, valid for points in the
/// closed negative octant where the radial projection stays on the front.
pub fn sphere_radial_distance(f: &[f64]) -> f64 {
    (f.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs()
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one variate is enough here.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

enum Tree {
    Two(ImmutableKdTree<f64, 2>),
    Three(ImmutableKdTree<f64, 3>),
}

/// Dense front discretization with a nearest-neighbour index.
pub struct FrontGrid {
    points: Vec<Vec<f64>>,
    spacing: f64,
    tree: Tree,
}

impl FrontGrid {
    fn build(p: &Problem) -> FrontGrid {
        let (points, spacing) = if p.m == 2 {
            let n = CURVE_RESOLUTION;
            let pts: Vec<Vec<f64>> = (0..=n).map(|i| p.front_point(&[i as f64 / n as f64])).collect();
            let spacing = pts.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max);
            (pts, spacing)
        } else {
            let n = SURFACE_RESOLUTION;
            let mut pts = Vec::with_capacity((n + 1) * (n + 1));
            for i in 0..=n {
                for j in 0..=n {
                    pts.push(p.front_point(&[i as f64 / n as f64, j as f64 / n as f64]));
                }
            }
            let at = |i: usize, j: usize| &pts[i * (n + 1) + j];
            let mut spacing: f64 = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    if i < n {
                        spacing = spacing.max(dist(at(i, j), at(i + 1, j)));
                    }
                    if j < n {
                        spacing = spacing.max(dist(at(i, j), at(i, j + 1)));
                    }
                }
            }
            (pts, spacing)
        };
        let tree = match p.m {
            2 => {
                let arr: Vec<[f64; 2]> = points.iter().map(|v| [v[0], v[1]]).collect();
                Tree::Two(ImmutableKdTree::new_from_slice(&arr).expect("front grid builds"))
            }
            _ => {
                let arr: Vec<[f64; 3]> = points.iter().map(|v| [v[0], v[1], v[2]]).collect();
                Tree::Three(ImmutableKdTree::new_from_slice(&arr).expect("front grid builds"))
            }
        };
        FrontGrid { points, spacing, tree }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Largest distance between neighbouring grid nodes.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nearest_distance(&self, f: &[f64]) -> f64 {
        let d2 = match &self.tree {
            Tree::Two(t) => t.query(&[f[0], f[1]]).nearest_one::<SquaredEuclidean<f64>>().execute().distance,
            Tree::Three(t) => t.query(&[f[0], f[1], f[2]]).nearest_one::<SquaredEuclidean<f64>>().execute().distance,
        };
        d2.sqrt()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
