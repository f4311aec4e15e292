//! Benchmark problem registry: pseudo-Boolean (pbo) and continuous (bbob)
//! functions, seeded instance generation and per-problem target sets.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound of every continuous search box.
pub const REAL_LB: f64 = -5.0;
/// Upper bound of every continuous search box.
pub const REAL_UB: f64 = 5.0;
/// Instances 1..=5 are used during search, 6..=10 are held out.
pub const MAX_INSTANCE: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown function {suite}/F{function}")]
    UnknownFunction { suite: Suite, function: u32 },
    #[error("{suite}/F{function} does not support dimension {dim}: {reason}")]
    UnsupportedDim {
        suite: Suite,
        function: u32,
        dim: usize,
        reason: String,
    },
    #[error("instance {0} outside 1..={MAX_INSTANCE}")]
    InvalidInstance(u32),
    #[error("domain violation: {0}")]
    DomainViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Pbo,
    Bbob,
}

impl Suite {
    pub fn orientation(self) -> Orientation {
        match self {
            Suite::Pbo => Orientation::Maximize,
            Suite::Bbob => Orientation::Minimize,
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            Suite::Pbo => 100,
            Suite::Bbob => 5,
        }
    }

    /// Evaluation budget per instance used for the full-scale setup.
    pub fn default_budget(self) -> u64 {
        match self {
            Suite::Pbo => 1_000_000,
            Suite::Bbob => 10_000,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Pbo => "pbo",
            Suite::Bbob => "bbob",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pbo" => Ok(Suite::Pbo),
            "bbob" => Ok(Suite::Bbob),
            other => Err(format!("unknown suite `{other}` (expected pbo or bbob)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "max")]
    Maximize,
    #[serde(rename = "min")]
    Minimize,
}

impl Orientation {
    /// `a` is strictly better than `b`.
    pub fn improves(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::Maximize => a > b,
            Orientation::Minimize => a < b,
        }
    }

    /// `value` attains `target` (inclusive).
    pub fn reaches(self, value: f64, target: f64) -> bool {
        match self {
            Orientation::Maximize => value >= target,
            Orientation::Minimize => value <= target,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Maximize => "max",
            Orientation::Minimize => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProblemId {
    pub suite: Suite,
    pub function: u32,
    pub instance: u32,
    pub dim: usize,
}

impl ProblemId {
    pub fn new(suite: Suite, function: u32, instance: u32, dim: usize) -> Self {
        Self {
            suite,
            function,
            instance,
            dim,
        }
    }

    pub fn with_instance(self, instance: u32) -> Self {
        Self { instance, ..self }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/F{}/i{}/d{}", self.suite, self.function, self.instance, self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    BooleanVector { dim: usize },
    RealBox { dim: usize, lb: f64, ub: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::BooleanVector { dim } | Domain::RealBox { dim, .. } => dim,
        }
    }

    pub fn wire_name(&self) -> &'static str {
        match self {
            Domain::BooleanVector { .. } => "bool",
            Domain::RealBox { .. } => "real",
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::BooleanVector { .. } => (0.0, 1.0),
            Domain::RealBox { lb, ub, .. } => (lb, ub),
        }
    }

    /// Checks length and per-entry constraints of a candidate solution.
    pub fn check(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DomainViolation(format!(
                "expected {} variables, got {}",
                self.dim(),
                x.len()
            )));
        }
        match *self {
            Domain::BooleanVector { .. } => {
                if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
                    return Err(ProblemError::DomainViolation(format!("x[{i}] = {v} is not binary")));
                }
            }
            Domain::RealBox { lb, ub, .. } => {
                if let Some((i, v)) = x
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !v.is_finite() || **v < lb || **v > ub)
                {
                    return Err(ProblemError::DomainViolation(format!(
                        "x[{i}] = {v} outside [{lb}, {ub}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Objective thresholds ordered from easiest to hardest, i.e. strictly
/// improving in the problem's orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub values: Vec<f64>,
    pub orientation: Orientation,
}

impl TargetSet {
    pub fn new(values: Vec<f64>, orientation: Orientation) -> Option<Self> {
        let ok = !values.is_empty()
            && values.iter().all(|v| v.is_finite())
            && values.windows(2).all(|w| orientation.improves(w[1], w[0]));
        ok.then_some(Self { values, orientation })
    }

    /// Integer range `lo..=hi` for maximization.
    fn int_range(lo: i64, hi: i64, step: i64) -> Self {
        let values = (lo..=hi).step_by(step as usize).map(|v| v as f64).collect();
        Self {
            values,
            orientation: Orientation::Maximize,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of targets attained by `best`.
    pub fn count_reached(&self, best: f64) -> usize {
        // Targets are sorted easiest-first, so the reached ones form a prefix.
        self.values.partition_point(|&phi| self.orientation.reaches(best, phi))
    }
}

/// Pseudo-Boolean base function over untransformed bit strings.
pub trait PseudoBooleanFunction: Send + Sync {
    fn name(&self) -> &str;
    fn check_dim(&self, dim: usize) -> Result<(), String>;
    /// Maximum objective value at this dimension.
    fn optimum(&self, dim: usize) -> f64;
    /// One maximizer, when it has a closed form.
    fn optimal_bits(&self, dim: usize) -> Option<Vec<u8>>;
    fn evaluate(&self, bits: &[u8]) -> f64;
    fn targets(&self, dim: usize) -> TargetSet;
    fn target_description(&self) -> String;
}

/// Continuous base function expressed in the shifted variable `z = x - x_opt`.
/// Must be non-negative with value 0 at `z = 0`; the instance adds `f_opt`.
pub trait ContinuousFunction: Send + Sync {
    fn name(&self) -> &str;
    fn check_dim(&self, _dim: usize) -> Result<(), String> {
        Ok(())
    }
    fn evaluate(&self, z: &[f64]) -> f64;
}

#[derive(Clone)]
enum Base {
    Pbo(Arc<dyn PseudoBooleanFunction>),
    Bbob(Arc<dyn ContinuousFunction>),
}

impl Base {
    fn name(&self) -> &str {
        match self {
            Base::Pbo(f) => f.name(),
            Base::Bbob(f) => f.name(),
        }
    }
}

/// Seeded per-instance transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    XorMask { mask: Vec<u8> },
    Shift { x_opt: Vec<f64>, f_opt: f64 },
}

/// One seeded benchmark function instance. Immutable; evaluation is pure.
#[derive(Clone)]
pub struct ProblemInstance {
    id: ProblemId,
    base: Base,
    domain: Domain,
    transform: Transform,
    y_opt: f64,
    orientation: Orientation,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("id", &self.id)
            .field("name", &self.base.name())
            .field("transform", &self.transform)
            .field("y_opt", &self.y_opt)
            .finish()
    }
}

impl ProblemInstance {
    pub fn id(&self) -> ProblemId {
        self.id
    }

    pub fn name(&self) -> &str {
        self.base.name()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn y_opt(&self) -> f64 {
        self.y_opt
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.domain.check(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        match (&self.base, &self.transform) {
            (Base::Pbo(f), Transform::Identity) => {
                let bits: Vec<u8> = x.iter().map(|&v| v as u8).collect();
                f.evaluate(&bits)
            }
            (Base::Pbo(f), Transform::XorMask { mask }) => {
                let bits: Vec<u8> = x.iter().zip(mask).map(|(&v, &m)| (v as u8) ^ m).collect();
                f.evaluate(&bits)
            }
            (Base::Bbob(f), Transform::Identity) => f.evaluate(x),
            (Base::Bbob(f), Transform::Shift { x_opt, f_opt }) => {
                let z: Vec<f64> = x.iter().zip(x_opt).map(|(a, b)| a - b).collect();
                f.evaluate(&z) + f_opt
            }
            _ => unreachable!("transform kind always matches the suite"),
        }
    }

    /// A known optimal solution, when the base function provides one.
    pub fn optimum_point(&self) -> Option<Vec<f64>> {
        match (&self.base, &self.transform) {
            (Base::Pbo(f), t) => {
                let bits = f.optimal_bits(self.id.dim)?;
                let mask = match t {
                    Transform::XorMask { mask } => mask.clone(),
                    _ => vec![0; bits.len()],
                };
                Some(bits.iter().zip(&mask).map(|(b, m)| (b ^ m) as f64).collect())
            }
            (Base::Bbob(_), Transform::Shift { x_opt, .. }) => Some(x_opt.clone()),
            (Base::Bbob(_), _) => Some(vec![0.0; self.id.dim]),
        }
    }

    pub fn target_set(&self) -> TargetSet {
        match &self.base {
            Base::Pbo(f) => f.targets(self.id.dim),
            Base::Bbob(_) => bbob_targets(self.y_opt),
        }
    }
}

/// 101 log-uniform precisions from 1e2 down to 1e-8, offset by `f_opt`.
fn bbob_targets(f_opt: f64) -> TargetSet {
    let values = (0..=100).map(|k| f_opt + 10f64.powf(2.0 - k as f64 / 10.0)).collect();
    TargetSet {
        values,
        orientation: Orientation::Minimize,
    }
}

/// Catalog row exported by `bench list`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub suite: Suite,
    pub function: u32,
    pub name: String,
    pub supported_dims: String,
    pub orientation: Orientation,
    pub targets: String,
}

/// Registry of benchmark functions keyed by suite and function index.
#[derive(Clone, Default)]
pub struct Registry {
    pbo: BTreeMap<u32, Arc<dyn PseudoBooleanFunction>>,
    bbob: BTreeMap<u32, Arc<dyn ContinuousFunction>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The built-in functions.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register_pbo(1, Arc::new(pbo::OneMax));
        r.register_pbo(2, Arc::new(pbo::LeadingOnes));
        r.register_pbo(3, Arc::new(pbo::Harmonic));
        r.register_pbo(19, Arc::new(pbo::Ising { lattice_rank: 1 }));
        r.register_pbo(20, Arc::new(pbo::Ising { lattice_rank: 2 }));
        r.register_pbo(21, Arc::new(pbo::Ising { lattice_rank: 3 }));
        r.register_pbo(23, Arc::new(pbo::NQueens));
        r.register_bbob(1, Arc::new(bbob::Sphere));
        r.register_bbob(3, Arc::new(bbob::Rastrigin));
        r.register_bbob(8, Arc::new(bbob::Rosenbrock));
        r.register_bbob(14, Arc::new(bbob::DifferentPowers));
        r.register_bbob(20, Arc::new(bbob::Schwefel));
        r
    }

    pub fn register_pbo(&mut self, index: u32, f: Arc<dyn PseudoBooleanFunction>) {
        self.pbo.insert(index, f);
    }

    pub fn register_bbob(&mut self, index: u32, f: Arc<dyn ContinuousFunction>) {
        self.bbob.insert(index, f);
    }

    fn base(&self, suite: Suite, function: u32) -> Result<Base, ProblemError> {
        let found = match suite {
            Suite::Pbo => self.pbo.get(&function).cloned().map(Base::Pbo),
            Suite::Bbob => self.bbob.get(&function).cloned().map(Base::Bbob),
        };
        found.ok_or(ProblemError::UnknownFunction { suite, function })
    }

    pub fn make_instance(&self, id: ProblemId) -> Result<ProblemInstance, ProblemError> {
        if id.instance == 0 || id.instance > MAX_INSTANCE {
            return Err(ProblemError::InvalidInstance(id.instance));
        }
        let base = self.base(id.suite, id.function)?;
        let unsupported = |reason: String| ProblemError::UnsupportedDim {
            suite: id.suite,
            function: id.function,
            dim: id.dim,
            reason,
        };
        if id.dim == 0 {
            return Err(unsupported("dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(id));
        let (domain, transform, y_opt) = match &base {
            Base::Pbo(f) => {
                f.check_dim(id.dim).map_err(unsupported)?;
                let transform = if id.instance == 1 {
                    Transform::Identity
                } else {
                    Transform::XorMask {
                        mask: (0..id.dim).map(|_| rng.random_range(0..=1u8)).collect(),
                    }
                };
                (Domain::BooleanVector { dim: id.dim }, transform, f.optimum(id.dim))
            }
            Base::Bbob(f) => {
                f.check_dim(id.dim).map_err(unsupported)?;
                let domain = Domain::RealBox {
                    dim: id.dim,
                    lb: REAL_LB,
                    ub: REAL_UB,
                };
                if id.instance == 1 {
                    (domain, Transform::Identity, 0.0)
                } else {
                    let x_opt = (0..id.dim).map(|_| rng.random_range(-4.0..=4.0)).collect();
                    let f_opt = rng.random_range(-100.0..=100.0);
                    (domain, Transform::Shift { x_opt, f_opt }, f_opt)
                }
            }
        };
        Ok(ProblemInstance {
            id,
            base,
            domain,
            transform,
            y_opt,
            orientation: id.suite.orientation(),
        })
    }

    pub fn target_set(&self, id: ProblemId) -> Result<TargetSet, ProblemError> {
        Ok(self.make_instance(id)?.target_set())
    }

    pub fn catalog(&self) -> Vec<CatalogEntry> {
        let pbo = self.pbo.iter().map(|(&i, f)| CatalogEntry {
            suite: Suite::Pbo,
            function: i,
            name: f.name().to_string(),
            supported_dims: match f.check_dim(100) {
                Ok(()) => "any n >= 1 satisfying the function's shape (default 100)".into(),
                Err(e) => e,
            },
            orientation: Orientation::Maximize,
            targets: f.target_description(),
        });
        let bbob = self.bbob.iter().map(|(&i, f)| CatalogEntry {
            suite: Suite::Bbob,
            function: i,
            name: f.name().to_string(),
            supported_dims: "any n >= 1 (default 5)".into(),
            orientation: Orientation::Minimize,
            targets: "101 log-spaced precisions f_opt + 10^(2 - k/10), k = 0..=100".into(),
        });
        pbo.chain(bbob).collect()
    }
}

/// Deterministic seed from the full problem identity (FNV-1a over the fields).
fn instance_seed(id: ProblemId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let suite = match id.suite {
        Suite::Pbo => 1u64,
        Suite::Bbob => 2u64,
    };
    for word in [suite, id.function as u64, id.instance as u64, id.dim as u64] {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn standard_registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::standard)
}

/// Builds an instance from the built-in registry.
pub fn make_instance(id: ProblemId) -> Result<ProblemInstance, ProblemError> {
    standard_registry().make_instance(id)
}

/// Target set of a problem from the built-in registry.
pub fn target_set(id: ProblemId) -> Result<TargetSet, ProblemError> {
    standard_registry().target_set(id)
}

pub fn catalog() -> Vec<CatalogEntry> {
    standard_registry().catalog()
}

pub mod pbo {
    //! Pseudo-Boolean functions (maximization).

    use super::{PseudoBooleanFunction, TargetSet};

    fn exact_root(n: usize, k: u32) -> Option<usize> {
        let r = (n as f64).powf(1.0 / k as f64).round() as usize;
        (r.checked_pow(k) == Some(n)).then_some(r)
    }

    pub struct OneMax;

    impl PseudoBooleanFunction for OneMax {
        fn name(&self) -> &str {
            "OneMax"
        }
        fn check_dim(&self, _dim: usize) -> Result<(), String> {
            Ok(())
        }
        fn optimum(&self, dim: usize) -> f64 {
            dim as f64
        }
        fn optimal_bits(&self, dim: usize) -> Option<Vec<u8>> {
            Some(vec![1; dim])
        }
        fn evaluate(&self, bits: &[u8]) -> f64 {
            bits.iter().map(|&b| b as u32).sum::<u32>() as f64
        }
        fn targets(&self, dim: usize) -> TargetSet {
            TargetSet::int_range(dim.div_ceil(2) as i64, dim as i64, 1)
        }
        fn target_description(&self) -> String {
            "{ceil(n/2), ..., n}; {50, ..., 100} at n = 100".into()
        }
    }

    pub struct LeadingOnes;

    impl PseudoBooleanFunction for LeadingOnes {
        fn name(&self) -> &str {
            "LeadingOnes"
        }
        fn check_dim(&self, _dim: usize) -> Result<(), String> {
            Ok(())
        }
        fn optimum(&self, dim: usize) -> f64 {
            dim as f64
        }
        fn optimal_bits(&self, dim: usize) -> Option<Vec<u8>> {
            Some(vec![1; dim])
        }
        fn evaluate(&self, bits: &[u8]) -> f64 {
            bits.iter().take_while(|&&b| b == 1).count() as f64
        }
        fn targets(&self, dim: usize) -> TargetSet {
            TargetSet::int_range(0, dim as i64, 1)
        }
        fn target_description(&self) -> String {
            "{0, ..., n}".into()
        }
    }

    pub struct Harmonic;

    impl PseudoBooleanFunction for Harmonic {
        fn name(&self) -> &str {
            "Harmonic"
        }
        fn check_dim(&self, _dim: usize) -> Result<(), String> {
            Ok(())
        }
        fn optimum(&self, dim: usize) -> f64 {
            (dim * (dim + 1) / 2) as f64
        }
        fn optimal_bits(&self, dim: usize) -> Option<Vec<u8>> {
            Some(vec![1; dim])
        }
        fn evaluate(&self, bits: &[u8]) -> f64 {
            bits.iter()
                .enumerate()
                .map(|(i, &b)| (i + 1) as u64 * b as u64)
                .sum::<u64>() as f64
        }
        fn targets(&self, dim: usize) -> TargetSet {
            // n = 100 gives {2525 + 5i : i = 0..=505}.
            let opt = (dim * (dim + 1) / 2) as i64;
            let step = ((opt as f64 / 1010.0).round() as i64).max(1);
            let start = (opt + 1) / 2;
            TargetSet::int_range(start, opt, step)
        }
        fn target_description(&self) -> String {
            "{ceil(opt/2) + s*i} up to opt = n(n+1)/2, s = max(1, round(opt/1010)); {2525 + 5i : i = 0..=505} at n = 100".into()
        }
    }

    /// Ferromagnetic Ising model on a periodic lattice of rank 1, 2 or 3.
    /// Counts neighbouring pairs with equal spins; maximum is `rank * n`.
    pub struct Ising {
        pub lattice_rank: u32,
    }

    impl Ising {
        fn side(&self, dim: usize) -> Option<usize> {
            exact_root(dim, self.lattice_rank)
        }
    }

    impl PseudoBooleanFunction for Ising {
        fn name(&self) -> &str {
            match self.lattice_rank {
                1 => "IsingRing",
                2 => "IsingTorus",
                _ => "IsingCubic",
            }
        }
        fn check_dim(&self, dim: usize) -> Result<(), String> {
            match self.side(dim) {
                Some(_) => Ok(()),
                None => Err(format!(
                    "dimension must be a perfect power of rank {}",
                    self.lattice_rank
                )),
            }
        }
        fn optimum(&self, dim: usize) -> f64 {
            (self.lattice_rank as usize * dim) as f64
        }
        fn optimal_bits(&self, dim: usize) -> Option<Vec<u8>> {
            Some(vec![1; dim])
        }
        fn evaluate(&self, bits: &[u8]) -> f64 {
            let n = bits.len();
            let side = self.side(n).unwrap_or(n);
            let rank = self.lattice_rank as usize;
            let mut equal = 0usize;
            for i in 0..n {
                let mut stride = 1;
                for _ in 0..rank {
                    // Neighbour along this axis with periodic wrap-around.
                    let coord = (i / stride) % side;
                    let j = i - coord * stride + ((coord + 1) % side) * stride;
                    equal += (bits[i] == bits[j]) as usize;
                    stride *= side;
                }
            }
            equal as f64
        }
        fn targets(&self, dim: usize) -> TargetSet {
            let opt = (self.lattice_rank as usize * dim) as i64;
            TargetSet::int_range(opt / 2, opt, 1)
        }
        fn target_description(&self) -> String {
            "{opt/2, ..., opt}, opt = rank * n".into()
        }
    }

    /// N-Queens on a sqrt(n) x sqrt(n) board: queens placed minus
    /// `N` times the number of excess queens per row, column and diagonal.
    pub struct NQueens;

    impl PseudoBooleanFunction for NQueens {
        fn name(&self) -> &str {
            "NQueens"
        }
        fn check_dim(&self, dim: usize) -> Result<(), String> {
            match exact_root(dim, 2) {
                Some(_) => Ok(()),
                None => Err("dimension must be a perfect square".into()),
            }
        }
        fn optimum(&self, dim: usize) -> f64 {
            exact_root(dim, 2).unwrap_or(0) as f64
        }
        fn optimal_bits(&self, _dim: usize) -> Option<Vec<u8>> {
            None
        }
        fn evaluate(&self, bits: &[u8]) -> f64 {
            let n = exact_root(bits.len(), 2).unwrap_or(0);
            let at = |r: usize, c: usize| bits[r * n + c] as i64;
            let excess = |s: i64| (s - 1).max(0);
            let queens: i64 = bits.iter().map(|&b| b as i64).sum();
            let mut penalty = 0;
            for k in 0..n {
                penalty += excess((0..n).map(|c| at(k, c)).sum());
                penalty += excess((0..n).map(|r| at(r, k)).sum());
            }
            let n_i = n as i64;
            for d in -(n_i - 1)..n_i {
                let diag: i64 = (0..n_i)
                    .filter(|r| (0..n_i).contains(&(r + d)))
                    .map(|r| at(r as usize, (r + d) as usize))
                    .sum();
                let anti: i64 = (0..n_i)
                    .filter(|r| (0..n_i).contains(&(n_i - 1 - r + d)))
                    .map(|r| at(r as usize, (n_i - 1 - r + d) as usize))
                    .sum();
                penalty += excess(diag) + excess(anti);
            }
            (queens - n_i * penalty) as f64
        }
        fn targets(&self, dim: usize) -> TargetSet {
            let n = exact_root(dim, 2).unwrap_or(0) as i64;
            TargetSet::int_range(-2, n, 1)
        }
        fn target_description(&self) -> String {
            "{-2, ..., sqrt(n)}".into()
        }
    }
}

pub mod bbob {
    //! Continuous functions (minimization) in the shifted variable `z`.

    use std::f64::consts::PI;

    use super::ContinuousFunction;

    pub struct Sphere;

    impl ContinuousFunction for Sphere {
        fn name(&self) -> &str {
            "Sphere"
        }
        fn evaluate(&self, z: &[f64]) -> f64 {
            z.iter().map(|v| v * v).sum()
        }
    }

    pub struct Rastrigin;

    impl ContinuousFunction for Rastrigin {
        fn name(&self) -> &str {
            "Rastrigin"
        }
        fn evaluate(&self, z: &[f64]) -> f64 {
            z.iter().map(|v| v * v + 10.0 * (1.0 - (2.0 * PI * v).cos())).sum()
        }
    }

    pub struct Rosenbrock;

    impl ContinuousFunction for Rosenbrock {
        fn name(&self) -> &str {
            "Rosenbrock"
        }
        fn evaluate(&self, z: &[f64]) -> f64 {
            let scale = (((z.len() as f64).sqrt()) / 8.0).max(1.0);
            let w: Vec<f64> = z.iter().map(|v| scale * v + 1.0).collect();
            w.windows(2)
                .map(|p| 100.0 * (p[0] * p[0] - p[1]).powi(2) + (p[0] - 1.0).powi(2))
                .sum()
        }
    }

    pub struct DifferentPowers;

    impl ContinuousFunction for DifferentPowers {
        fn name(&self) -> &str {
            "DifferentPowers"
        }
        fn evaluate(&self, z: &[f64]) -> f64 {
            let n = z.len();
            let sum: f64 = z
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let exponent = if n > 1 {
                        2.0 + 4.0 * i as f64 / (n - 1) as f64
                    } else {
                        2.0
                    };
                    v.abs().powf(exponent)
                })
                .sum();
            sum.sqrt()
        }
    }

    /// Schwefel's sine function rescaled so the basin of its global
    /// minimiser covers the whole shifted box.
    pub struct Schwefel;

    /// Minimiser of `-u sin(sqrt|u|)` on `[-500, 500]`.
    const SCHWEFEL_ARGMIN: f64 = 420.968_746_227_503_6;
    /// Keeps `u` inside `[349, 493]` for `|z| <= 9`, which holds no other minimum.
    const SCHWEFEL_SCALE: f64 = 8.0;

    fn schwefel_term(u: f64) -> f64 {
        -u * u.abs().sqrt().sin()
    }

    impl ContinuousFunction for Schwefel {
        fn name(&self) -> &str {
            "Schwefel"
        }
        fn evaluate(&self, z: &[f64]) -> f64 {
            let floor = schwefel_term(SCHWEFEL_ARGMIN);
            z.iter()
                .map(|v| (schwefel_term(SCHWEFEL_ARGMIN + SCHWEFEL_SCALE * v) - floor).max(0.0))
                .sum()
        }
    }
}
