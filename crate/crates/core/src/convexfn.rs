//! Scalar functions of the state blocks `(x, v1, v2)`.
//!
//! Every function in a problem (running cost, terminal cost, constraints) is a
//! [`ScalarFn`]. Its input is a flat slice holding `blocks` consecutive
//! n-vectors: one block for costs, three blocks `(x, v1, v2)` for constraints.
//! Subdifferentials are returned as finite generator lists; the set they stand
//! for is the convex hull of the generators.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Default activity tolerance for max-of-affine pieces, relative to the max value.
pub const DEFAULT_EPS_ACT: f64 = 1e-8;

/// Smallest eigenvalue accepted for a "positive semidefinite" Hessian.
pub const PSD_EIGEN_FLOOR: f64 = -1e-10;

/// Which of the `(x, v1, v2)` blocks a function actually reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockMask {
    pub x: bool,
    pub v1: bool,
    pub v2: bool,
}

impl BlockMask {
    pub const NONE: BlockMask = BlockMask {
        x: false,
        v1: false,
        v2: false,
    };
    pub const ALL: BlockMask = BlockMask {
        x: true,
        v1: true,
        v2: true,
    };

    pub fn from_flags(flags: &[bool]) -> Self {
        BlockMask {
            x: flags.first().copied().unwrap_or(false),
            v1: flags.get(1).copied().unwrap_or(false),
            v2: flags.get(2).copied().unwrap_or(false),
        }
    }

    pub fn get(&self, block: usize) -> bool {
        match block {
            0 => self.x,
            1 => self.v1,
            2 => self.v2,
            _ => false,
        }
    }

    pub fn union(self, other: BlockMask) -> BlockMask {
        BlockMask {
            x: self.x || other.x,
            v1: self.v1 || other.v1,
            v2: self.v2 || other.v2,
        }
    }

    /// True when every block set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BlockMask) -> bool {
        (!self.x || other.x) && (!self.v1 || other.v1) && (!self.v2 || other.v2)
    }

    pub fn is_empty(&self) -> bool {
        !(self.x || self.v1 || self.v2)
    }
}

/// `z ↦ ⟨g, z⟩ + c`, stored in gradient form.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    gradient: Vec<f64>,
    constant: f64,
}

impl Affine {
    pub fn new(gradient: Vec<f64>, constant: f64) -> Self {
        Affine { gradient, constant }
    }

    /// One-block affine function `⟨p0, x⟩ − d`.
    pub fn state(p0: Vec<f64>, d: f64) -> Self {
        Affine::new(p0, -d)
    }

    /// Three-block affine constraint `⟨p0, x⟩ + ⟨p1, v1⟩ − ⟨p2, v2⟩ − d`.
    ///
    /// The minus sign on the `v2` block follows the polyhedral constraint form
    /// `P0 x + P1 x' − Q x'' − d`, so the gradient is `(p0, p1, −p2)`.
    pub fn constraint(p0: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>, d: f64) -> Result<Self> {
        check_dim("affine constraint p1 block", p0.len(), p1.len())?;
        check_dim("affine constraint p2 block", p0.len(), p2.len())?;
        let mut gradient = p0;
        gradient.extend(p1);
        gradient.extend(p2.into_iter().map(|c| -c));
        Ok(Affine::new(gradient, -d))
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Recover `(p0, p1, p2, d)` in the constraint sign convention. Missing
    /// blocks (one-block functions) come back empty.
    pub fn blocks(&self, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let g = &self.gradient;
        let p0 = g[..n].to_vec();
        let p1 = if g.len() >= 2 * n {
            g[n..2 * n].to_vec()
        } else {
            Vec::new()
        };
        let p2 = if g.len() >= 3 * n {
            g[2 * n..3 * n].iter().map(|c| -c).collect()
        } else {
            Vec::new()
        };
        (p0, p1, p2, -self.constant)
    }

    #[inline]
    pub fn value(&self, z: &[f64]) -> f64 {
        dot(&self.gradient, z) + self.constant
    }
}

/// `z ↦ ½ zᵀHz + ⟨b, z⟩ + c` with `H` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    hessian: DMatrix<f64>,
    linear: Vec<f64>,
    offset: f64,
}

impl Quadratic {
    pub fn new(hessian: DMatrix<f64>, linear: Vec<f64>, offset: f64) -> Result<Self> {
        let dim = linear.len();
        if hessian.nrows() != dim || hessian.ncols() != dim {
            return Err(Error::Dimension {
                context: "quadratic hessian",
                expected: dim,
                got: hessian.nrows().max(hessian.ncols()),
            });
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * (1.0 + hessian.amax()) {
            return Err(Error::Config(format!(
                "quadratic hessian is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if dim > 0 {
            let min_eig = hessian.clone().symmetric_eigenvalues().min();
            if min_eig < PSD_EIGEN_FLOOR {
                return Err(Error::Config(format!(
                    "quadratic hessian is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(Quadratic {
            hessian,
            linear,
            offset,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn value(&self, z: &[f64]) -> f64 {
        let dim = self.linear.len();
        let mut quad = 0.0;
        for i in 0..dim {
            let mut row = 0.0;
            for j in 0..dim {
                row += self.hessian[(i, j)] * z[j];
            }
            quad += z[i] * row;
        }
        0.5 * quad + dot(&self.linear, z) + self.offset
    }

    fn gradient_into(&self, z: &[f64], out: &mut [f64]) {
        let dim = self.linear.len();
        for i in 0..dim {
            let mut row = self.linear[i];
            for j in 0..dim {
                row += self.hessian[(i, j)] * z[j];
            }
            out[i] = row;
        }
    }
}

pub type ValueFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// A user-supplied smooth function. The second argument of both callables is
/// the time parameter `t`; autonomous functions ignore it.
#[derive(Clone)]
pub struct BlackBox {
    value: ValueFn,
    gradient: Option<GradientFn>,
    convex: bool,
    depends_on: BlockMask,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox")
            .field("has_gradient", &self.gradient.is_some())
            .field("convex", &self.convex)
            .field("depends_on", &self.depends_on)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum FnKind {
    Affine(Affine),
    ConvexQuadratic(Quadratic),
    SmoothBlackBox(BlackBox),
    MaxOfAffine(Vec<Affine>),
}

/// A real-valued function of `blocks` stacked n-vectors.
#[derive(Debug, Clone)]
pub struct ScalarFn {
    n: usize,
    blocks: usize,
    kind: FnKind,
}

/// Finite generator list of a subdifferential; the set is their convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffSet {
    pub generators: Vec<DVector<f64>>,
    pub is_singleton: bool,
}

impl SubdiffSet {
    pub fn singleton(g: DVector<f64>) -> Self {
        SubdiffSet {
            generators: vec![g],
            is_singleton: true,
        }
    }

    /// Keep only the coordinates of the listed blocks, e.g. `(x, v1)` for
    /// constraints that ignore `v2`.
    pub fn restrict_blocks(&self, n: usize, keep: &[usize]) -> SubdiffSet {
        let generators = self
            .generators
            .iter()
            .map(|g| {
                let mut v = Vec::with_capacity(keep.len() * n);
                for &b in keep {
                    v.extend_from_slice(&g.as_slice()[b * n..(b + 1) * n]);
                }
                DVector::from_vec(v)
            })
            .collect();
        SubdiffSet {
            generators,
            is_singleton: self.is_singleton,
        }
    }
}

impl ScalarFn {
    pub fn new(n: usize, blocks: usize, kind: FnKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        if blocks == 0 || blocks > 3 {
            return Err(Error::Config(format!(
                "functions take 1 to 3 blocks, got {blocks}"
            )));
        }
        let arity = n * blocks;
        match &kind {
            FnKind::Affine(a) => check_dim("affine coefficients", arity, a.gradient.len())?,
            FnKind::ConvexQuadratic(q) => check_dim("quadratic linear term", arity, q.linear.len())?,
            FnKind::SmoothBlackBox(_) => {}
            FnKind::MaxOfAffine(pieces) => {
                if pieces.is_empty() {
                    return Err(Error::Config("max-of-affine needs at least one piece".into()));
                }
                for p in pieces {
                    check_dim("max-of-affine piece", arity, p.gradient.len())?;
                }
            }
        }
        Ok(ScalarFn { n, blocks, kind })
    }

    pub fn zero(n: usize, blocks: usize) -> Self {
        ScalarFn {
            n,
            blocks,
            kind: FnKind::Affine(Affine::new(vec![0.0; n * blocks], 0.0)),
        }
    }

    /// A constant function, e.g. a constraint that is always inactive.
    pub fn constant(n: usize, blocks: usize, value: f64) -> Self {
        ScalarFn {
            n,
            blocks,
            kind: FnKind::Affine(Affine::new(vec![0.0; n * blocks], value)),
        }
    }

    pub fn affine(n: usize, blocks: usize, a: Affine) -> Result<Self> {
        ScalarFn::new(n, blocks, FnKind::Affine(a))
    }

    pub fn quadratic(
        n: usize,
        blocks: usize,
        hessian: DMatrix<f64>,
        linear: Vec<f64>,
        offset: f64,
    ) -> Result<Self> {
        ScalarFn::new(
            n,
            blocks,
            FnKind::ConvexQuadratic(Quadratic::new(hessian, linear, offset)?),
        )
    }

    pub fn max_affine(n: usize, blocks: usize, pieces: Vec<Affine>) -> Result<Self> {
        ScalarFn::new(n, blocks, FnKind::MaxOfAffine(pieces))
    }

    pub fn black_box(
        n: usize,
        blocks: usize,
        value: ValueFn,
        gradient: Option<GradientFn>,
        convex: bool,
        depends_on: BlockMask,
    ) -> Result<Self> {
        ScalarFn::new(
            n,
            blocks,
            FnKind::SmoothBlackBox(BlackBox {
                value,
                gradient,
                convex,
                depends_on,
            }),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn arity(&self) -> usize {
        self.n * self.blocks
    }

    pub fn kind(&self) -> &FnKind {
        &self.kind
    }

    pub fn is_convex(&self) -> bool {
        match &self.kind {
            FnKind::SmoothBlackBox(b) => b.convex,
            _ => true,
        }
    }

    /// Differentiable everywhere (the subdifferential is always a singleton).
    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            FnKind::MaxOfAffine(pieces) => pieces.len() == 1,
            _ => true,
        }
    }

    /// False only for black boxes built without a gradient callable.
    pub fn has_gradient(&self) -> bool {
        match &self.kind {
            FnKind::SmoothBlackBox(b) => b.gradient.is_some(),
            _ => true,
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.kind, FnKind::Affine(_))
    }

    /// Blocks with structurally nonzero dependence.
    pub fn depends_on(&self) -> BlockMask {
        let n = self.n;
        let from_coeffs = |g: &[f64]| {
            let mut flags = [false; 3];
            for (b, flag) in flags.iter_mut().enumerate().take(self.blocks) {
                *flag = g[b * n..(b + 1) * n].iter().any(|&c| c != 0.0);
            }
            BlockMask::from_flags(&flags)
        };
        match &self.kind {
            FnKind::Affine(a) => from_coeffs(&a.gradient),
            FnKind::ConvexQuadratic(q) => {
                let mut flags = [false; 3];
                for (b, flag) in flags.iter_mut().enumerate().take(self.blocks) {
                    let range = b * n..(b + 1) * n;
                    let lin = q.linear[range.clone()].iter().any(|&c| c != 0.0);
                    let quad = range
                        .clone()
                        .any(|i| (0..q.linear.len()).any(|j| q.hessian[(i, j)] != 0.0));
                    *flag = lin || quad;
                }
                BlockMask::from_flags(&flags)
            }
            FnKind::SmoothBlackBox(b) => b.depends_on,
            FnKind::MaxOfAffine(pieces) => pieces
                .iter()
                .fold(BlockMask::NONE, |acc, p| acc.union(from_coeffs(&p.gradient))),
        }
    }

    fn check_arity(&self, z: &[f64]) -> Result<()> {
        check_dim("function argument", self.arity(), z.len())
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.eval_at(z, 0.0)
    }

    /// Evaluate with an explicit time parameter (only black boxes read it).
    pub fn eval_at(&self, z: &[f64], t: f64) -> Result<f64> {
        self.check_arity(z)?;
        Ok(self.value(z, t))
    }

    #[inline]
    pub(crate) fn value(&self, z: &[f64], t: f64) -> f64 {
        match &self.kind {
            FnKind::Affine(a) => a.value(z),
            FnKind::ConvexQuadratic(q) => q.value(z),
            FnKind::SmoothBlackBox(b) => (b.value)(z, t),
            FnKind::MaxOfAffine(pieces) => pieces
                .iter()
                .map(|p| p.value(z))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Gradient for smooth kinds; for max-of-affine, the gradient of the first
    /// piece attaining the max (one valid subgradient).
    pub fn gradient_into(&self, z: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.check_arity(z)?;
        check_dim("gradient output", self.arity(), out.len())?;
        match &self.kind {
            FnKind::Affine(a) => out.copy_from_slice(&a.gradient),
            FnKind::ConvexQuadratic(q) => q.gradient_into(z, out),
            FnKind::SmoothBlackBox(b) => match &b.gradient {
                Some(g) => g(z, t, out),
                None => {
                    return Err(Error::Unsupported(
                        "black-box function has no gradient callable".into(),
                    ))
                }
            },
            FnKind::MaxOfAffine(pieces) => {
                let best = self.value(z, t);
                let piece = pieces
                    .iter()
                    .find(|p| p.value(z) == best)
                    .unwrap_or(&pieces[0]);
                out.copy_from_slice(&piece.gradient);
            }
        }
        Ok(())
    }

    pub fn gradient(&self, z: &[f64], t: f64) -> Result<DVector<f64>> {
        let mut out = vec![0.0; self.arity()];
        self.gradient_into(z, t, &mut out)?;
        Ok(DVector::from_vec(out))
    }

    pub fn subdiff(&self, z: &[f64], eps_act: f64) -> Result<SubdiffSet> {
        self.subdiff_at(z, 0.0, eps_act)
    }

    /// Subdifferential as a generator list. Max-of-affine returns the gradient
    /// of every piece within `eps_act · max(1, |max|)` of the maximum.
    pub fn subdiff_at(&self, z: &[f64], t: f64, eps_act: f64) -> Result<SubdiffSet> {
        self.check_arity(z)?;
        if !(eps_act >= 0.0) {
            return Err(Error::Config(format!("eps_act must be >= 0, got {eps_act}")));
        }
        match &self.kind {
            FnKind::MaxOfAffine(pieces) => {
                let values: Vec<f64> = pieces.iter().map(|p| p.value(z)).collect();
                let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !best.is_finite() {
                    return Err(Error::Numerical("max-of-affine value is not finite".into()));
                }
                let cutoff = best - eps_act * best.abs().max(1.0);
                let mut generators: Vec<DVector<f64>> = Vec::new();
                for (p, &v) in pieces.iter().zip(&values) {
                    if v >= cutoff {
                        let g = DVector::from_column_slice(&p.gradient);
                        if !generators.contains(&g) {
                            generators.push(g);
                        }
                    }
                }
                let is_singleton = generators.len() == 1;
                Ok(SubdiffSet {
                    generators,
                    is_singleton,
                })
            }
            _ => Ok(SubdiffSet::singleton(self.gradient(z, t)?)),
        }
    }

    /// Central finite-difference gradient with step `h`.
    pub fn fd_gradient(&self, z: &[f64], t: f64, h: f64) -> Result<DVector<f64>> {
        self.check_arity(z)?;
        let mut probe = z.to_vec();
        let mut out = DVector::zeros(z.len());
        for i in 0..z.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = self.value(&probe, t);
            probe[i] = orig - h;
            let down = self.value(&probe, t);
            probe[i] = orig;
            out[i] = (up - down) / (2.0 * h);
        }
        Ok(out)
    }
}

/// Sampled check of the subgradient inequality `f(z) − f(z0) ≥ ⟨g, z − z0⟩`
/// over a box of half-width `5 · max(1, ‖z0‖∞)` around `z0`, tolerance 1e−10.
pub fn check_subgradient_inequality(
    f: &ScalarFn,
    z0: &[f64],
    g: &[f64],
    samples: usize,
    seed: u64,
) -> bool {
    let radius = 5.0 * z0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    subgradient_inequality_violation(f, z0, g, 0.0, samples, seed, radius)
        .map(|worst| worst <= 1e-10)
        .unwrap_or(false)
}

/// Largest sampled violation `⟨g, z − z0⟩ − (f(z) − f(z0))` (zero when the
/// inequality holds on every sample), sampling uniformly in `z0 ± radius`.
pub fn subgradient_inequality_violation(
    f: &ScalarFn,
    z0: &[f64],
    g: &[f64],
    t: f64,
    samples: usize,
    seed: u64,
    radius: f64,
) -> Result<f64> {
    f.check_arity(z0)?;
    check_dim("subgradient", f.arity(), g.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = f.value(z0, t);
    let mut z = vec![0.0; z0.len()];
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        for (zi, &c) in z.iter_mut().zip(z0) {
            *zi = c + rng.random_range(-radius..=radius);
        }
        let lhs = f.value(&z, t) - f0;
        let rhs: f64 = g
            .iter()
            .zip(z.iter().zip(z0))
            .map(|(gi, (zi, ci))| gi * (zi - ci))
            .sum();
        worst = worst.max(rhs - lhs);
    }
    Ok(worst)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
