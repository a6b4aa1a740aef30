//! Problem-file schema. See `docs/problem-schema.md` for the format.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use bolza_core::convexfn::{Affine, BlockMask, FnKind, ScalarFn};
use bolza_core::problem::{Constraint, ContinuousProblem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::canonical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    V1,
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

/// `kind` selects the function family; `depends_on` is required on
/// constraints and rejected on `f` and `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FnSpec {
    /// `⟨gradient, z⟩ + constant`.
    Affine {
        gradient: Vec<f64>,
        constant: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depends_on: Option<Vec<Block>>,
    },
    /// `½ zᵀ hessian z + ⟨linear, z⟩ + offset`; `hessian` is a list of rows.
    Quadratic {
        hessian: Vec<Vec<f64>>,
        linear: Vec<f64>,
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depends_on: Option<Vec<Block>>,
    },
    /// Pointwise maximum of affine pieces.
    MaxAffine {
        pieces: Vec<AffinePiece>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depends_on: Option<Vec<Block>>,
    },
}

/// Closed-form scalar optimum used by the convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analytic {
    /// `coefficient · e^{rate·t}`.
    Exponential { coefficient: f64, rate: f64 },
    /// `Σ_j coefficients[j] · t^j`.
    Polynomial { coefficients: Vec<f64> },
}

impl Analytic {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Analytic::Exponential { coefficient, rate } => coefficient * (rate * t).exp(),
            Analytic::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub f: FnSpec,
    pub q: FnSpec,
    pub constraints: Vec<FnSpec>,
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Analytic>,
}

fn mask_of(blocks: &[Block]) -> BlockMask {
    BlockMask {
        x: blocks.contains(&Block::X),
        v1: blocks.contains(&Block::V1),
        v2: blocks.contains(&Block::V2),
    }
}

fn blocks_of(mask: BlockMask) -> Vec<Block> {
    let mut out = Vec::new();
    if mask.x {
        out.push(Block::X);
    }
    if mask.v1 {
        out.push(Block::V1);
    }
    if mask.v2 {
        out.push(Block::V2);
    }
    out
}

impl FnSpec {
    fn depends_on(&self) -> Option<&Vec<Block>> {
        match self {
            FnSpec::Affine { depends_on, .. }
            | FnSpec::Quadratic { depends_on, .. }
            | FnSpec::MaxAffine { depends_on, .. } => depends_on.as_ref(),
        }
    }

    fn build(&self, n: usize, blocks: usize) -> anyhow::Result<ScalarFn> {
        let f = match self {
            FnSpec::Affine { gradient, constant, .. } => {
                ScalarFn::affine(n, blocks, Affine::new(gradient.clone(), *constant))?
            }
            FnSpec::Quadratic { hessian, linear, offset, .. } => {
                let dim = n * blocks;
                if hessian.len() != dim || hessian.iter().any(|r| r.len() != dim) {
                    bail!("quadratic hessian must be {dim} x {dim}");
                }
                let h = DMatrix::from_fn(dim, dim, |r, c| hessian[r][c]);
                ScalarFn::quadratic(n, blocks, h, linear.clone(), *offset)?
            }
            FnSpec::MaxAffine { pieces, .. } => ScalarFn::max_affine(
                n,
                blocks,
                pieces.iter().map(|p| Affine::new(p.gradient.clone(), p.constant)).collect(),
            )?,
        };
        Ok(f)
    }

    fn from_fn(f: &ScalarFn, depends_on: Option<Vec<Block>>) -> anyhow::Result<FnSpec> {
        Ok(match f.kind() {
            FnKind::Affine(a) => FnSpec::Affine {
                gradient: a.gradient().to_vec(),
                constant: a.constant(),
                depends_on,
            },
            FnKind::ConvexQuadratic(q) => {
                let h = q.hessian();
                FnSpec::Quadratic {
                    hessian: (0..h.nrows()).map(|r| (0..h.ncols()).map(|c| h[(r, c)]).collect()).collect(),
                    linear: q.linear().to_vec(),
                    offset: q.offset(),
                    depends_on,
                }
            }
            FnKind::MaxOfAffine(pieces) => FnSpec::MaxAffine {
                pieces: pieces
                    .iter()
                    .map(|p| AffinePiece {
                        gradient: p.gradient().to_vec(),
                        constant: p.constant(),
                    })
                    .collect(),
                depends_on,
            },
            FnKind::SmoothBlackBox(_) => bail!("black-box functions cannot be serialized"),
        })
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> anyhow::Result<ProblemFile> {
        serde_json::from_str(text).context("problem file does not match the schema")
    }

    pub fn load(path: &Path) -> anyhow::Result<ProblemFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ProblemFile::parse(&text)
    }

    pub fn to_canonical(&self) -> anyhow::Result<String> {
        canonical::to_string(self)
    }

    /// Validate and build the in-memory problem.
    pub fn to_problem(&self) -> anyhow::Result<ContinuousProblem> {
        let n = self.n;
        if n == 0 {
            bail!("n must be positive");
        }
        if self.v0.len() != n || self.v1.len() != n {
            bail!("v0 and v1 must have length n = {n}");
        }
        for (name, g) in [("f", &self.f), ("q", &self.q)] {
            if g.depends_on().is_some() {
                bail!("{name}: depends_on is only allowed on constraints");
            }
        }
        if self.analytic.is_some() && n != 1 {
            bail!("analytic optimum is only supported for n = 1");
        }
        let f = self.f.build(n, 1).context("f")?;
        let q = self.q.build(n, 1).context("q")?;
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (k, spec) in self.constraints.iter().enumerate() {
            let tags = spec
                .depends_on()
                .ok_or_else(|| anyhow!("constraint {k}: depends_on is required"))?;
            let mut sorted = tags.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != tags.len() {
                bail!("constraint {k}: duplicate depends_on tags");
            }
            let declared = mask_of(tags);
            let w = spec.build(n, 3).with_context(|| format!("constraint {k}"))?;
            if w.is_affine() && w.depends_on() != declared {
                bail!(
                    "constraint {k}: depends_on {:?} disagrees with the nonzero coefficient blocks {:?}",
                    tags,
                    blocks_of(w.depends_on())
                );
            }
            constraints.push(Constraint::with_declared(w, declared).with_context(|| format!("constraint {k}"))?);
        }
        Ok(ContinuousProblem::new(f, q, constraints, self.v0.clone(), self.v1.clone())?)
    }

    pub fn from_problem(pc: &ContinuousProblem, analytic: Option<Analytic>) -> anyhow::Result<ProblemFile> {
        Ok(ProblemFile {
            n: pc.n(),
            f: FnSpec::from_fn(pc.f(), None)?,
            q: FnSpec::from_fn(pc.q(), None)?,
            constraints: pc
                .constraints()
                .iter()
                .map(|c| FnSpec::from_fn(&c.w, Some(blocks_of(c.depends_on))))
                .collect::<anyhow::Result<_>>()?,
            v0: pc.v0().to_vec(),
            v1: pc.v1().to_vec(),
            analytic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX51: &str = include_str!("../fixtures/example51.json");
    const POLY: &str = include_str!("../fixtures/polyhedral_tiny.json");

    #[test]
    fn fixtures_are_canonical_and_round_trip() {
        for text in [EX51, POLY] {
            let file = ProblemFile::parse(text).unwrap();
            let pc = file.to_problem().unwrap();
            let back = ProblemFile::from_problem(&pc, file.analytic.clone()).unwrap();
            assert_eq!(back.to_canonical().unwrap(), text);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EX51.replacen("\"n\": 1", "\"n\": 1,\n  \"extra\": 2", 1);
        assert!(ProblemFile::parse(&bad).is_err());
        let bad = EX51.replacen("\"kind\": \"affine\"", "\"kind\": \"affine\", \"scale\": 1", 1);
        assert!(ProblemFile::parse(&bad).is_err());
    }

    #[test]
    fn depends_on_must_match_affine_blocks() {
        let mut file = ProblemFile::parse(EX51).unwrap();
        if let FnSpec::Affine { depends_on, .. } = &mut file.constraints[0] {
            *depends_on = Some(vec![Block::X]);
        }
        assert!(file.to_problem().is_err());
        if let FnSpec::Affine { depends_on, .. } = &mut file.constraints[0] {
            *depends_on = Some(vec![Block::X, Block::V1, Block::V2]);
        }
        assert!(file.to_problem().is_err());
        if let FnSpec::Affine { depends_on, .. } = &mut file.constraints[0] {
            *depends_on = None;
        }
        assert!(file.to_problem().is_err());
    }

    #[test]
    fn analytic_forms() {
        let e = Analytic::Exponential { coefficient: 2.0, rate: 0.5 };
        assert!((e.eval(2.0) - 2.0 * 1f64.exp()).abs() < 1e-15);
        let p = Analytic::Polynomial { coefficients: vec![1.0, 0.0, 3.0] };
        assert_eq!(p.eval(2.0), 13.0);
    }
}
