//! The linear maps between subgradients of the composed functions `Φ_k` and
//! of the original `W_k`, and finitely generated cone membership.

use nalgebra::{DMatrix, DVector};

use crate::convexfn::SubdiffSet;
use crate::error::{check_dim, Error, Result};

/// Default relative tolerance for cone membership.
pub const DEFAULT_CONE_TOL: f64 = 1e-9;

/// Bound on the side conditions of the reduced maps.
pub const SIDE_CONDITION_TOL: f64 = 1e-10;

/// A subgradient split into its three n-blocks `(x̄*, v̄1*, v̄2*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradTriple {
    pub xs: Vec<f64>,
    pub v1s: Vec<f64>,
    pub v2s: Vec<f64>,
}

impl SubgradTriple {
    pub fn new(xs: Vec<f64>, v1s: Vec<f64>, v2s: Vec<f64>) -> Result<Self> {
        check_dim("subgradient v1 block", xs.len(), v1s.len())?;
        check_dim("subgradient v2 block", xs.len(), v2s.len())?;
        Ok(SubgradTriple { xs, v1s, v2s })
    }

    pub fn zeros(n: usize) -> Self {
        SubgradTriple {
            xs: vec![0.0; n],
            v1s: vec![0.0; n],
            v2s: vec![0.0; n],
        }
    }

    /// Split a stacked 3n-vector.
    pub fn from_stacked(z: &[f64]) -> Result<Self> {
        if z.len() % 3 != 0 {
            return Err(Error::Dimension {
                context: "stacked subgradient",
                expected: 3 * (z.len() / 3 + 1),
                got: z.len(),
            });
        }
        let n = z.len() / 3;
        Ok(SubgradTriple {
            xs: z[..n].to_vec(),
            v1s: z[n..2 * n].to_vec(),
            v2s: z[2 * n..].to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.xs.clone();
        v.extend_from_slice(&self.v1s);
        v.extend_from_slice(&self.v2s);
        v
    }

    pub fn max_abs_diff(&self, other: &SubgradTriple) -> f64 {
        self.stacked()
            .iter()
            .zip(other.stacked())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("grid step must be positive, got {delta}")))
    }
}

/// `(x̄*, v̄1*, v̄2*) ↦ (x̄* + v̄1* + v̄2*, δv̄1* + 2δv̄2*, δ²v̄2*)`.
pub fn phi_to_w(g: &SubgradTriple, delta: f64) -> Result<SubgradTriple> {
    check_delta(delta)?;
    let n = g.n();
    let mut out = SubgradTriple::zeros(n);
    for j in 0..n {
        let (x, v1, v2) = (g.xs[j], g.v1s[j], g.v2s[j]);
        out.xs[j] = x + v1 + v2;
        out.v1s[j] = delta * v1 + 2.0 * delta * v2;
        out.v2s[j] = delta * delta * v2;
    }
    Ok(out)
}

/// Inverse of [`phi_to_w`]; the result is also the chain-rule gradient of
/// `Φ` given a gradient of `W`.
pub fn w_to_phi(g: &SubgradTriple, delta: f64) -> Result<SubgradTriple> {
    check_delta(delta)?;
    let n = g.n();
    let mut out = SubgradTriple::zeros(n);
    for j in 0..n {
        let v2 = g.v2s[j] / (delta * delta);
        let v1 = g.v1s[j] / delta - 2.0 * g.v2s[j] / (delta * delta);
        out.v2s[j] = v2;
        out.v1s[j] = v1;
        out.xs[j] = g.xs[j] - v1 - v2;
    }
    Ok(out)
}

/// `(x̄* − v̄2*, δ²v̄2*)`, valid when `v̄1* = −2v̄2*`.
pub fn reduced_to_w1(g: &SubgradTriple, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_delta(delta)?;
    let side = g
        .v1s
        .iter()
        .zip(&g.v2s)
        .fold(0.0_f64, |m, (a, b)| m.max((a + 2.0 * b).abs()));
    if side > SIDE_CONDITION_TOL {
        return Err(Error::Precondition(format!(
            "reduction to (x, v2) needs v1 block = -2 * v2 block (violation {side:e})"
        )));
    }
    let x = g.xs.iter().zip(&g.v2s).map(|(a, b)| a - b).collect();
    let v2 = g.v2s.iter().map(|b| delta * delta * b).collect();
    Ok((x, v2))
}

/// `(x̄* + v̄1*, δv̄1*)`, valid when `v̄2* = 0`.
pub fn reduced_to_w2(g: &SubgradTriple, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_delta(delta)?;
    let side = g.v2s.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    if side > SIDE_CONDITION_TOL {
        return Err(Error::Precondition(format!(
            "reduction to (x, v1) needs a zero v2 block (violation {side:e})"
        )));
    }
    let x = g.xs.iter().zip(&g.v1s).map(|(a, b)| a + b).collect();
    let v1 = g.v1s.iter().map(|b| delta * b).collect();
    Ok((x, v1))
}

/// Rays of a finitely generated cone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeGenerators {
    pub generators: Vec<DVector<f64>>,
}

impl ConeGenerators {
    pub fn new(generators: Vec<DVector<f64>>) -> Self {
        ConeGenerators { generators }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub coefficients: Vec<f64>,
    /// `‖Σ λᵢ gᵢ − target‖₂` at the returned coefficients.
    pub residual: f64,
}

/// Lawson–Hanson active-set solution of `min ‖Ax − b‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    check_dim("nnls right-hand side", rows, b.len())?;
    let mut x = DVector::zeros(cols);
    if cols == 0 {
        return Ok(x);
    }
    let scale = a.amax().max(f64::MIN_POSITIVE) * b.amax().max(1.0);
    let tol = 1e-13 * scale * (rows.max(cols) as f64);
    let mut passive = vec![false; cols];
    let max_outer = 3 * cols + 30;
    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..cols)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            return Ok(x);
        };
        passive[j] = true;
        for _ in 0..max_outer {
            let z = passive_lstsq(a, b, &passive)?;
            let blocking: Vec<usize> = (0..cols).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if blocking.is_empty() {
                x = z;
                break;
            }
            let step = blocking
                .iter()
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            for i in 0..cols {
                if passive[i] {
                    x[i] += step * (z[i] - x[i]);
                    if x[i] <= 1e-15 * (1.0 + x.amax()) {
                        x[i] = 0.0;
                        passive[i] = false;
                    }
                }
            }
        }
    }
    Err(Error::Numerical("nnls did not terminate".into()))
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(idx.iter());
    // Householder QR is markedly more accurate than the SVD path here; fall
    // back to SVD only for (numerically) rank-deficient passive sets.
    let qr = sub.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    let well_posed = sub.nrows() >= sub.ncols()
        && r.diagonal().iter().all(|d| d.abs() > 1e-12 * rmax.max(f64::MIN_POSITIVE));
    let solved = if well_posed {
        r.solve_upper_triangular(&(qr.q().transpose() * b))
    } else {
        None
    };
    let sol = match solved {
        Some(s) => s,
        None => sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?,
    };
    let mut z = DVector::zeros(passive.len());
    for (p, &i) in idx.iter().enumerate() {
        z[i] = sol[p];
    }
    Ok(z)
}

fn generator_matrix(dim: usize, gens: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(dim, gens.len());
    for (j, g) in gens.iter().enumerate() {
        check_dim("cone generator", dim, g.len())?;
        a.set_column(j, g);
    }
    Ok(a)
}

/// Is `target` a nonnegative combination of the generators? Member iff the
/// NNLS residual is at most `tol·(1 + ‖target‖)`.
pub fn cone_membership(target: &DVector<f64>, cone: &ConeGenerators, tol: f64) -> Result<Membership> {
    let bound = tol * (1.0 + target.norm());
    if cone.generators.is_empty() {
        let residual = target.norm();
        return Ok(Membership {
            member: residual <= bound,
            coefficients: Vec::new(),
            residual,
        });
    }
    let a = generator_matrix(target.len(), &cone.generators)?;
    let coeffs = nnls(&a, target)?;
    let residual = (&a * &coeffs - target).norm();
    Ok(Membership {
        member: residual <= bound,
        coefficients: coeffs.iter().copied().collect(),
        residual,
    })
}

/// Membership of `target` in `Σ_k cone(∂W_k)` with every generator of every
/// group as a separate ray. Returns per-group multipliers (sum of the ray
/// weights in each group).
pub fn grouped_cone_membership(
    target: &DVector<f64>,
    groups: &[&SubdiffSet],
    tol: f64,
) -> Result<(Membership, Vec<f64>)> {
    let mut rays = Vec::new();
    let mut owner = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        for r in &g.generators {
            rays.push(r.clone());
            owner.push(k);
        }
    }
    let m = cone_membership(target, &ConeGenerators::new(rays), tol)?;
    let mut per_group = vec![0.0; groups.len()];
    for (c, &k) in m.coefficients.iter().zip(&owner) {
        per_group[k] += c;
    }
    Ok((m, per_group))
}

/// `min ‖target − Σ_k α_k s_k‖₂` over `s_k ∈ conv(sets[k])` with fixed weights.
/// Returns the residual and the chosen convex weights per set.
pub fn fixed_weight_residual(
    target: &DVector<f64>,
    weights: &[f64],
    sets: &[&SubdiffSet],
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_dim("multiplier weights", sets.len(), weights.len())?;
    let dim = target.len();
    let mut rhs = target.clone();
    let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(sets.len());
    let mut free: Vec<(usize, usize)> = Vec::new();
    for (k, s) in sets.iter().enumerate() {
        if s.generators.is_empty() {
            return Err(Error::Config("empty subdifferential".into()));
        }
        for g in &s.generators {
            check_dim("subdifferential generator", dim, g.len())?;
        }
        if s.generators.len() == 1 || weights[k] == 0.0 {
            rhs -= &s.generators[0] * weights[k];
            let mut theta = vec![0.0; s.generators.len()];
            theta[0] = 1.0;
            thetas.push(theta);
        } else {
            for j in 0..s.generators.len() {
                free.push((k, j));
            }
            thetas.push(vec![0.0; s.generators.len()]);
        }
    }
    if free.is_empty() {
        return Ok((rhs.norm(), thetas));
    }
    // Simplex constraints enforced by heavily weighted rows Σθ = 1.
    let groups: Vec<usize> = {
        let mut g: Vec<usize> = free.iter().map(|&(k, _)| k).collect();
        g.dedup();
        g
    };
    let mut a = DMatrix::zeros(dim + groups.len(), free.len());
    let mut b = DVector::zeros(dim + groups.len());
    b.rows_mut(0, dim).copy_from(&rhs);
    let mut scale = 1.0_f64;
    for (col, &(k, j)) in free.iter().enumerate() {
        let g = &sets[k].generators[j] * weights[k];
        scale = scale.max(g.amax());
        a.view_mut((0, col), (dim, 1)).copy_from(&g);
    }
    let big = 1e4 * scale.max(rhs.amax());
    for (row, &k) in groups.iter().enumerate() {
        b[dim + row] = big;
        for (col, &(kk, _)) in free.iter().enumerate() {
            if kk == k {
                a[(dim + row, col)] = big;
            }
        }
    }
    let sol = nnls(&a, &b)?;
    for (col, &(k, j)) in free.iter().enumerate() {
        thetas[k][j] = sol[col];
    }
    let mut resid = rhs;
    for &k in &groups {
        let total: f64 = thetas[k].iter().sum();
        if total > 0.0 {
            thetas[k].iter_mut().for_each(|t| *t /= total);
        } else {
            thetas[k][0] = 1.0;
        }
        for (j, &t) in thetas[k].iter().enumerate() {
            resid -= &sets[k].generators[j] * (weights[k] * t);
        }
    }
    Ok((resid.norm(), thetas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(x: f64, v1: f64, v2: f64) -> SubgradTriple {
        SubgradTriple::new(vec![x], vec![v1], vec![v2]).unwrap()
    }

    #[test]
    fn phi_to_w_examples() {
        assert_eq!(phi_to_w(&t(0.0, 0.0, 0.0), 0.3).unwrap(), t(0.0, 0.0, 0.0));
        assert_eq!(phi_to_w(&t(1.0, 2.0, 4.0), 0.5).unwrap(), t(7.0, 5.0, 1.0));
        assert_eq!(phi_to_w(&t(1.0, 0.0, 0.0), 0.01).unwrap(), t(1.0, 0.0, 0.0));
        assert!(matches!(phi_to_w(&t(1.0, 0.0, 0.0), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn w_to_phi_examples() {
        assert_eq!(w_to_phi(&t(0.0, 0.0, 0.0), 0.1).unwrap(), t(0.0, 0.0, 0.0));
        assert_eq!(w_to_phi(&t(7.0, 5.0, 1.0), 0.5).unwrap(), t(1.0, 2.0, 4.0));
        assert!(matches!(w_to_phi(&t(1.0, 0.0, 0.0), -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn reduced_examples() {
        assert_eq!(reduced_to_w1(&t(0.0, 0.0, 0.0), 0.2).unwrap(), (vec![0.0], vec![0.0]));
        assert_eq!(reduced_to_w1(&t(3.0, -2.0, 1.0), 0.5).unwrap(), (vec![2.0], vec![0.25]));
        assert!(matches!(reduced_to_w1(&t(1.0, 0.0, 1.0), 0.5), Err(Error::Precondition(_))));

        assert_eq!(reduced_to_w2(&t(0.0, 0.0, 0.0), 0.2).unwrap(), (vec![0.0], vec![0.0]));
        let (x, v1) = reduced_to_w2(&t(1.0, 2.0, 0.0), 0.1).unwrap();
        assert_eq!(x, vec![3.0]);
        assert_relative_eq!(v1[0], 0.2, epsilon = 1e-16);
        assert!(matches!(reduced_to_w2(&t(1.0, 2.0, 1.0), 0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn cone_examples() {
        let cone = ConeGenerators::new(vec![DVector::from_vec(vec![1.0, -3.0])]);
        let apex = cone_membership(&DVector::zeros(2), &cone, DEFAULT_CONE_TOL).unwrap();
        assert!(apex.member);
        assert_eq!(apex.coefficients, vec![0.0]);

        let m = cone_membership(&DVector::from_vec(vec![2.0, -6.0]), &cone, DEFAULT_CONE_TOL).unwrap();
        assert!(m.member);
        assert_relative_eq!(m.coefficients[0], 2.0, epsilon = 1e-12);

        let target = DVector::from_vec(vec![1.0, 1.0]);
        let m = cone_membership(&target, &cone, DEFAULT_CONE_TOL).unwrap();
        assert!(!m.member);
        // projection of (1,1) on the ray direction is negative, so λ = 0
        assert_eq!(m.coefficients, vec![0.0]);
        assert_relative_eq!(m.residual, 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn empty_cone_cases() {
        let empty = ConeGenerators::default();
        assert!(cone_membership(&DVector::zeros(3), &empty, 1e-9).unwrap().member);
        let m = cone_membership(&DVector::from_vec(vec![0.0, 1.0]), &empty, 1e-9).unwrap();
        assert!(!m.member);
        assert!(m.coefficients.is_empty());
    }

    #[test]
    fn nnls_matches_known_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let x = nnls(&a, &b).unwrap();
        // unconstrained optimum is (1, -1); with x2 ≥ 0 the optimum is (0.5, 0)
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-12);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn fixed_weight_hull_of_abs_kink() {
        let set = SubdiffSet {
            generators: vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])],
            is_singleton: false,
        };
        let (r, th) = fixed_weight_residual(&DVector::from_vec(vec![0.5]), &[1.0], &[&set]).unwrap();
        assert!(r < 1e-9);
        assert_relative_eq!(th[0][0], 0.75, epsilon = 1e-6);
        let (r, _) = fixed_weight_residual(&DVector::from_vec(vec![1.5]), &[1.0], &[&set]).unwrap();
        assert_relative_eq!(r, 0.5, epsilon = 1e-6);
        let (rg, per) = grouped_cone_membership(&DVector::from_vec(vec![-2.0]), &[&set], 1e-9).unwrap();
        assert!(rg.member);
        assert_relative_eq!(per[0], 2.0, epsilon = 1e-12);
    }
}
