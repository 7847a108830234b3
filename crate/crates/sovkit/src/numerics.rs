//! Scalar and polynomial substrate: parity-structured Laurent polynomials,
//! node/asymptotics reconstruction, Newton refinement, nullspace extraction,
//! and the dense eigensolver backend.

use crate::{C64, CMat, CVec, Error, Result};
use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Rational exponent shift of a [`LaurentPoly`].
pub type Shift = Ratio<i64>;

/// A Laurent polynomial with parity structure
/// `value(lam) = lam^s * sum_{k=0}^{d} c_k lam^{2k}`,
/// where the shift `s` may be rational (fractional classes arise for
/// non-diagonal twists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentPoly {
    pub shift: Shift,
    pub coeffs: Vec<C64>,
}

impl LaurentPoly {
    pub fn new(shift: Shift, coeffs: Vec<C64>) -> Self {
        assert!(!coeffs.is_empty(), "a Laurent polynomial needs at least one coefficient");
        Self { shift, coeffs }
    }

    pub fn zero(shift: Shift) -> Self {
        Self { shift, coeffs: vec![C64::new(0.0, 0.0)] }
    }

    pub fn constant(c: C64) -> Self {
        Self { shift: Ratio::new(0, 1), coeffs: vec![c] }
    }

    /// `(lam/x - x/lam)` as a Laurent polynomial: shift -1, coefficients `[-x, 1/x]`.
    pub fn node_factor(x: C64) -> Self {
        Self { shift: Ratio::new(-1, 1), coeffs: vec![-x, 1.0 / x] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn shift_f64(&self) -> f64 {
        *self.shift.numer() as f64 / *self.shift.denom() as f64
    }

    /// Evaluate at `lam` with the principal branch of `ln lam`.
    pub fn eval(&self, lam: C64) -> C64 {
        self.eval_log(lam.ln())
    }

    /// Evaluate with a caller-supplied logarithm of the argument; shifted
    /// arguments inside one construction must stay on one coherent branch.
    pub fn eval_log(&self, log_lam: C64) -> C64 {
        let lam2 = (log_lam * 2.0).exp();
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * lam2 + c;
        }
        acc * (log_lam * self.shift_f64()).exp()
    }

    /// Leading coefficient `c_d`.
    pub fn leading(&self) -> C64 {
        *self.coeffs.last().unwrap()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { shift: self.shift, coeffs: self.coeffs.iter().map(|z| z * c).collect() }
    }

    /// Product; shifts add and coefficient arrays convolve.
    pub fn mul(&self, other: &Self) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self { shift: self.shift + other.shift, coeffs }
    }

    /// Sum of two polynomials in the same parity class (shifts differ by an
    /// even integer). Panics on class mismatch; callers align classes.
    pub fn add(&self, other: &Self) -> Self {
        let diff = self.shift - other.shift;
        assert!(
            diff.is_integer() && diff.numer() % 2 == 0,
            "parity class mismatch: {} vs {}",
            self.shift,
            other.shift
        );
        let d = diff.to_integer() / 2;
        let (lo, hi, off) = if d >= 0 { (other, self, d as usize) } else { (self, other, (-d) as usize) };
        // lo has the smaller shift; hi's coefficients sit off steps higher
        let len = lo.coeffs.len().max(hi.coeffs.len() + off);
        let mut coeffs = vec![C64::new(0.0, 0.0); len];
        for (k, &c) in lo.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        for (k, &c) in hi.coeffs.iter().enumerate() {
            coeffs[k + off] += c;
        }
        Self { shift: lo.shift, coeffs }
    }

    /// Product of node factors `prod_a (lam/x_a - x_a/lam)`.
    pub fn from_node_factors(xs: &[C64]) -> Self {
        let mut p = Self::constant(C64::new(1.0, 0.0));
        for &x in xs {
            p = p.mul(&Self::node_factor(x));
        }
        p
    }

    /// Exact interpolation in the class `lam^s * C[lam^2]_{<= nodes-1}`.
    pub fn fit_nodes(shift: Shift, nodes: &[C64], values: &[C64]) -> Result<Self> {
        assert_eq!(nodes.len(), values.len());
        let n = nodes.len();
        let s = *shift.numer() as f64 / *shift.denom() as f64;
        let a = DMatrix::from_fn(n, n, |i, k| nodes[i].powu(2 * k as u32));
        let b = CVec::from_fn(n, |i, _| values[i] * (-nodes[i].ln() * s).exp());
        let lu = a.lu();
        let sol = lu
            .solve(&b)
            .ok_or_else(|| Error::IllPosedInterpolation("singular interpolation node system".into()))?;
        Ok(Self { shift, coeffs: sol.iter().copied().collect() })
    }

    /// Zeros `lam_j` of the polynomial in the right half of each `(lam, -lam)`
    /// pair: square roots of the roots of `P(z) = sum c_k z^k`.
    pub fn paired_roots(&self) -> Result<Vec<C64>> {
        let lead = self.leading();
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return Err(Error::QForm("zero polynomial has no root structure".into()));
        }
        if lead.norm() < 1e-12 * scale {
            return Err(Error::QForm("leading coefficient vanishes".into()));
        }
        let zroots = poly_roots(&self.coeffs)?;
        Ok(zroots.into_iter().map(|z| z.sqrt()).collect())
    }
}

/// Interpolation weight `f_{l,h}^{(m)}(lam)`: the cardinal function attached
/// to node `xi_l^{(h_l)} = xi_l / q^{h_l}` in the reconstruction of the m-th
/// transfer-matrix level. It is the product of
///
/// * a balance factor `(t_h lam/X + X/(t_h lam)) / (t_h + 1/t_h)` with
///   `t_h = q^{-sum h}` and `X = xi_l^{(h_l)}` (diagonal twists only; it
///   carries the asymptotic bookkeeping),
/// * the central-zero product over `r = 1..m-1` vanishing at `±q^r xi_b`,
/// * the Lagrange product over the other shifted nodes,
///
/// normalized so that `f_{l,h}(xi_b^{(h_b)}) = delta_{lb}`.
pub fn interpolation_weight(
    params: &crate::model::ModelParams,
    m: usize,
    l: usize,
    h: &[usize],
    lam: C64,
) -> Result<C64> {
    Ok(interp_weight_poly(params, m, l, h)?.eval(lam))
}

/// Exact coefficient form of [`interpolation_weight`] (shift `-mN`, degree `mN`
/// in `lam^2` for diagonal twists).
pub fn interp_weight_poly(
    params: &crate::model::ModelParams,
    m: usize,
    l: usize,
    h: &[usize],
) -> Result<LaurentPoly> {
    let nsites = params.sites;
    assert!(m >= 1, "level index starts at 1");
    assert_eq!(h.len(), nsites);
    assert!(l < nsites);
    if h.iter().any(|&hk| hk >= params.rank) {
        return Err(Error::Domain("offset tuple entry out of range".into()));
    }
    let q = params.q();
    let nodes: Vec<C64> = (0..nsites).map(|b| params.xi[b] / q.powu(h[b] as u32)).collect();
    let x = nodes[l];
    let mut poly = LaurentPoly::constant(C64::new(1.0, 0.0));
    let mut denom = C64::new(1.0, 0.0);
    if params.twist.is_diagonal() {
        let th = (params.eta * (-(h.iter().sum::<usize>() as f64))).exp();
        let bal_den = th + 1.0 / th;
        poly = poly.mul(&LaurentPoly::new(
            Ratio::new(-1, 1),
            vec![x / th / bal_den, th / x / bal_den],
        ));
    }
    for b in 0..nsites {
        for r in 1..m {
            let z = params.xi[b] * q.powu(r as u32);
            poly = poly.mul(&LaurentPoly::node_factor(z));
            denom *= x / z - z / x;
        }
    }
    for (b, &zb) in nodes.iter().enumerate() {
        if b == l {
            continue;
        }
        poly = poly.mul(&LaurentPoly::node_factor(zb));
        denom *= x / zb - zb / x;
    }
    if denom.norm() < 1e-280 {
        return Err(Error::IllPosedInterpolation(
            "shift collision among evaluation nodes".into(),
        ));
    }
    Ok(poly.scale(1.0 / denom))
}

/// Result of a node/asymptotics reconstruction.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub poly: LaurentPoly,
    /// Defect of the over-determined system (the sum-rule defect when one
    /// more datum than unknowns is supplied); 0 by construction otherwise.
    pub consistency_residual: f64,
    pub condition_estimate: f64,
}

/// Reconstruct the unique `lam^s * sum_{k<=d} c_k lam^{2k}` matching the node
/// values, with optionally pinned leading (`c_d`, from the `lam -> inf`
/// asymptotics) and trailing (`c_0`, from `lam -> 0`) coefficients. When the
/// data over-determine the coefficients by one, the defect is reported as
/// `consistency_residual`.
pub fn reconstruct_laurent(
    nodes: &[C64],
    values: &[C64],
    leading_pos: Option<C64>,
    leading_neg: Option<C64>,
    shift: Shift,
    degree: usize,
) -> Result<ReconstructionReport> {
    let reports = reconstruct_laurent_multi(nodes, &[values.to_vec()], leading_pos.map(|c| vec![c]), leading_neg.map(|c| vec![c]), shift, degree)?;
    Ok(reports.into_iter().next().unwrap())
}

/// Batched variant: all right-hand sides share the node set, so the SVD is
/// factored once. `leading_pos[j]` / `leading_neg[j]` pin `c_d` / `c_0` of the
/// j-th polynomial.
pub fn reconstruct_laurent_multi(
    nodes: &[C64],
    values: &[Vec<C64>],
    leading_pos: Option<Vec<C64>>,
    leading_neg: Option<Vec<C64>>,
    shift: Shift,
    degree: usize,
) -> Result<Vec<ReconstructionReport>> {
    assert!(values.iter().all(|v| v.len() == nodes.len()));
    let n = nodes.len();
    let nrhs = values.len();
    let pin_hi = leading_pos.is_some();
    let pin_lo = leading_neg.is_some();
    let free: Vec<usize> = (0..=degree)
        .filter(|&k| !(pin_lo && k == 0) && !(pin_hi && k == degree))
        .collect();
    let supplied = n + pin_hi as usize + pin_lo as usize;
    if supplied < degree + 1 {
        return Err(Error::IllPosedInterpolation(format!(
            "{supplied} data for {} coefficients",
            degree + 1
        )));
    }
    let s = *shift.numer() as f64 / *shift.denom() as f64;
    let a = DMatrix::from_fn(n, free.len(), |i, j| nodes[i].powu(2 * free[j] as u32));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    let smin = svd.singular_values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !free.is_empty() && smin < 1e-14 * smax {
        return Err(Error::IllConditioned(cond));
    }

    let mut out = Vec::with_capacity(nrhs);
    for (j, vals) in values.iter().enumerate() {
        let mut rhs = CVec::from_fn(n, |i, _| vals[i] * (-nodes[i].ln() * s).exp());
        let mut coeffs = vec![C64::new(0.0, 0.0); degree + 1];
        if let Some(lo) = &leading_neg {
            coeffs[0] = lo[j];
            for i in 0..n {
                rhs[i] -= lo[j];
            }
        }
        if let Some(hi) = &leading_pos {
            coeffs[degree] = hi[j];
            for i in 0..n {
                rhs[i] -= hi[j] * nodes[i].powu(2 * degree as u32);
            }
        }
        let scale = rhs.iter().fold(0.0f64, |m, z| m.max(z.norm()))
            .max(coeffs.iter().fold(0.0f64, |m, z| m.max(z.norm())));
        let (sol, resid) = if free.is_empty() {
            (CVec::zeros(0), rhs.norm())
        } else {
            let sol = svd
                .solve(&rhs, 1e-14 * smax)
                .map_err(|_| Error::IllConditioned(cond))?;
            let resid = (&a * &sol - &rhs).norm();
            (sol, resid)
        };
        for (idx, &k) in free.iter().enumerate() {
            coeffs[k] = sol[idx];
        }
        out.push(ReconstructionReport {
            poly: LaurentPoly { shift, coeffs },
            consistency_residual: resid / scale.max(f64::MIN_POSITIVE),
            condition_estimate: cond,
        });
    }
    Ok(out)
}

/// Outcome of a Newton refinement.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub point: Vec<C64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian_condition: f64,
}

/// Newton refinement of `residual_fn(x) = 0` in `C^N`, Jacobian by central
/// finite differences with step `1e-7 * (1 + |x_j|)`. Never silently returns
/// an unconverged point: `converged` reflects the final residual against
/// `tolerance` (relative to `scale`).
pub fn newton_refine<F>(
    residual_fn: F,
    seed: &[C64],
    max_iter: usize,
    tolerance: f64,
    scale: f64,
) -> NewtonReport
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = seed.len();
    let mut x = seed.to_vec();
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = scale.max(f64::MIN_POSITIVE);
    let mut fx = residual_fn(&x);
    let mut best_cond = 0.0f64;
    let mut iters = 0;
    for _ in 0..max_iter {
        if norm(&fx) / scale <= tolerance {
            break;
        }
        iters += 1;
        let mut jac = CMat::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + x[j].norm());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += C64::new(h, 0.0);
            xm[j] -= C64::new(h, 0.0);
            let (fp, fm) = (residual_fn(&xp), residual_fn(&xm));
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let svd = jac.clone().svd(false, false);
        let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
        let smin = svd.singular_values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        best_cond = best_cond.max(if smin > 0.0 { smax / smin } else { f64::INFINITY });
        let rhs = CVec::from_fn(n, |i, _| -fx[i]);
        match jac.lu().solve(&rhs) {
            Some(step) => {
                for j in 0..n {
                    x[j] += step[j];
                }
            }
            None => break,
        }
        fx = residual_fn(&x);
    }
    let residual_norm = norm(&fx) / scale;
    NewtonReport {
        point: x,
        residual_norm,
        iterations: iters,
        converged: residual_norm <= tolerance,
        jacobian_condition: best_cond,
    }
}

/// Right-singular direction of the smallest singular value, plus the two
/// smallest singular values so callers can assert kernel dimension one via a
/// gap test. The singular spectrum is zero-padded to the column count, so a
/// structurally rectangular kernel reports `sigma_min = 0`.
#[derive(Debug, Clone)]
pub struct NullspaceReport {
    pub direction: Vec<C64>,
    pub sigma_min: f64,
    pub sigma_second: f64,
}

pub fn nullspace_direction(matrix: &CMat) -> NullspaceReport {
    let (rows, cols) = matrix.shape();
    assert!(rows + 1 >= cols, "need row count >= column count - 1");
    // pad with zero rows so the full right-singular basis is available
    let mut m = CMat::zeros(rows.max(cols), cols);
    m.view_mut((0, 0), (rows, cols)).copy_from(matrix);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("SVD with v_t requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.resize(cols, 0.0);
    // nalgebra returns singular values in descending order
    let direction: Vec<C64> = (0..cols).map(|j| vt[(cols - 1, j)].conj()).collect();
    let sigma_min = sv[cols - 1];
    let sigma_second = if cols >= 2 { sv[cols - 2] } else { f64::INFINITY };
    NullspaceReport { direction, sigma_min, sigma_second }
}

/// Dense eigendecomposition of a general complex matrix. Returns the
/// eigenvalues and the matrix of right eigenvectors (columns, unit norm).
pub fn eigendecompose(mat: &CMat) -> Result<(Vec<C64>, CMat)> {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols());
    let fm = faer::Mat::from_fn(n, n, |i, j| mat[(i, j)]);
    let evd = fm
        .eigen()
        .map_err(|e| Error::Domain(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let vals: Vec<C64> = (0..n).map(|i| s[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for k in 0..n {
        let mut col = CVec::from_fn(n, |i, _| u[(i, k)]);
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= C64::new(nrm, 0.0);
        }
        vecs.set_column(k, &col);
    }
    Ok((vals, vecs))
}

/// Roots of `sum_k c_k z^k` via the companion matrix.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().unwrap().norm() == 0.0 {
        c.pop();
    }
    let d = c.len() - 1;
    if d == 0 {
        return Ok(vec![]);
    }
    let lead = c[d];
    let comp = CMat::from_fn(d, d, |i, j| {
        if j == d - 1 {
            -c[i] / lead
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let (vals, _) = eigendecompose(&comp)?;
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn node_factor_vanishes_at_node() {
        let p = LaurentPoly::node_factor(c(1.3, 0.4));
        assert!(p.eval(c(1.3, 0.4)).norm() < 1e-15);
        assert!(p.eval(c(-1.3, -0.4)).norm() < 1e-14);
    }

    #[test]
    fn parity_of_integer_shift() {
        // value(-lam) = (-1)^s value(lam) for integer shift s
        let p = LaurentPoly::new(Ratio::new(-3, 1), vec![c(1.0, 0.2), c(0.5, -1.0), c(2.0, 0.0)]);
        let lam = c(0.83, 0.41);
        let a = p.eval(lam);
        let b = p.eval(-lam);
        assert!((a + b).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn reconstruct_zero_data_gives_zero_poly() {
        let nodes = [c(1.0, 0.1), c(0.7, -0.3), c(1.4, 0.2)];
        let values = [c(0.0, 0.0); 3];
        let rep = reconstruct_laurent(&nodes, &values, Some(c(0.0, 0.0)), Some(c(0.0, 0.0)), Ratio::new(-3, 1), 3).unwrap();
        assert!(rep.poly.coeffs.iter().all(|z| z.norm() < 1e-14));
        assert!(rep.consistency_residual < 1e-14);
    }

    #[test]
    fn reconstruct_recovers_sampled_poly() {
        let p = LaurentPoly::new(Ratio::new(-2, 1), vec![c(0.3, -0.7), c(1.1, 0.2), c(-0.4, 0.9)]);
        let nodes: Vec<C64> = (0..2).map(|k| c(0.8 + 0.3 * k as f64, 0.2 - 0.1 * k as f64)).collect();
        let values: Vec<C64> = nodes.iter().map(|&z| p.eval(z)).collect();
        let rep = reconstruct_laurent(&nodes, &values, Some(p.coeffs[2]), Some(p.coeffs[0]), Ratio::new(-2, 1), 2).unwrap();
        for (a, b) in rep.poly.coeffs.iter().zip(&p.coeffs) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn perturbed_node_shows_in_defect() {
        // one datum more than unknowns: defect detects inconsistency
        let p = LaurentPoly::new(Ratio::new(-3, 1), vec![c(0.5, 0.1), c(1.0, -0.2), c(0.7, 0.4), c(-0.2, 0.6)]);
        let nodes: Vec<C64> = (0..3).map(|k| c(0.9 + 0.25 * k as f64, 0.15 * k as f64 - 0.1)).collect();
        let mut values: Vec<C64> = nodes.iter().map(|&z| p.eval(z)).collect();
        let clean = reconstruct_laurent(&nodes, &values, Some(p.coeffs[3]), Some(p.coeffs[0]), p.shift, 3).unwrap();
        assert!(clean.consistency_residual < 1e-12);
        values[1] *= c(1.001, 0.0);
        let dirty = reconstruct_laurent(&nodes, &values, Some(p.coeffs[3]), Some(p.coeffs[0]), p.shift, 3).unwrap();
        assert!(dirty.consistency_residual > 1e-4, "defect {}", dirty.consistency_residual);
    }

    #[test]
    fn newton_linear_in_one_step() {
        let target = [c(0.3, -1.2), c(2.0, 0.5)];
        let rep = newton_refine(
            |x| x.iter().zip(&target).map(|(a, b)| a - b).collect(),
            &[c(5.0, 5.0), c(-3.0, 0.1)],
            5,
            1e-12,
            1.0,
        );
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        for (a, b) in rep.point.iter().zip(&target) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn nullspace_of_padded_identity() {
        // identity with an extra zero column: kernel along the last axis
        let mut m = CMat::zeros(3, 4);
        for i in 0..3 {
            m[(i, i)] = c(1.0, 0.0);
        }
        let rep = nullspace_direction(&m);
        assert!(rep.sigma_min < 1e-15);
        assert!((rep.sigma_second - 1.0).abs() < 1e-12);
        assert!((rep.direction[3].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn companion_roots() {
        // (z - 2)(z + i) = z^2 + (i - 2) z - 2i
        let roots = poly_roots(&[c(0.0, -2.0), c(-2.0, 1.0), c(1.0, 0.0)]).unwrap();
        let mut ok2 = false;
        let mut oki = false;
        for r in roots {
            if (r - c(2.0, 0.0)).norm() < 1e-10 {
                ok2 = true;
            }
            if (r - c(0.0, -1.0)).norm() < 1e-10 {
                oki = true;
            }
        }
        assert!(ok2 && oki);
    }
}
