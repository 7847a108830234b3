//! Chain definition: R-matrix, twist matrices, monodromy/transfer matrix,
//! occupation-number operators, and the quantum-determinant scalar.
//!
//! Conventions, fixed once and verified by the golden fixtures in the tests:
//!
//! * `R(lam) = (lam q - 1/(lam q)) sum_k E_kk(x)E_kk + (lam - 1/lam) sum_{k!=p} E_kk(x)E_pp
//!    + (q - 1/q) sum_{k<p} [ lam^{-w} E_kp(x)E_pk + lam^{+w} E_pk(x)E_kp ]`,
//!   `w = (n - 2(p-k))/n`, first tensor slot = auxiliary space, Kronecker
//!   ordering with the first slot slowest.
//! * Fractional powers are taken on one coherent branch per evaluation: the
//!   input spectral point contributes its principal logarithm, and internal
//!   shifts by `q^j` and `xi_k` are done by arithmetic on logarithms. For a
//!   diagonal twist every transfer-matrix entry then collapses to an exact
//!   integer-power Laurent polynomial.
//! * The quantum-space basis is lexicographic in site-local states, site 1
//!   slowest.

use crate::{C64, CMat, CVec, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Twist matrix specification. `Diagonal` works for any rank; the two cyclic
/// classes are the extra scalar symmetries of the rank-3 principal R-matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TwistSpec {
    Diagonal { k: Vec<C64> },
    Gl3Cyclic2 { alpha: C64, beta: C64, gamma: C64 },
    Gl3Cyclic3 { alpha: C64, beta: C64, gamma: C64 },
}

impl TwistSpec {
    pub fn diagonal(k: Vec<C64>) -> Self {
        TwistSpec::Diagonal { k }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, TwistSpec::Diagonal { .. })
    }

    fn cyclic_params(&self) -> Option<(C64, C64, C64)> {
        match *self {
            TwistSpec::Gl3Cyclic2 { alpha, beta, gamma } | TwistSpec::Gl3Cyclic3 { alpha, beta, gamma } => {
                Some((alpha, beta, gamma))
            }
            TwistSpec::Diagonal { .. } => None,
        }
    }

    /// Eigenvalues in a fixed order: as listed for the diagonal class, the
    /// three cube roots `k0, -(-1)^{1/3} k0, (-1)^{2/3} k0` of `alpha beta gamma`
    /// for the cyclic classes.
    pub fn eigenvalues(&self) -> Vec<C64> {
        match self {
            TwistSpec::Diagonal { k } => k.clone(),
            _ => {
                let (a, b, g) = self.cyclic_params().unwrap();
                let k0 = (a * b * g).powf(1.0 / 3.0);
                let minus_one = C64::new(-1.0, 0.0);
                vec![k0, -minus_one.powf(1.0 / 3.0) * k0, minus_one.powf(2.0 / 3.0) * k0]
            }
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            TwistSpec::Diagonal { k } => Some(k.len()),
            _ => Some(3),
        }
    }

    pub fn matrix(&self) -> CMat {
        match self {
            TwistSpec::Diagonal { k } => CMat::from_diagonal(&CVec::from_vec(k.clone())),
            TwistSpec::Gl3Cyclic2 { alpha, beta, gamma } => {
                let mut m = CMat::zeros(3, 3);
                m[(0, 2)] = *alpha;
                m[(1, 0)] = *beta;
                m[(2, 1)] = *gamma;
                m
            }
            TwistSpec::Gl3Cyclic3 { alpha, beta, gamma } => {
                let mut m = CMat::zeros(3, 3);
                m[(0, 1)] = *beta;
                m[(1, 2)] = *gamma;
                m[(2, 0)] = *alpha;
                m
            }
        }
    }

    /// Diagonalizer `W` with `K = W K_J W^{-1}`, `K_J = diag(eigenvalues())`.
    /// Closed forms for the cyclic classes; identity for the diagonal class.
    pub fn diagonalizer(&self) -> CMat {
        match self {
            TwistSpec::Diagonal { k } => CMat::identity(k.len(), k.len()),
            TwistSpec::Gl3Cyclic2 { beta, gamma, .. } => {
                let evs = self.eigenvalues();
                CMat::from_fn(3, 3, |i, j| {
                    let kv = evs[j];
                    match i {
                        0 => C64::new(1.0, 0.0),
                        1 => beta / kv,
                        _ => beta * gamma / (kv * kv),
                    }
                })
            }
            TwistSpec::Gl3Cyclic3 { beta, gamma, .. } => {
                let evs = self.eigenvalues();
                CMat::from_fn(3, 3, |i, j| {
                    let kv = evs[j];
                    match i {
                        0 => C64::new(1.0, 0.0),
                        1 => kv / beta,
                        _ => kv * kv / (beta * gamma),
                    }
                })
            }
        }
    }

    fn validate(&self, rank: usize, tolerance: f64) -> Result<()> {
        if let Some((a, b, g)) = self.cyclic_params() {
            if rank != 3 {
                return Err(Error::InvalidParams("cyclic twists are defined for rank 3 only".into()));
            }
            if (a * b * g).norm() <= tolerance {
                return Err(Error::DegenerateTwist("alpha*beta*gamma must be nonzero".into()));
            }
        }
        let k = self.eigenvalues();
        if k.len() != rank {
            return Err(Error::InvalidParams(format!(
                "twist has {} eigenvalues, rank is {rank}",
                k.len()
            )));
        }
        let scale = k.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300);
        for i in 0..k.len() {
            for j in i + 1..k.len() {
                if (k[i] - k[j]).norm() <= tolerance * scale {
                    return Err(Error::NotSimpleSpectrum(format!(
                        "twist eigenvalues {} and {} coincide within tolerance",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Chain definition: rank `n`, site count, deformation `eta` (`q = exp(eta)`),
/// inhomogeneities, twist, tolerance, and the RNG seed used for every random
/// draw downstream. Validation happens here; downstream code assumes validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub rank: usize,
    pub sites: usize,
    pub eta: C64,
    pub xi: Vec<C64>,
    pub twist: TwistSpec,
    pub tolerance: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(
        rank: usize,
        sites: usize,
        eta: C64,
        xi: Vec<C64>,
        twist: TwistSpec,
        tolerance: f64,
        seed: u64,
    ) -> Result<Self> {
        if rank < 2 {
            return Err(Error::InvalidParams("rank must be at least 2".into()));
        }
        if sites < 1 {
            return Err(Error::InvalidParams("need at least one site".into()));
        }
        if xi.len() != sites {
            return Err(Error::InvalidParams(format!(
                "{} inhomogeneities for {} sites",
                xi.len(),
                sites
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParams("tolerance must be positive".into()));
        }
        let q = eta.exp();
        for k in 1..=2 * rank {
            if (q.powu(k as u32) - C64::new(1.0, 0.0)).norm() <= tolerance {
                return Err(Error::InvalidParams(format!(
                    "q^{k} is within tolerance of 1 (root-of-unity deformation)"
                )));
            }
        }
        for (a, &x) in xi.iter().enumerate() {
            if x.norm() <= tolerance {
                return Err(Error::InvalidParams(format!("inhomogeneity {} is zero", a + 1)));
            }
        }
        let n = rank as i32;
        for a in 0..sites {
            for b in 0..sites {
                if a == b {
                    continue;
                }
                let ratio = xi[a] / xi[b];
                for h in -n..=n {
                    let qh = q.powi(h);
                    if (ratio - qh).norm() <= tolerance * qh.norm() {
                        return Err(Error::InvalidParams(format!(
                            "inhomogeneity condition violated: xi_{}/xi_{} is within tolerance of q^{h}",
                            a + 1,
                            b + 1
                        )));
                    }
                }
            }
        }
        twist.validate(rank, tolerance)?;
        Ok(Self { rank, sites, eta, xi, twist, tolerance, seed })
    }

    pub fn q(&self) -> C64 {
        self.eta.exp()
    }

    /// Hilbert-space dimension `n^N`.
    pub fn dim(&self) -> usize {
        self.rank.pow(self.sites as u32)
    }

    pub fn log_xi(&self, site: usize) -> C64 {
        self.xi[site].ln()
    }

    /// Local state of `site` (0-based) in basis index `idx`; site 0 slowest.
    pub fn state_digit(&self, idx: usize, site: usize) -> usize {
        (idx / self.rank.pow((self.sites - 1 - site) as u32)) % self.rank
    }

    /// Random chain with a diagonal simple-spectrum twist, following the
    /// sampling policy: `0.2 < |Re eta| < 1`, `|Im eta| < 1`, `|xi|` in
    /// `[0.5, 2]`, re-drawn until the genericity conditions hold.
    pub fn random_diagonal(rank: usize, sites: usize, seed: u64) -> Self {
        Self::random_with(rank, sites, seed, |rng| {
            let k = (0..rank)
                .map(|_| {
                    let r = 0.5 + rng.random::<f64>();
                    let th = rng.random::<f64>() * std::f64::consts::TAU;
                    C64::from_polar(r, th)
                })
                .collect();
            TwistSpec::Diagonal { k }
        })
    }

    /// Random gl3 chain with a cyclic twist (`variant` 2 or 3).
    pub fn random_cyclic(variant: u8, sites: usize, seed: u64) -> Self {
        assert!(variant == 2 || variant == 3);
        Self::random_with(3, sites, seed, |rng| {
            let mut draw = || {
                let r = 0.5 + rng.random::<f64>();
                let th = rng.random::<f64>() * std::f64::consts::TAU;
                C64::from_polar(r, th)
            };
            let (alpha, beta, gamma) = (draw(), draw(), draw());
            if variant == 2 {
                TwistSpec::Gl3Cyclic2 { alpha, beta, gamma }
            } else {
                TwistSpec::Gl3Cyclic3 { alpha, beta, gamma }
            }
        })
    }

    fn random_with(
        rank: usize,
        sites: usize,
        seed: u64,
        mut mk_twist: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> TwistSpec,
    ) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x706172_616d73);
        for _ in 0..256 {
            let re = (0.2 + 0.8 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let im = 2.0 * rng.random::<f64>() - 1.0;
            let eta = C64::new(re, im);
            let xi: Vec<C64> = (0..sites)
                .map(|_| {
                    let r = 0.5 + 1.5 * rng.random::<f64>();
                    let th = (rng.random::<f64>() - 0.5) * 2.0 * (std::f64::consts::PI - 0.4);
                    C64::from_polar(r, th)
                })
                .collect();
            let twist = mk_twist(&mut rng);
            if let Ok(p) = Self::new(rank, sites, eta, xi, twist, 1e-8, seed) {
                return p;
            }
        }
        unreachable!("random parameter draw failed 256 times");
    }
}

/// Principal-gradation R-matrix at the principal branch of `ln lam`.
pub fn r_matrix(n: usize, q: C64, lam: C64) -> Result<CMat> {
    if lam.norm() == 0.0 {
        return Err(Error::Domain("R-matrix is singular at lam = 0".into()));
    }
    Ok(r_matrix_log(n, q, lam.ln()))
}

/// R-matrix with a caller-supplied logarithm of the spectral parameter.
pub fn r_matrix_log(n: usize, q: C64, log_lam: C64) -> CMat {
    r_matrix_log_gen(n, q, log_lam, false)
}

/// `homogeneous = true` replaces the fractional powers `lam^{±w}` with the
/// homogeneous-gradation integer powers `lam^{∓1}`.
pub fn r_matrix_log_gen(n: usize, q: C64, log_lam: C64, homogeneous: bool) -> CMat {
    let lam = log_lam.exp();
    let one = C64::new(1.0, 0.0);
    let qq = q - one / q;
    let mut r = CMat::zeros(n * n, n * n);
    for k in 0..n {
        for p in 0..n {
            let d = if k == p { lam * q - one / (lam * q) } else { lam - one / lam };
            r[(k * n + p, k * n + p)] = d;
        }
    }
    for k in 0..n {
        for p in k + 1..n {
            let w = (n as f64 - 2.0 * (p - k) as f64) / n as f64;
            let (lo, hi) = if homogeneous {
                (one / lam, lam)
            } else {
                ((-log_lam * w).exp(), (log_lam * w).exp())
            };
            // E_kp (x) E_pk and E_pk (x) E_kp
            r[(k * n + p, p * n + k)] = qq * lo;
            r[(p * n + k, k * n + p)] = qq * hi;
        }
    }
    r
}

/// Permutation operator on `V (x) V`.
pub fn permutation_matrix(n: usize) -> CMat {
    let mut p = CMat::zeros(n * n, n * n);
    for k in 0..n {
        for l in 0..n {
            p[(k * n + l, l * n + k)] = C64::new(1.0, 0.0);
        }
    }
    p
}

/// `T_1(lam)` — auxiliary-space trace of `K_a R_{a,N}(lam/xi_N) ... R_{a,1}(lam/xi_1)`.
pub fn transfer1(params: &ModelParams, lam: C64) -> Result<CMat> {
    if lam.norm() == 0.0 {
        return Err(Error::Domain("transfer matrix is singular at lam = 0".into()));
    }
    Ok(transfer1_log(params, lam.ln()))
}

/// `T_1` at a coherent logarithm of the spectral point (shifted evaluations
/// pass `ln lam - j*eta`).
pub fn transfer1_log(params: &ModelParams, log_lam: C64) -> CMat {
    transfer1_log_gen(params, log_lam, false)
}

pub fn transfer1_log_gen(params: &ModelParams, log_lam: C64, homogeneous: bool) -> CMat {
    let n = params.rank;
    let dim = params.dim();
    let q = params.q();
    let kmat = params.twist.matrix();
    // per-site R data: diagonal part d[a][s] and exchange part ex[a][s]
    let mut site_r: Vec<CMat> = Vec::with_capacity(params.sites);
    for k in 0..params.sites {
        site_r.push(r_matrix_log_gen(n, q, log_lam - params.log_xi(k), homogeneous));
    }
    let mut t = CMat::zeros(dim, dim);
    let mut psi = vec![C64::new(0.0, 0.0); n * dim];
    let mut out = vec![C64::new(0.0, 0.0); n * dim];
    for e in 0..dim {
        for aux_in in 0..n {
            // propagate |aux_in> (x) |e> through the sites, auxiliary index explicit
            psi.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            psi[aux_in * dim + e] = C64::new(1.0, 0.0);
            for site in 0..params.sites {
                let r = &site_r[site];
                let pw = n.pow((params.sites - 1 - site) as u32);
                out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for a_out in 0..n {
                    for h in 0..dim {
                        let s_out = (h / pw) % n;
                        let base = h - s_out * pw;
                        // diagonal term (a_out, s_out) <- (a_out, s_out)
                        let mut acc = r[(a_out * n + s_out, a_out * n + s_out)] * psi[a_out * dim + h];
                        if a_out != s_out {
                            // exchange term (a_out, s_out) <- (s_out, a_out)
                            let h_in = base + a_out * pw;
                            acc += r[(a_out * n + s_out, s_out * n + a_out)] * psi[s_out * dim + h_in];
                        }
                        out[a_out * dim + h] = acc;
                    }
                }
                std::mem::swap(&mut psi, &mut out);
            }
            // twist on the auxiliary index, then trace over it
            for row in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    // (K psi)[aux_out = aux_in] traced: sum_a' K[aux_in, a'] psi[a']
                    acc += kmat[(aux_in, a)] * psi[a * dim + row];
                }
                t[(row, e)] += acc;
            }
        }
    }
    t
}

/// Occupation-number operators `N_i`: diagonal, counting sites in local state `i`.
pub fn number_operators(params: &ModelParams) -> Vec<CMat> {
    let dim = params.dim();
    (0..params.rank)
        .map(|i| {
            let mut d = CVec::zeros(dim);
            for idx in 0..dim {
                let cnt = (0..params.sites).filter(|&k| params.state_digit(idx, k) == i).count();
                d[idx] = C64::new(cnt as f64, 0.0);
            }
            CMat::from_diagonal(&d)
        })
        .collect()
}

/// Occupation counts of a single basis state.
pub fn sector_of_basis_state(params: &ModelParams, idx: usize) -> Vec<usize> {
    let mut nu = vec![0usize; params.rank];
    for k in 0..params.sites {
        nu[params.state_digit(idx, k)] += 1;
    }
    nu
}

/// Quantum determinant `det K * prod_b (lam q/xi_b - xi_b/(q lam))
/// prod_{k=1}^{n-1} (lam/(q^k xi_b) - q^k xi_b/lam)`.
pub fn qdet_scalar(params: &ModelParams, lam: C64) -> C64 {
    qdet_scalar_log(params, lam.ln())
}

pub fn qdet_scalar_log(params: &ModelParams, log_lam: C64) -> C64 {
    let q = params.q();
    let lam = log_lam.exp();
    let one = C64::new(1.0, 0.0);
    let mut v: C64 = params.twist.eigenvalues().iter().product();
    for &xb in &params.xi {
        v *= lam * q / xb - xb / (q * lam);
        for k in 1..params.rank {
            let z = q.powu(k as u32) * xb;
            v *= lam / z - z / lam;
        }
    }
    v
}

/// Twist matrix bundle: `K`, its diagonal form, and the diagonalizer, with the
/// scalar Yang-Baxter symmetry verified at three seeded random points.
pub struct TwistData {
    pub k: CMat,
    pub k_diag: Vec<C64>,
    pub w: CMat,
    pub w_inv: CMat,
}

pub fn twist_matrix(params: &ModelParams) -> Result<TwistData> {
    params.twist.validate(params.rank, params.tolerance)?;
    let k = params.twist.matrix();
    let w = params.twist.diagonalizer();
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateTwist("twist diagonalizer is singular".into()))?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed ^ 0x7477_6973_74);
    for _ in 0..3 {
        let lam = random_spectral_point(&mut rng);
        let res = twist_symmetry_residual(params.rank, params.q(), &k, lam)?;
        if res > 1e-10 {
            return Err(Error::ModelInconsistency(format!(
                "twist does not commute with the R-matrix (residual {res:.3e})"
            )));
        }
    }
    Ok(TwistData { k, k_diag: params.twist.eigenvalues(), w, w_inv })
}

/// `|| R12(lam) K1 K2 - K2 K1 R12(lam) ||` relative.
pub fn twist_symmetry_residual(n: usize, q: C64, k: &CMat, lam: C64) -> Result<f64> {
    let r = r_matrix(n, q, lam)?;
    let id = CMat::identity(n, n);
    let k1 = kron(k, &id);
    let k2 = kron(&id, k);
    let lhs = &r * &k1 * &k2;
    let rhs = &k2 * &k1 * &r;
    Ok(crate::rel_mat(&lhs, &rhs))
}

/// Residual of the gradation similarity
/// `R^(P)(lam) = (I (x) S(lam)) R^(H)(lam) (I (x) S(lam))^{-1}`,
/// `S = diag(lam^{2(j-1)/n})` acting on the second slot (gl3 and general n).
pub fn check_gradation_similarity(n: usize, q: C64, lam: C64) -> Result<f64> {
    if lam.norm() == 0.0 {
        return Err(Error::Domain("gradation check needs lam != 0".into()));
    }
    let log_lam = lam.ln();
    let rp = r_matrix_log(n, q, log_lam);
    let rh = r_matrix_log_gen(n, q, log_lam, true);
    let s: Vec<C64> = (0..n).map(|j| (log_lam * (2.0 * j as f64 / n as f64)).exp()).collect();
    let mut conj = rh.clone();
    for i in 0..n * n {
        for j in 0..n * n {
            conj[(i, j)] = rh[(i, j)] * s[i % n] / s[j % n];
        }
    }
    Ok(crate::rel_mat(&rp, &conj))
}

/// Kronecker product with the first factor slowest.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Random point with modulus in `[0.5, 2]` and argument in `(-pi + 0.2, pi - 0.2)`.
pub fn random_spectral_point(rng: &mut impl Rng) -> C64 {
    let r = 0.5 + 1.5 * rng.random::<f64>();
    let th = (rng.random::<f64>() - 0.5) * 2.0 * (std::f64::consts::PI - 0.2);
    C64::from_polar(r, th)
}

/// Random point with argument bounded so that ratios of two draws stay off the
/// branch cut (used for Yang-Baxter checks on the R-matrix itself).
pub fn random_narrow_point(rng: &mut impl Rng) -> C64 {
    let r = 0.5 + 1.5 * rng.random::<f64>();
    let th = (rng.random::<f64>() - 0.5) * (std::f64::consts::PI - 0.2);
    C64::from_polar(r, th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn embed3(n: usize, r: &CMat, slots: (usize, usize)) -> CMat {
        // embed an n^2 x n^2 two-slot operator into slots of V (x) V (x) V
        let dim = n * n * n;
        let mut m = CMat::zeros(dim, dim);
        let digits = |idx: usize| [(idx / (n * n)) % n, (idx / n) % n, idx % n];
        for col in 0..dim {
            let st = digits(col);
            for oi in 0..n {
                for oj in 0..n {
                    let v = r[(oi * n + oj, st[slots.0] * n + st[slots.1])];
                    if v.norm() == 0.0 {
                        continue;
                    }
                    let mut out = st;
                    out[slots.0] = oi;
                    out[slots.1] = oj;
                    m[(out[0] * n * n + out[1] * n + out[2], col)] += v;
                }
            }
        }
        m
    }

    pub(crate) fn ybe_residual(n: usize, q: C64, lam: C64, mu: C64) -> f64 {
        let r12 = embed3(n, &r_matrix(n, q, lam / mu).unwrap(), (0, 1));
        let r13 = embed3(n, &r_matrix(n, q, lam).unwrap(), (0, 2));
        let r23 = embed3(n, &r_matrix(n, q, mu).unwrap(), (1, 2));
        crate::rel_mat(&(&r12 * &r13 * &r23), &(&r23 * &r13 * &r12))
    }

    #[test]
    fn yang_baxter_small_ranks() {
        let q = c(0.41, 0.13).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..=4 {
            let (lam, mu) = (random_narrow_point(&mut rng), random_narrow_point(&mut rng));
            assert!(ybe_residual(n, q, lam, mu) < 1e-13);
        }
    }

    #[test]
    fn regularity_point() {
        for n in 2..=5 {
            let q = c(0.37, 0.21).exp();
            let r = r_matrix(n, q, c(1.0, 0.0)).unwrap();
            let p = permutation_matrix(n) * (q - 1.0 / q);
            assert!(crate::rel_mat(&r, &p) < 1e-14);
        }
    }

    #[test]
    fn gradation_similarity_residual() {
        let q = c(0.41, 0.13).exp();
        assert!(check_gradation_similarity(3, q, c(1.0, 0.0)).unwrap() < 1e-15);
        assert!(check_gradation_similarity(3, q, c(0.9, 0.4)).unwrap() < 1e-13);
        assert!(check_gradation_similarity(4, q, c(0.7, -0.5)).unwrap() < 1e-13);
    }

    #[test]
    fn single_site_diagonal_transfer() {
        // N = 1, diagonal twist: T1 diagonal with entries
        // sum_k k_k ((lam/xi) q^{d_kj} - (xi/lam) q^{-d_kj})
        let eta = c(0.37, 0.21);
        let q = eta.exp();
        let ks = vec![c(1.0, 0.0), c(2.0, 0.0), c(-0.7, 0.3)];
        let xi = c(1.1, 0.2);
        let p = ModelParams::new(3, 1, eta, vec![xi], TwistSpec::diagonal(ks.clone()), 1e-8, 7).unwrap();
        let lam = c(0.83, 0.31);
        let t = transfer1(&p, lam).unwrap();
        for j in 0..3 {
            let mut expect = c(0.0, 0.0);
            for (k, kk) in ks.iter().enumerate() {
                let d = if k == j { q } else { c(1.0, 0.0) };
                expect += kk * ((lam / xi) * d - (xi / lam) / d);
            }
            assert!((t[(j, j)] - expect).norm() < 1e-13 * expect.norm());
            for i in 0..3 {
                if i != j {
                    assert!(t[(i, j)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn transfer_family_commutes() {
        let p = ModelParams::random_diagonal(3, 2, 5);
        let (a, b) = (c(0.83, 0.31), c(1.21, -0.44));
        let (ta, tb) = (transfer1(&p, a).unwrap(), transfer1(&p, b).unwrap());
        assert!(crate::rel_mat(&(&ta * &tb), &(&tb * &ta)) < 1e-13);
    }

    #[test]
    fn number_operators_sum_and_commute() {
        let p = ModelParams::random_diagonal(3, 3, 11);
        let nops = number_operators(&p);
        let mut sum = CMat::zeros(p.dim(), p.dim());
        for op in &nops {
            sum += op;
        }
        let expect = CMat::identity(p.dim(), p.dim()) * c(p.sites as f64, 0.0);
        assert_eq!(sum, expect);
        let t = transfer1(&p, c(0.9, 0.35)).unwrap();
        for op in &nops {
            assert!(crate::rel_mat(&(op * &t), &(&t * op)) < 1e-13);
        }
        // explicit counting example: state (1,1,2) in 1-based labels
        let idx = 0 * 9 + 0 * 3 + 1; // digits (0,0,1)
        let nu = sector_of_basis_state(&p, idx);
        assert_eq!(nu, vec![2, 1, 0]);
    }

    #[test]
    fn qdet_zero_and_single_site_value() {
        let p = ModelParams::random_diagonal(3, 2, 13);
        let q = p.q();
        assert!(qdet_scalar(&p, p.xi[0] / q).norm() < 1e-10);
        // N = 1 at lam = xi_1: det K (q - 1/q) prod_{k} (q^{-k} - q^k)
        let p1 = ModelParams::new(
            3,
            1,
            p.eta,
            vec![p.xi[0]],
            p.twist.clone(),
            p.tolerance,
            p.seed,
        )
        .unwrap();
        let detk: C64 = p1.twist.eigenvalues().iter().product();
        let mut expect = detk * (q - 1.0 / q);
        for k in 1..3u32 {
            expect *= q.powi(-(k as i32)) - q.powu(k);
        }
        let got = qdet_scalar(&p1, p.xi[0]);
        assert!((got - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn homogeneous_gradations_agree_on_transfer() {
        // all xi equal, diagonal twist: principal and homogeneous T1 coincide
        let eta = c(0.31, 0.18);
        let ks = vec![c(1.0, 0.1), c(0.4, -0.8), c(-1.3, 0.2)];
        let p = ModelParams::new(
            3,
            2,
            eta,
            vec![c(1.0, 0.0), c(1.0, 0.0)],
            TwistSpec::diagonal(ks),
            1e-8,
            3,
        );
        // xi_a equal violates the inhomogeneity condition; bypass validation
        let p = match p {
            Ok(p) => p,
            Err(_) => ModelParams {
                rank: 3,
                sites: 2,
                eta,
                xi: vec![c(1.0, 0.0), c(1.0, 0.0)],
                twist: TwistSpec::diagonal(vec![c(1.0, 0.1), c(0.4, -0.8), c(-1.3, 0.2)]),
                tolerance: 1e-8,
                seed: 3,
            },
        };
        let lam = c(0.87, 0.22);
        let tp = transfer1_log_gen(&p, lam.ln(), false);
        let th = transfer1_log_gen(&p, lam.ln(), true);
        assert!(crate::rel_mat(&tp, &th) < 1e-11);
    }

    #[test]
    fn twist_validation_and_cyclic_eigenvalues() {
        let tol = 1e-8;
        assert!(TwistSpec::diagonal(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)])
            .validate(3, tol)
            .is_ok());
        let err = TwistSpec::diagonal(vec![c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)]).validate(3, tol);
        assert!(matches!(err, Err(Error::NotSimpleSpectrum(_))));
        // cyclic eigenvalues are the three cube roots of alpha beta gamma
        let tw = TwistSpec::Gl3Cyclic2 { alpha: c(1.0, 0.0), beta: c(1.0, 0.0), gamma: c(1.0, 0.0) };
        let evs = tw.eigenvalues();
        for ev in &evs {
            assert!((ev.powu(3) - c(1.0, 0.0)).norm() < 1e-12);
        }
        let k = tw.matrix();
        let w = tw.diagonalizer();
        let kj = CMat::from_diagonal(&CVec::from_vec(evs));
        let rebuilt = &w * kj * w.try_inverse().unwrap();
        assert!(crate::rel_mat(&k, &rebuilt) < 1e-12);
        // degenerate cyclic twist
        let bad = TwistSpec::Gl3Cyclic3 { alpha: c(0.0, 0.0), beta: c(1.0, 0.0), gamma: c(1.0, 0.0) };
        assert!(matches!(bad.validate(3, tol), Err(Error::DegenerateTwist(_))));
    }

    #[test]
    fn inhomogeneity_condition_rejected() {
        let eta = c(0.4, 0.2);
        let q = eta.exp();
        let x1 = c(1.1, 0.3);
        let err = ModelParams::new(
            3,
            2,
            eta,
            vec![x1, x1 * q],
            TwistSpec::diagonal(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]),
            1e-8,
            1,
        );
        assert!(matches!(err, Err(Error::InvalidParams(msg)) if msg.contains("inhomogeneity")));
    }
}
