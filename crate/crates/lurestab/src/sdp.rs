//! Structured LMI feasibility problems, the epigraph SDP they reduce to, and
//! solver-independent certificate verification.
//!
//! The strict LMI `G(v) < 0` over the multiplier cone is homogeneous, so it is
//! decided through the normalized epigraph program
//!
//! ```text
//! min t   s.t.  G(v) <= t I  (on the active coordinates),
//!               P(v) >= 0,  P11(v) >= eps_pd I,  diag multipliers >= 0,
//!               trace P + sum(multiplier traces) = rho
//! ```
//!
//! with `rho` the active LMI dimension. Feasibility is declared only when the
//! returned multipliers re-verify by a direct eigen-decomposition.

mod ipm;

pub use ipm::{BlockMat, SdpProblem, SdpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lmi::{assemble_structural, Assembly, Criterion, MultiplierSet};
use crate::system::{LurePlant, PlantFile, SectorSlopeSpec};
use crate::{Error, Result};

/// Whether a diagonal multiplier family is one common scalar or one value per
/// channel. The bundled reference bounds were produced with common
/// multipliers; per-channel multipliers certify bounds at least as large.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiplierStructure {
    #[default]
    Common,
    PerChannel,
}

impl MultiplierStructure {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "common" => Ok(MultiplierStructure::Common),
            "per-channel" => Ok(MultiplierStructure::PerChannel),
            _ => Err(Error::InvalidArgument(format!(
                "unknown multiplier structure '{s}' (common | per-channel)"
            ))),
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            MultiplierStructure::Common => "common",
            MultiplierStructure::PerChannel => "per-channel",
        }
    }
}

/// Solver and verification tolerances. All size-dependent thresholds scale
/// with `rho`, the active LMI dimension.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// `eps_pd = eps_pd_scale * rho` encodes strict positive definiteness of P11.
    pub eps_pd_scale: f64,
    /// Feasible iff the verified margin is below `-eps_feas_scale * rho`.
    pub eps_feas_scale: f64,
    /// Slack for cone residual checks in the verifier.
    pub eps_cone_scale: f64,
    /// Relative tolerance of the interior-point solve.
    pub ipm_tol: f64,
    /// Iteration cap; exceeding it yields an indeterminate status.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            eps_pd_scale: 1e-6,
            eps_feas_scale: 1e-7,
            eps_cone_scale: 1e-8,
            ipm_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

/// A concrete multiplier assignment with its verified margin and cone
/// residuals. `verified` is set exclusively by [`verify_certificate`].
#[derive(Debug, Clone)]
pub struct Certificate {
    pub criterion: Criterion,
    pub assembly: Assembly,
    pub structure: MultiplierStructure,
    pub xi: DVector<f64>,
    pub mu: DVector<f64>,
    pub multipliers: MultiplierSet,
    /// Largest eigenvalue of the assembled G on the active coordinates.
    pub margin: f64,
    pub p_min_eig: f64,
    pub p11_min_eig: f64,
    pub mult_min: f64,
    pub status: SolveStatus,
    pub verified: bool,
    pub solver_objective: f64,
    pub iterations: usize,
}

impl Certificate {
    pub fn feasible(&self) -> bool {
        self.status == SolveStatus::Feasible && self.verified
    }
}

/// Full eigenvalue spectrum of a symmetric matrix, ascending.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("sym_eig needs a square matrix".into()));
    }
    let scale = m.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric: max asymmetry {asym:.3e}"
        )));
    }
    let sym = 0.5 * (m + m.transpose());
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DVector::from_vec(eigs))
}

/// Variable layout of the masked feasibility problem and its epigraph SDP.
#[derive(Debug, Clone)]
pub struct LmiFeasibilityProblem {
    plant: LurePlant,
    spec: SectorSlopeSpec,
    criterion: Criterion,
    assembly: Assembly,
    structure: MultiplierStructure,
    /// Packed size of the free part of P (full P or just P11).
    p_dim: usize,
    p_size: usize,
    /// Free multiplier families (indices into the mask order).
    families: Vec<usize>,
    /// Scalars per family (1 for common, n_q for per-channel).
    per_family: usize,
    /// Index of the eliminated variable in the full variable list.
    elim: usize,
    /// Normalization coefficient per full variable.
    norm_coef: Vec<f64>,
    /// Active rows of G (structural support).
    active: Vec<usize>,
    rho: f64,
    sdp: SdpProblem,
}

impl LmiFeasibilityProblem {
    pub fn build(
        plant: &LurePlant,
        spec: &SectorSlopeSpec,
        criterion: Criterion,
        assembly: Assembly,
        structure: MultiplierStructure,
        opts: &SolveOptions,
    ) -> Result<Self> {
        let n = plant.n();
        let nq = plant.n_q();
        let m = n + 2 * nq;
        if spec.n_q() != nq {
            return Err(Error::Dimension("spec/plant channel mismatch".into()));
        }
        let p_size = if criterion.full_p() { m } else { n };
        let p_dim = p_size * (p_size + 1) / 2;
        let families: Vec<usize> = (0..7).filter(|&f| criterion.mask()[f] && nq > 0).collect();
        let per_family = match structure {
            MultiplierStructure::Common => 1,
            MultiplierStructure::PerChannel => nq,
        };
        let n_mult = families.len() * per_family;
        let total = p_dim + n_mult;

        // normalization coefficients: trace(P) + sum of multiplier traces
        let mut norm_coef = vec![0.0; total];
        {
            let mut k = 0;
            for i in 0..p_size {
                for j in i..p_size {
                    if i == j {
                        norm_coef[k] = 1.0;
                    }
                    k += 1;
                }
            }
            for _ in 0..n_mult {
                norm_coef[k] = match structure {
                    MultiplierStructure::Common => nq as f64,
                    MultiplierStructure::PerChannel => 1.0,
                };
                k += 1;
            }
        }
        let elim = norm_coef
            .iter()
            .rposition(|&c| c > 0.0)
            .ok_or_else(|| Error::InvalidArgument("no normalizable variable".into()))?;

        let mut prob = Self {
            plant: plant.clone(),
            spec: spec.clone(),
            criterion,
            assembly,
            structure,
            p_dim,
            p_size,
            families,
            per_family,
            elim,
            norm_coef,
            active: Vec::new(),
            rho: 1.0,
            sdp: SdpProblem {
                block_sizes: Vec::new(),
                c: BlockMat { blocks: Vec::new() },
                a: Vec::new(),
                b: DVector::zeros(0),
            },
        };

        // first pass at rho = 1 to find the structural support of G
        let support = prob.scan_support()?;
        prob.active = (0..m).filter(|&r| support[r]).collect();
        if prob.active.is_empty() {
            return Err(Error::InvalidArgument("criterion matrix has no active rows".into()));
        }
        prob.rho = prob.active.len() as f64;
        prob.sdp = prob.build_sdp(opts.eps_pd_scale * prob.rho)?;
        Ok(prob)
    }

    /// Total number of decision variables before elimination.
    pub fn packed_dim(&self) -> usize {
        self.p_dim + self.families.len() * self.per_family
    }

    pub fn active_rows(&self) -> &[usize] {
        &self.active
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn total(&self) -> usize {
        self.p_dim + self.families.len() * self.per_family
    }

    fn materialize(&self, reduced: &[f64]) -> MultiplierSet {
        let total = self.total();
        debug_assert_eq!(reduced.len(), total - 1);
        let mut full = vec![0.0; total];
        let mut acc = 0.0;
        let mut k = 0;
        for (j, slot) in full.iter_mut().enumerate() {
            if j == self.elim {
                continue;
            }
            *slot = reduced[k];
            acc += self.norm_coef[j] * reduced[k];
            k += 1;
        }
        full[self.elim] = (self.rho - acc) / self.norm_coef[self.elim];

        let n = self.plant.n();
        let nq = self.plant.n_q();
        let mut mults = MultiplierSet::zeros(n, nq);
        let mut k = 0;
        for i in 0..self.p_size {
            for j in i..self.p_size {
                mults.p[(i, j)] = full[k];
                mults.p[(j, i)] = full[k];
                k += 1;
            }
        }
        for &f in &self.families {
            match self.structure {
                MultiplierStructure::Common => {
                    mults.family_mut(f).fill(full[k]);
                    k += 1;
                }
                MultiplierStructure::PerChannel => {
                    for i in 0..nq {
                        mults.family_mut(f)[i] = full[k];
                        k += 1;
                    }
                }
            }
        }
        mults
    }

    /// Free multiplier scalars of a multiplier set, in layout order, with the
    /// eliminated one included.
    fn mult_scalars(&self, mults: &MultiplierSet) -> DVector<f64> {
        let nq = self.plant.n_q();
        let mut out = Vec::with_capacity(self.families.len() * self.per_family);
        for &f in &self.families {
            let v = mults.family(f);
            match self.structure {
                MultiplierStructure::Common => out.push(v[0]),
                MultiplierStructure::PerChannel => out.extend((0..nq).map(|i| v[i])),
            }
        }
        DVector::from_vec(out)
    }

    fn g_of(&self, mults: &MultiplierSet) -> Result<DMatrix<f64>> {
        assemble_structural(&self.plant, mults, &self.spec, self.criterion, self.assembly)
    }

    fn scan_support(&self) -> Result<Vec<bool>> {
        let m = self.plant.n() + 2 * self.plant.n_q();
        let total = self.total();
        let mut active = vec![false; m];
        let g0 = self.g_of(&self.materialize(&vec![0.0; total - 1]))?;
        let mut mark = |g: &DMatrix<f64>| {
            for r in 0..m {
                if (0..m).any(|c| g[(r, c)] != 0.0) {
                    active[r] = true;
                }
            }
        };
        mark(&g0);
        for j in 0..total - 1 {
            let mut v = vec![0.0; total - 1];
            v[j] = 1.0;
            let g = self.g_of(&self.materialize(&v))? - &g0;
            mark(&g);
        }
        Ok(active)
    }

    fn slack_blocks(&self, mults: &MultiplierSet, g: &DMatrix<f64>, eps_pd: f64) -> BlockMat {
        let n = self.plant.n();
        let n_mult = self.families.len() * self.per_family;
        let mut blocks = Vec::new();
        let act = &self.active;
        let mut gact = DMatrix::zeros(act.len(), act.len());
        for (ri, &r) in act.iter().enumerate() {
            for (ci, &c) in act.iter().enumerate() {
                gact[(ri, ci)] = -g[(r, c)];
            }
        }
        blocks.push(gact);
        if self.criterion.full_p() {
            blocks.push(mults.p.clone());
        }
        let mut p11 = mults.p11();
        for i in 0..n {
            p11[(i, i)] -= eps_pd;
        }
        blocks.push(p11);
        if n_mult > 0 {
            blocks.push(DMatrix::from_diagonal(&self.mult_scalars(mults)));
        }
        BlockMat { blocks }
    }

    fn build_sdp(&self, eps_pd: f64) -> Result<SdpProblem> {
        let total = self.total();
        let zero = self.materialize(&vec![0.0; total - 1]);
        let g_zero = self.g_of(&zero)?;
        let c_mat = self.slack_blocks(&zero, &g_zero, eps_pd);
        let sizes: Vec<usize> = c_mat.blocks.iter().map(|b| b.nrows()).collect();

        let mut a = Vec::with_capacity(total);
        // epigraph variable t: S gains +I on the G block, so A_t = -diag(I, 0, ...)
        let mut a_t = BlockMat::zeros(&sizes);
        for i in 0..sizes[0] {
            a_t.blocks[0][(i, i)] = -1.0;
        }
        a.push(a_t);
        for j in 0..total - 1 {
            let mut v = vec![0.0; total - 1];
            v[j] = 1.0;
            let mj = self.materialize(&v);
            let gj = self.g_of(&mj)?;
            let sj = self.slack_blocks(&mj, &gj, eps_pd);
            // S(y) = C - sum_i y_i A_i  =>  A_j = C - S(e_j)
            a.push(c_mat.sub(&sj));
        }
        let mut b = DVector::zeros(total);
        b[0] = -1.0;
        Ok(SdpProblem { block_sizes: sizes, c: c_mat, a, b })
    }

    /// Solve the epigraph SDP and independently verify the result. Never
    /// returns a silent infeasible on solver failure: numerical breakdown
    /// yields an explicit indeterminate status.
    pub fn solve(&self, opts: &SolveOptions) -> Result<Certificate> {
        let sol = match ipm::solve(&self.sdp, opts.ipm_tol, opts.max_iter) {
            Ok(s) => s,
            Err(Error::Indeterminate(_)) => {
                return Ok(Certificate {
                    criterion: self.criterion,
                    assembly: self.assembly,
                    structure: self.structure,
                    xi: self.spec.xi.clone(),
                    mu: self.spec.mu.clone(),
                    multipliers: MultiplierSet::zeros(self.plant.n(), self.plant.n_q()),
                    margin: f64::INFINITY,
                    p_min_eig: f64::NAN,
                    p11_min_eig: f64::NAN,
                    mult_min: f64::NAN,
                    status: SolveStatus::Indeterminate,
                    verified: false,
                    solver_objective: f64::NAN,
                    iterations: opts.max_iter,
                })
            }
            Err(e) => return Err(e),
        };
        let reduced: Vec<f64> = sol.y.iter().skip(1).cloned().collect();
        let mults = self.materialize(&reduced);
        let mut cert = Certificate {
            criterion: self.criterion,
            assembly: self.assembly,
            structure: self.structure,
            xi: self.spec.xi.clone(),
            mu: self.spec.mu.clone(),
            multipliers: mults,
            margin: f64::NAN,
            p_min_eig: f64::NAN,
            p11_min_eig: f64::NAN,
            mult_min: f64::NAN,
            status: SolveStatus::Indeterminate,
            verified: false,
            solver_objective: sol.y[0],
            iterations: sol.iterations,
        };
        let checked = verify_certificate(&self.plant, &cert, &self.spec, opts)?;
        cert.margin = checked.margin;
        cert.p_min_eig = checked.p_min_eig;
        cert.p11_min_eig = checked.p11_min_eig;
        cert.mult_min = checked.mult_min;
        cert.verified = checked.verified;
        cert.status =
            if cert.verified { SolveStatus::Feasible } else { SolveStatus::Infeasible };
        Ok(cert)
    }
}

/// Re-derive margin and cone residuals of a certificate from scratch with a
/// direct eigen-decomposition, independent of any solver state. The returned
/// certificate carries the recomputed values, never the stored claim.
pub fn verify_certificate(
    plant: &LurePlant,
    cert: &Certificate,
    spec: &SectorSlopeSpec,
    opts: &SolveOptions,
) -> Result<Certificate> {
    let g = assemble_structural(plant, &cert.multipliers, spec, cert.criterion, cert.assembly)?;
    let probe = LmiFeasibilityProblem::build(
        plant,
        spec,
        cert.criterion,
        cert.assembly,
        cert.structure,
        opts,
    )?;
    let active = probe.active_rows();
    let rho = probe.rho();
    let eps_pd = opts.eps_pd_scale * rho;
    let eps_feas = opts.eps_feas_scale * rho;
    let eps_cone = opts.eps_cone_scale * rho;

    let mut gact = DMatrix::zeros(active.len(), active.len());
    for (ri, &r) in active.iter().enumerate() {
        for (ci, &c) in active.iter().enumerate() {
            gact[(ri, ci)] = g[(r, c)];
        }
    }
    let eigs = sym_eig(&gact)?;
    let margin = eigs[eigs.len() - 1];
    let p_min_eig = sym_eig(&cert.multipliers.p)?[0];
    let p11_min_eig = sym_eig(&cert.multipliers.p11())?[0];
    let mult_min = (0..7)
        .flat_map(|f| cert.multipliers.family(f).iter().cloned().collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    let mult_min = if mult_min.is_finite() { mult_min } else { 0.0 };
    let verified = margin < -eps_feas
        && p_min_eig >= -eps_cone
        && p11_min_eig >= eps_pd - eps_cone
        && mult_min >= -eps_cone;
    let mut out = cert.clone();
    out.margin = margin;
    out.p_min_eig = p_min_eig;
    out.p11_min_eig = p11_min_eig;
    out.mult_min = mult_min;
    out.verified = verified;
    Ok(out)
}

// ---------------------------------------------------------------------------
// JSON serialization of certificates (self-contained: embeds the plant)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub criterion: String,
    pub assembly: String,
    pub structure: String,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub multipliers: MultiplierFile,
    pub margin: f64,
    pub residuals: ResidualFile,
    pub status: SolveStatus,
    pub verified: bool,
    pub plant: PlantFile,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MultiplierFile {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub t: Vec<f64>,
    pub t_tilde: Vec<f64>,
    pub n: Vec<f64>,
    pub l: Vec<f64>,
    pub l_tilde: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResidualFile {
    pub p_min_eig: f64,
    pub p11_min_eig: f64,
    pub mult_min: f64,
}

impl CertificateFile {
    pub fn from_certificate(cert: &Certificate, plant: &LurePlant, slope_scale: f64) -> Self {
        let p = (0..cert.multipliers.p.nrows())
            .map(|i| (0..cert.multipliers.p.ncols()).map(|j| cert.multipliers.p[(i, j)]).collect())
            .collect();
        Self {
            criterion: cert.criterion.name().to_string(),
            assembly: cert.assembly.name().to_string(),
            structure: cert.structure.name().to_string(),
            xi: cert.xi.iter().cloned().collect(),
            mu: cert.mu.iter().cloned().collect(),
            multipliers: MultiplierFile {
                p,
                q: cert.multipliers.q.iter().cloned().collect(),
                q_tilde: cert.multipliers.q_tilde.iter().cloned().collect(),
                t: cert.multipliers.t.iter().cloned().collect(),
                t_tilde: cert.multipliers.t_tilde.iter().cloned().collect(),
                n: cert.multipliers.n.iter().cloned().collect(),
                l: cert.multipliers.l.iter().cloned().collect(),
                l_tilde: cert.multipliers.l_tilde.iter().cloned().collect(),
            },
            margin: cert.margin,
            residuals: ResidualFile {
                p_min_eig: cert.p_min_eig,
                p11_min_eig: cert.p11_min_eig,
                mult_min: cert.mult_min,
            },
            status: cert.status,
            verified: cert.verified,
            plant: PlantFile::from_plant(plant, slope_scale),
        }
    }

    pub fn into_certificate(&self) -> Result<(Certificate, LurePlant, f64)> {
        let (plant, slope_scale) = self.plant.into_plant()?;
        let n = plant.n();
        let nq = plant.n_q();
        let m = n + 2 * nq;
        if self.multipliers.p.len() != m {
            return Err(Error::Dimension("certificate P size mismatch".into()));
        }
        let mut mults = MultiplierSet::zeros(n, nq);
        for (i, row) in self.multipliers.p.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension("certificate P row mismatch".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                mults.p[(i, j)] = v;
            }
        }
        let fams = [
            &self.multipliers.q,
            &self.multipliers.q_tilde,
            &self.multipliers.t,
            &self.multipliers.t_tilde,
            &self.multipliers.n,
            &self.multipliers.l,
            &self.multipliers.l_tilde,
        ];
        for (f, vals) in fams.iter().enumerate() {
            if vals.len() != nq {
                return Err(Error::Dimension("certificate multiplier length mismatch".into()));
            }
            for (i, &v) in vals.iter().enumerate() {
                mults.family_mut(f)[i] = v;
            }
        }
        let cert = Certificate {
            criterion: Criterion::parse(&self.criterion)?,
            assembly: Assembly::parse(&self.assembly)?,
            structure: MultiplierStructure::parse(&self.structure)?,
            xi: DVector::from_vec(self.xi.clone()),
            mu: DVector::from_vec(self.mu.clone()),
            multipliers: mults,
            margin: self.margin,
            p_min_eig: self.residuals.p_min_eig,
            p11_min_eig: self.residuals.p11_min_eig,
            mult_min: self.residuals.mult_min,
            status: self.status,
            verified: self.verified,
            solver_objective: self.margin,
            iterations: 0,
        };
        Ok((cert, plant, slope_scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::example;

    fn uniform_spec(plant: &LurePlant, xi: f64, c: f64) -> SectorSlopeSpec {
        SectorSlopeSpec::uniform(plant.n_q(), xi, c).unwrap()
    }

    #[test]
    fn sym_eig_sorted_diagonal() {
        let m = DMatrix::from_partial_diagonal(3, 3, &[3.0, 1.0, 2.0]);
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn sym_eig_off_diagonal_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = sym_eig(&m).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(sym_eig(&m).is_err());
    }

    /// Residual check on a random symmetric matrix.
    #[test]
    fn sym_eig_residuals_small() {
        let mut state = 0xabcdu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let k = 9;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = next();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let decomp = m.clone().symmetric_eigen();
        let norm = m.norm();
        for c in 0..k {
            let v = decomp.eigenvectors.column(c);
            let lam = decomp.eigenvalues[c];
            let r = (&m * v - v * lam).norm();
            assert!(r <= 1e-10 * norm, "residual {r}");
        }
    }

    /// Eigenvalues for sizes <= 3 validated against characteristic-polynomial
    /// roots (Newton-polished from each eigenvalue; the polish must not move).
    #[test]
    fn sym_eig_matches_char_poly_roots() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, -0.7, 0.3, -0.2, 0.3, 0.5]);
        let e = sym_eig(&m).unwrap();
        let tr = m.trace();
        let det = m.determinant();
        let c2 = 0.5 * (tr * tr - (&m * &m).trace());
        let p = |x: f64| x.powi(3) - tr * x * x + c2 * x - det;
        for i in 0..3 {
            let mut x = e[i];
            for _ in 0..50 {
                let dp = 3.0 * x * x - 2.0 * tr * x + c2;
                if dp.abs() < 1e-14 {
                    break;
                }
                let step = p(x) / dp;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            assert!((x - e[i]).abs() < 1e-10, "eig {} vs polished root {}", e[i], x);
        }
    }

    /// Degenerate scalar problem with no nonlinearity channels: the
    /// normalization pins trace P11 = 1 and the margin is a^2 - 1.
    #[test]
    fn scalar_schur_system_margin() {
        let plant = LurePlant::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 0),
            DMatrix::zeros(0, 1),
            DMatrix::zeros(0, 0),
        )
        .unwrap();
        let spec = SectorSlopeSpec { xi: DVector::zeros(0), mu: DVector::zeros(0) };
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Circle,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        assert!((cert.margin + 0.75).abs() < 1e-6, "margin {}", cert.margin);
        assert!(cert.feasible());
    }

    #[test]
    fn scalar_unstable_system_margin() {
        let plant = LurePlant::new(
            DMatrix::from_element(1, 1, 1.5),
            DMatrix::zeros(1, 0),
            DMatrix::zeros(0, 1),
            DMatrix::zeros(0, 0),
        )
        .unwrap();
        let spec = SectorSlopeSpec { xi: DVector::zeros(0), mu: DVector::zeros(0) };
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Circle,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        assert!((cert.margin - 1.25).abs() < 1e-6, "margin {}", cert.margin);
        assert!(!cert.feasible());
    }

    #[test]
    fn packed_dimension_matches_structured_count() {
        let (plant, c) = example(3).unwrap();
        let spec = uniform_spec(&plant, 0.5, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm2,
            Assembly::Reference,
            MultiplierStructure::PerChannel,
            &opts,
        )
        .unwrap();
        let m = plant.n() + 2 * plant.n_q();
        assert_eq!(prob.packed_dim(), m * (m + 1) / 2 + 7 * plant.n_q());
    }

    #[test]
    fn circle_reduces_to_state_and_time_k_rows() {
        let (plant, c) = example(2).unwrap();
        let spec = uniform_spec(&plant, 0.1, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Circle,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let expect: Vec<usize> = (0..plant.n() + plant.n_q()).collect();
        assert_eq!(prob.active_rows(), expect.as_slice());
        for crit in [Criterion::Tsypkin, Criterion::Thm1, Criterion::Thm2] {
            let p = LmiFeasibilityProblem::build(
                &plant,
                &spec,
                crit,
                Assembly::Reference,
                MultiplierStructure::Common,
                &opts,
            )
            .unwrap();
            assert_eq!(p.active_rows().len(), plant.n() + 2 * plant.n_q());
        }
    }

    /// Example 1 at xi = 2.0 (below its slope-criterion bound) is feasible and
    /// the certificate re-verifies; at xi = 3.0 under the odd criterion it is
    /// infeasible (above the bound).
    #[test]
    fn example1_feasibility_bracketing() {
        let (plant, c) = example(1).unwrap();
        let opts = SolveOptions::default();
        let spec = uniform_spec(&plant, 2.0, c);
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm1,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        assert!(cert.feasible(), "margin {}", cert.margin);
        let re = verify_certificate(&plant, &cert, &spec, &opts).unwrap();
        assert!(re.verified);
        assert!((re.margin - cert.margin).abs() < 1e-9 * cert.margin.abs().max(1.0));

        let spec3 = uniform_spec(&plant, 3.0, c);
        let prob3 = LmiFeasibilityProblem::build(
            &plant,
            &spec3,
            Criterion::Thm2,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert3 = prob3.solve(&opts).unwrap();
        assert!(!cert3.feasible());
    }

    #[test]
    fn zero_multiplier_certificate_fails_verification() {
        let (plant, c) = example(4).unwrap();
        let spec = uniform_spec(&plant, 1.0, c);
        let opts = SolveOptions::default();
        let cert = Certificate {
            criterion: Criterion::Thm1,
            assembly: Assembly::Reference,
            structure: MultiplierStructure::Common,
            xi: spec.xi.clone(),
            mu: spec.mu.clone(),
            multipliers: MultiplierSet::zeros(plant.n(), plant.n_q()),
            margin: f64::NAN,
            p_min_eig: f64::NAN,
            p11_min_eig: f64::NAN,
            mult_min: f64::NAN,
            status: SolveStatus::Feasible,
            verified: true,
            solver_objective: 0.0,
            iterations: 0,
        };
        let re = verify_certificate(&plant, &cert, &spec, &opts).unwrap();
        assert!(!re.verified);
        assert!(re.margin.abs() < 1e-12);
    }

    /// Perturbing a certificate must be re-judged on recomputed values, not
    /// the stored claim.
    #[test]
    fn verifier_recomputes_after_perturbation() {
        let (plant, c) = example(4).unwrap();
        let spec = uniform_spec(&plant, 20.0, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm1,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        assert!(cert.feasible());
        let mut bad = cert.clone();
        let m = bad.multipliers.p.nrows();
        bad.multipliers.p[(m - 1, m - 1)] = -1.0;
        let re = verify_certificate(&plant, &bad, &spec, &opts).unwrap();
        assert!(!re.verified);
        assert!(re.p_min_eig < 0.0);
    }

    /// Homogeneity: scaling a verified multiplier set scales the margin.
    #[test]
    fn margin_scales_with_multipliers() {
        let (plant, c) = example(1).unwrap();
        let spec = uniform_spec(&plant, 1.0, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm1,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        let mut scaled = cert.clone();
        scaled.multipliers = cert.multipliers.scaled(2.5);
        let re = verify_certificate(&plant, &scaled, &spec, &opts).unwrap();
        assert!((re.margin - 2.5 * cert.margin).abs() < 1e-8 * cert.margin.abs().max(1.0));
    }

    #[test]
    fn certificate_json_round_trip() {
        let (plant, c) = example(4).unwrap();
        let spec = uniform_spec(&plant, 10.0, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm2,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        let file = CertificateFile::from_certificate(&cert, &plant, c);
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed: CertificateFile = serde_json::from_str(&text).unwrap();
        let (cert2, plant2, c2) = parsed.into_certificate().unwrap();
        assert_eq!(plant, plant2);
        assert_eq!(c, c2);
        assert_eq!(cert.verified, cert2.verified);
        let re = verify_certificate(&plant2, &cert2, &spec, &opts).unwrap();
        assert!((re.margin - cert.margin).abs() < 1e-9 * cert.margin.abs().max(1.0));
    }

    /// Small strict-shift robustness: adding delta I to a verified P keeps
    /// the certificate verified after margin recomputation.
    #[test]
    fn delta_shift_keeps_classification() {
        let (plant, c) = example(1).unwrap();
        let spec = uniform_spec(&plant, 1.5, c);
        let opts = SolveOptions::default();
        let prob = LmiFeasibilityProblem::build(
            &plant,
            &spec,
            Criterion::Thm1,
            Assembly::Reference,
            MultiplierStructure::Common,
            &opts,
        )
        .unwrap();
        let cert = prob.solve(&opts).unwrap();
        assert!(cert.feasible());
        let mut shifted = cert.clone();
        let m = shifted.multipliers.p.nrows();
        for i in 0..m {
            shifted.multipliers.p[(i, i)] += 1e-6;
        }
        let re = verify_certificate(&plant, &shifted, &spec, &opts).unwrap();
        assert!(re.verified, "margin after shift {}", re.margin);
    }
}
