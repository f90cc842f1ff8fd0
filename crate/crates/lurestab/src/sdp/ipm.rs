//! Small dense primal-dual interior-point solver for block-diagonal SDPs.
//!
//! Solves the pair
//!
//! ```text
//! (P) min <C, X>   s.t.  <A_i, X> = b_i,  X >= 0
//! (D) max b' y     s.t.  sum_i y_i A_i + S = C,  S >= 0
//! ```
//!
//! over a block-diagonal symmetric cone, with Nesterov-Todd scaling and a
//! Mehrotra-style centering heuristic. Aimed at desk-scale problems (largest
//! bundled block is 17x17); everything is dense.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Block-diagonal symmetric matrix, stored as its dense diagonal blocks.
#[derive(Debug, Clone)]
pub struct BlockMat {
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockMat {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self { blocks: sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect() }
    }

    pub fn identity(sizes: &[usize]) -> Self {
        Self { blocks: sizes.iter().map(|&s| DMatrix::identity(s, s)).collect() }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * a).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    fn symmetrize(&mut self) {
        for b in &mut self.blocks {
            let t = b.transpose();
            *b += t;
            *b *= 0.5;
        }
    }
}

/// Dual-form SDP: `max b'y  s.t.  C - sum_i y_i A_i >= 0`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub c: BlockMat,
    pub a: Vec<BlockMat>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub x: BlockMat,
    pub s: BlockMat,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_res: f64,
    pub dual_res: f64,
}

struct NtScaling {
    /// W per block, with W S W = X.
    w: Vec<DMatrix<f64>>,
}

fn chol(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l())
}

/// Largest step `alpha` keeping `M + alpha dM` positive definite, via the
/// generalized eigenvalue bound `lambda_min(L^-1 dM L^-T)`.
fn max_step(m_chol_l: &DMatrix<f64>, dm: &DMatrix<f64>) -> f64 {
    if dm.nrows() == 0 {
        return f64::INFINITY;
    }
    let li = m_chol_l
        .clone()
        .try_inverse()
        .expect("Cholesky factor is triangular nonsingular");
    let t = &li * dm * li.transpose();
    let t = 0.5 * (&t + t.transpose());
    let eig = t.symmetric_eigen();
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn nt_scaling(x: &BlockMat, s: &BlockMat) -> Option<NtScaling> {
    let mut w = Vec::with_capacity(x.blocks.len());
    for (xb, sb) in x.blocks.iter().zip(&s.blocks) {
        if xb.nrows() == 0 {
            w.push(DMatrix::zeros(0, 0));
            continue;
        }
        let lx = chol(xb)?;
        let ls = chol(sb)?;
        // Ls' Lx = U Sigma V'  =>  R = Lx V Sigma^{-1/2},  W = R R'
        let svd = (ls.transpose() * &lx).svd(true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let _ = u;
        let mut sig_inv_sqrt = DMatrix::zeros(svd.singular_values.len(), svd.singular_values.len());
        for (i, &sv) in svd.singular_values.iter().enumerate() {
            if sv <= 0.0 {
                return None;
            }
            sig_inv_sqrt[(i, i)] = 1.0 / sv.sqrt();
        }
        let r = &lx * vt.transpose() * sig_inv_sqrt;
        let mut wb = &r * r.transpose();
        let wt = wb.transpose();
        wb += wt;
        wb *= 0.5;
        w.push(wb);
    }
    Some(NtScaling { w })
}

fn apply_adjoint(a: &[BlockMat], y: &DVector<f64>, sizes: &[usize]) -> BlockMat {
    let mut out = BlockMat::zeros(sizes);
    for (ai, &yi) in a.iter().zip(y.iter()) {
        if yi != 0.0 {
            for (ob, ab) in out.blocks.iter_mut().zip(&ai.blocks) {
                *ob += ab * yi;
            }
        }
    }
    out
}

fn apply_forward(a: &[BlockMat], x: &BlockMat) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().map(|ai| ai.dot(x)))
}

/// Solve the block SDP. Deterministic for fixed inputs and tolerances.
pub fn solve(prob: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    let sizes = &prob.block_sizes;
    let nvar = prob.a.len();
    let nu: usize = sizes.iter().sum();
    if nu == 0 || nvar == 0 {
        return Err(Error::InvalidArgument("empty SDP".into()));
    }
    let nu_f = nu as f64;

    let scale = prob.c.norm().max(1.0) / (nu_f.sqrt());
    let mut x = BlockMat::identity(sizes).scale(scale.max(1.0));
    let mut s = BlockMat::identity(sizes).scale(scale.max(1.0));
    let mut y = DVector::zeros(nvar);

    let b_norm = prob.b.norm().max(1.0);
    let c_norm = prob.c.norm().max(1.0);

    for iter in 0..max_iter {
        let r_p = &prob.b - apply_forward(&prob.a, &x);
        let mut r_d = prob.c.sub(&s).sub(&apply_adjoint(&prob.a, &y, sizes));
        r_d.symmetrize();
        let mu = x.dot(&s) / nu_f;
        let pobj = prob.c.dot(&x);
        let dobj = prob.b.dot(&y);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let primal_res = r_p.norm() / b_norm;
        let dual_res = r_d.norm() / c_norm;
        if rel_gap < tol && primal_res < tol && dual_res < tol {
            return Ok(SdpSolution { y, x, s, iterations: iter, rel_gap, primal_res, dual_res });
        }

        let nt = nt_scaling(&x, &s)
            .ok_or_else(|| Error::Indeterminate("interior point lost positive definiteness".into()))?;

        // Precompute W A_i W and the Schur complement H_ij = <A_i, W A_j W>.
        let waw: Vec<BlockMat> = prob
            .a
            .iter()
            .map(|ai| BlockMat {
                blocks: ai
                    .blocks
                    .iter()
                    .zip(&nt.w)
                    .map(|(ab, wb)| wb * ab * wb)
                    .collect(),
            })
            .collect();
        let mut h = DMatrix::zeros(nvar, nvar);
        for i in 0..nvar {
            for j in i..nvar {
                let v = prob.a[i].dot(&waw[j]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let h_chol = match nalgebra::Cholesky::new(h.clone()) {
            Some(c) => c,
            None => {
                // tiny ridge against near-dependence of the constraints
                let ridge = 1e-12 * h.trace().max(1.0) / nvar as f64;
                let mut hr = h.clone();
                for i in 0..nvar {
                    hr[(i, i)] += ridge;
                }
                nalgebra::Cholesky::new(hr).ok_or_else(|| {
                    Error::Indeterminate("Schur complement not positive definite".into())
                })?
            }
        };

        let s_inv: Vec<DMatrix<f64>> = s
            .blocks
            .iter()
            .map(|sb| {
                if sb.nrows() == 0 {
                    DMatrix::zeros(0, 0)
                } else {
                    let l = chol(sb).expect("S stays positive definite");
                    let li = l.try_inverse().expect("triangular inverse");
                    li.transpose() * li
                }
            })
            .collect();

        // direction for a given centering parameter sigma
        let solve_dir = |sigma: f64| -> (DVector<f64>, BlockMat, BlockMat) {
            // dX + W dS W = sigma mu S^{-1} - X,  dS = R_d - A*(dy)
            // => A(W A*(dy) W) = r_p - A(sigma mu S^{-1} - X - W R_d W)
            let mut target = BlockMat {
                blocks: s_inv.iter().map(|si| si * (sigma * mu)).collect(),
            };
            target = target.sub(&x);
            let mut w_rd_w = BlockMat::zeros(sizes);
            for ((ob, rb), wb) in w_rd_w.blocks.iter_mut().zip(&r_d.blocks).zip(&nt.w) {
                *ob = wb * rb * wb;
            }
            let rhs_mat = target.sub(&w_rd_w);
            let rhs = &r_p - apply_forward(&prob.a, &rhs_mat);
            let dy = h_chol.solve(&rhs);
            let ds = r_d.sub(&apply_adjoint(&prob.a, &dy, sizes));
            let mut w_ds_w = BlockMat::zeros(sizes);
            for ((ob, db), wb) in w_ds_w.blocks.iter_mut().zip(&ds.blocks).zip(&nt.w) {
                *ob = wb * db * wb;
            }
            let mut dx = rhs_mat.sub(&w_ds_w);
            dx.symmetrize();
            let mut ds = ds;
            ds.symmetrize();
            (dy, dx, ds)
        };

        let x_chols: Vec<DMatrix<f64>> =
            x.blocks.iter().map(|b| chol(b).expect("X stays positive definite")).collect();
        let s_chols: Vec<DMatrix<f64>> =
            s.blocks.iter().map(|b| chol(b).expect("S stays positive definite")).collect();
        let step_to_boundary = |dx: &BlockMat, ds: &BlockMat| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for i in 0..sizes.len() {
                ap = ap.min(max_step(&x_chols[i], &dx.blocks[i]));
                ad = ad.min(max_step(&s_chols[i], &ds.blocks[i]));
            }
            (ap, ad)
        };

        // predictor for the centering heuristic
        let (_, dx_aff, ds_aff) = solve_dir(0.0);
        let (ap_aff, ad_aff) = step_to_boundary(&dx_aff, &ds_aff);
        let ap_aff = ap_aff.min(1.0);
        let ad_aff = ad_aff.min(1.0);
        let mu_aff = {
            let xa = x.add(&dx_aff.scale(ap_aff));
            let sa = s.add(&ds_aff.scale(ad_aff));
            xa.dot(&sa) / nu_f
        };
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-3, 0.8);

        let (dy, dx, ds) = solve_dir(sigma);
        let (ap, ad) = step_to_boundary(&dx, &ds);
        let alpha_p = (0.98 * ap).min(1.0);
        let alpha_d = (0.98 * ad).min(1.0);

        x = x.add(&dx.scale(alpha_p));
        s = s.add(&ds.scale(alpha_d));
        y += dy * alpha_d;

        if !x.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
            || !y.iter().all(|v| v.is_finite())
        {
            return Err(Error::Indeterminate("non-finite iterate".into()));
        }
    }
    Err(Error::Indeterminate(format!(
        "no convergence within {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// max -t s.t. tI - M >= 0 has optimum t* = lambda_max(M).
    fn eig_problem(m: DMatrix<f64>) -> SdpProblem {
        let k = m.nrows();
        SdpProblem {
            block_sizes: vec![k],
            c: BlockMat { blocks: vec![-m] },
            a: vec![BlockMat { blocks: vec![-DMatrix::identity(k, k)] }],
            b: DVector::from_element(1, -1.0),
        }
    }

    #[test]
    fn recovers_lambda_max() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, -1.0, 0.5, 0.0, 0.5, 0.3]);
        let m: DMatrix<f64> = 0.5 * (&m + m.transpose());
        let truth = m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let sol = solve(&eig_problem(m), 1e-10, 200).unwrap();
        assert!((sol.y[0] - truth).abs() < 1e-8, "{} vs {}", sol.y[0], truth);
    }

    #[test]
    fn two_block_diag_problem() {
        // max -t s.t. t >= a, t >= b over two 1x1 blocks: t* = max(a, b)
        let (a, b) = (0.7, -0.2);
        let prob = SdpProblem {
            block_sizes: vec![1, 1],
            c: BlockMat {
                blocks: vec![DMatrix::from_element(1, 1, -a), DMatrix::from_element(1, 1, -b)],
            },
            a: vec![BlockMat {
                blocks: vec![
                    DMatrix::from_element(1, 1, -1.0),
                    DMatrix::from_element(1, 1, -1.0),
                ],
            }],
            b: DVector::from_element(1, -1.0),
        };
        let sol = solve(&prob, 1e-10, 200).unwrap();
        assert!((sol.y[0] - a).abs() < 1e-8);
    }

    /// Two-variable eigenvalue minimization cross-checked against a dense
    /// grid search (independent oracle).
    #[test]
    fn matches_grid_search_on_two_parameter_family() {
        let m0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, -0.5]);
        let m1 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.4, 0.3]);
        let m2 = DMatrix::from_row_slice(2, 2, &[0.1, -0.7, -0.7, 0.6]);
        // min over (u, v) in [-1, 1]^2 of lambda_max(M0 + u M1 + v M2) subject to
        // u, v in [-1, 1] encoded as 1x1 blocks.
        let lam = |u: f64, v: f64| -> f64 {
            let m = &m0 + &m1 * u + &m2 * v;
            let m = 0.5 * (&m + m.transpose());
            m.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
        };
        let mut best = f64::INFINITY;
        let grid = 400;
        for i in 0..=grid {
            for j in 0..=grid {
                let u = -1.0 + 2.0 * i as f64 / grid as f64;
                let v = -1.0 + 2.0 * j as f64 / grid as f64;
                best = best.min(lam(u, v));
            }
        }
        // variables y = (t, u, v); blocks: tI - M(u,v) >= 0, 1 - u >= 0, 1 + u >= 0, 1 - v >= 0, 1 + v >= 0
        let e = |v: f64| DMatrix::from_element(1, 1, v);
        let prob = SdpProblem {
            block_sizes: vec![2, 1, 1, 1, 1],
            c: BlockMat {
                blocks: vec![-&m0, e(1.0), e(1.0), e(1.0), e(1.0)],
            },
            a: vec![
                BlockMat {
                    blocks: vec![-DMatrix::identity(2, 2), e(0.0), e(0.0), e(0.0), e(0.0)],
                },
                BlockMat { blocks: vec![m1.clone(), e(1.0), e(-1.0), e(0.0), e(0.0)] },
                BlockMat { blocks: vec![m2.clone(), e(0.0), e(0.0), e(1.0), e(-1.0)] },
            ],
            b: DVector::from_row_slice(&[-1.0, 0.0, 0.0]),
        };
        let sol = solve(&prob, 1e-10, 300).unwrap();
        let t_star = sol.y[0];
        assert!(
            (t_star - best).abs() < 2e-4,
            "ipm {t_star} vs grid {best} (grid resolution limits agreement)"
        );
        assert!(t_star <= best + 1e-8);
    }

    #[test]
    fn scale_invariance_of_optimum_sign() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.3, -2.0]);
        let sol1 = solve(&eig_problem(m.clone()), 1e-10, 200).unwrap();
        let sol2 = solve(&eig_problem(m * 100.0), 1e-10, 200).unwrap();
        assert!(sol1.y[0] < 0.0 && sol2.y[0] < 0.0);
        assert!((sol2.y[0] / sol1.y[0] - 100.0).abs() < 1e-6);
    }
}
