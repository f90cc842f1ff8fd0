//! Plant representation, realization utilities, stability prechecks, and the
//! bundled benchmark examples.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discrete-time Lur'e plant `x+ = Ax + Bp`, `q = Cx + Dp`, `p = -phi(q)`.
///
/// The nonlinearity is square and diagonal, so the number of plant inputs
/// equals the number of outputs (`n_p == n_q`).
#[derive(Debug, Clone, PartialEq)]
pub struct LurePlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LurePlant {
    /// Build a plant, checking dimensions and the equilibrium condition
    /// `Ker A ∩ Ker B = {0}` (rank of the stacked `[A; B]` equals `n`).
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square, got {}x{}", n, a.ncols())));
        }
        let n_p = b.ncols();
        let n_q = c.nrows();
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {}", b.nrows(), n)));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} cols, expected {}", c.ncols(), n)));
        }
        if d.nrows() != n_q || d.ncols() != n_p {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                n_q,
                n_p
            )));
        }
        if n_p != n_q {
            return Err(Error::Dimension(format!(
                "nonlinearity must be square: n_p = {n_p}, n_q = {n_q}"
            )));
        }
        for m in [&a, &b, &c, &d] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("plant matrices must be finite".into()));
            }
        }
        let mut stacked = DMatrix::zeros(n + n_p, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&a);
        stacked.view_mut((n, 0), (n_p, n)).copy_from(&b.transpose());
        if rank(&stacked, 1e-10) < n {
            return Err(Error::InvalidArgument(
                "Ker A ∩ Ker B must be trivial (origin must be the unique equilibrium)".into(),
            ));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Nonlinearity input dimension (= output dimension).
    pub fn n_q(&self) -> usize {
        self.c.nrows()
    }
    /// True when the feedthrough matrix is exactly zero.
    pub fn strictly_proper(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }
}

/// Per-channel sector bounds `xi` and slope bounds `mu`, with the scaling
/// `mu = c * xi` used when a single sector parameter is swept.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSlopeSpec {
    pub xi: DVector<f64>,
    pub mu: DVector<f64>,
}

impl SectorSlopeSpec {
    pub fn new(xi: DVector<f64>, mu: DVector<f64>) -> Result<Self> {
        if xi.len() != mu.len() {
            return Err(Error::Dimension("xi and mu must have equal length".into()));
        }
        if xi.iter().chain(mu.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sector and slope bounds must be positive and finite".into(),
            ));
        }
        Ok(Self { xi, mu })
    }

    /// Uniform bounds over all channels: `xi_i = xi`, `mu_i = slope_scale * xi`.
    pub fn uniform(n_q: usize, xi: f64, slope_scale: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n_q, xi),
            DVector::from_element(n_q, slope_scale * xi),
        )
    }

    pub fn n_q(&self) -> usize {
        self.xi.len()
    }
}

/// SISO transfer function with coefficients in descending powers of z.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let num = trim_leading_zeros(num);
        let den = trim_leading_zeros(den);
        if den.is_empty() || den[0] == 0.0 {
            return Err(Error::InvalidArgument(
                "denominator must have a nonzero leading coefficient".into(),
            ));
        }
        if num.len() > den.len() {
            return Err(Error::InvalidArgument(
                "improper transfer function: numerator degree exceeds denominator degree".into(),
            ));
        }
        Ok(Self { num, den })
    }

    /// Evaluate at a complex point.
    pub fn eval(&self, z: Complex<f64>) -> Complex<f64> {
        poly_eval(&self.num, z) / poly_eval(&self.den, z)
    }
}

fn trim_leading_zeros(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p[0] == 0.0 {
        p.remove(0);
    }
    if p == [0.0] {
        p.clear();
        p.push(0.0);
    }
    p
}

fn poly_eval(p: &[f64], z: Complex<f64>) -> Complex<f64> {
    p.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Coefficient-level polynomial product, descending powers.
pub fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

/// Largest eigenvalue magnitude of a square matrix. The plant is nominally
/// (Schur) stable iff this is below one.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let eigs = a.complex_eigenvalues();
    Ok(eigs.iter().map(|e| e.norm()).fold(0.0, f64::max))
}

/// Numerical rank via singular values.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Controllable-canonical realization of a proper SISO transfer function.
/// `D = 0` when strictly proper.
pub fn tf_to_ss(tf: &TransferFunction) -> Result<LurePlant> {
    let den = &tf.den;
    let n = den.len() - 1;
    if n == 0 {
        return Err(Error::InvalidArgument("static transfer function has no state".into()));
    }
    let lead = den[0];
    // monic denominator
    let a_coeffs: Vec<f64> = den[1..].iter().map(|&c| c / lead).collect();
    // pad numerator to denominator length
    let mut num = vec![0.0; den.len() - tf.num.len()];
    num.extend(tf.num.iter().map(|&c| c / lead));
    let d0 = num[0];
    // strictly proper remainder: num - d0 * den_monic
    let rem: Vec<f64> = (1..=n).map(|i| num[i] - d0 * a_coeffs[i - 1]).collect();

    let mut a = DMatrix::zeros(n, n);
    for (j, &aj) in a_coeffs.iter().enumerate() {
        a[(0, j)] = -aj;
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    let c = DMatrix::from_row_slice(1, n, &rem);
    let d = DMatrix::from_element(1, 1, d0);
    LurePlant::new(a, b, c, d)
}

/// Evaluate the realized transfer function `C (zI - A)^{-1} B + D` at `z`.
pub fn ss_eval(plant: &LurePlant, z: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
    let n = plant.n();
    let mut zi_a = DMatrix::from_fn(n, n, |i, j| Complex::new(-plant.a()[(i, j)], 0.0));
    for i in 0..n {
        zi_a[(i, i)] += z;
    }
    let bc = plant.b().map(|v| Complex::new(v, 0.0));
    let x = zi_a
        .lu()
        .solve(&bc)
        .ok_or_else(|| Error::Numerical("zI - A singular at evaluation point".into()))?;
    let cc = plant.c().map(|v| Complex::new(v, 0.0));
    let dc = plant.d().map(|v| Complex::new(v, 0.0));
    Ok(cc * x + dc)
}

/// Kalman rank test report. Non-minimality is a warning, not an error; the
/// plant constructor already enforces the trivial-kernel condition that keeps
/// the origin the unique equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimalityReport {
    pub controllable: bool,
    pub observable: bool,
}

pub fn check_minimality(plant: &LurePlant) -> MinimalityReport {
    let n = plant.n();
    let n_q = plant.n_q();
    let mut ctrb = DMatrix::zeros(n, n * n_q);
    let mut block = plant.b().clone();
    for k in 0..n {
        ctrb.view_mut((0, k * n_q), (n, n_q)).copy_from(&block);
        block = plant.a() * &block;
    }
    let mut obsv = DMatrix::zeros(n * n_q, n);
    let mut row = plant.c().clone();
    for k in 0..n {
        obsv.view_mut((k * n_q, 0), (n_q, n)).copy_from(&row);
        row = &row * plant.a();
    }
    MinimalityReport {
        controllable: rank(&ctrb, 1e-10) == n,
        observable: rank(&obsv, 1e-10) == n,
    }
}

/// Bundled benchmark plants. Returns the plant together with the slope scale
/// `c` such that `mu = c * xi` during sector sweeps.
pub fn example(id: usize) -> Result<(LurePlant, f64)> {
    match id {
        1 => {
            // G(z) = (-0.5 z + 0.1) / ((z^2 - z + 0.89)(z + 0.1)), expanded at
            // construction so the product is the oracle for the coefficients.
            let den = poly_mul(&[1.0, -1.0, 0.89], &[1.0, 0.1]);
            let tf = TransferFunction::new(vec![-0.5, 0.1], den)?;
            Ok((tf_to_ss(&tf)?, 2.0))
        }
        2 => {
            let a = DMatrix::from_partial_diagonal(
                5,
                5,
                &[0.2948, 0.4568, 0.0226, 0.3801, -0.3270],
            );
            let b = DMatrix::from_row_slice(
                5,
                2,
                &[
                    -1.1878, 0.2341, //
                    -2.2023, 0.0215, //
                    0.9863, -1.0039, //
                    -0.5186, -0.9471, //
                    0.3274, -0.3744,
                ],
            );
            let c = DMatrix::from_row_slice(
                2,
                5,
                &[
                    -1.1859, 1.4725, -1.2173, -1.1283, -0.2611, //
                    -1.0559, 0.0557, -0.0412, -1.3493, 0.9535,
                ],
            );
            let d = DMatrix::zeros(2, 2);
            Ok((LurePlant::new(a, b, c, d)?, 1.0))
        }
        3 => {
            let a = DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0469, -0.3992, -0.0835, //
                    0.3902, -0.5363, -0.2744, //
                    0.4378, -1.3576, 0.4651,
                ],
            );
            let b = DMatrix::from_row_slice(
                3,
                2,
                &[
                    -0.5673, -0.2785, //
                    0.1155, -0.0649, //
                    -2.1849, -0.5976,
                ],
            );
            let c = DMatrix::from_row_slice(
                2,
                3,
                &[
                    0.3587, -1.0802, -0.6802, //
                    -1.3833, -1.0677, 1.1497,
                ],
            );
            let d = DMatrix::zeros(2, 2);
            Ok((LurePlant::new(a, b, c, d)?, 1.0))
        }
        4 => {
            let a = DMatrix::from_partial_diagonal(3, 3, &[0.4030, -0.1502, -0.1502]);
            let b = DMatrix::from_row_slice(3, 1, &[-0.2494, 0.2542, -0.2036]);
            let c = DMatrix::from_row_slice(1, 3, &[0.9894, 0.6649, 0.4339]);
            let d = DMatrix::zeros(1, 1);
            Ok((LurePlant::new(a, b, c, d)?, 2.0))
        }
        5 => {
            let a = DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.4783, 0.0, 0.0, 0.0, //
                    0.0, 0.7871, 0.0, 0.0, //
                    0.0, 0.0, 0.7871, 1.0, //
                    0.0, 0.0, 0.0, 0.7871,
                ],
            );
            let b = DMatrix::from_row_slice(4, 1, &[-1.5174, 1.2181, 0.2496, -0.5181]);
            let c = DMatrix::from_row_slice(1, 4, &[0.8457, -2.0885, 1.2190, 0.1683]);
            let d = DMatrix::zeros(1, 1);
            Ok((LurePlant::new(a, b, c, d)?, 2.0))
        }
        6 => {
            let a = DMatrix::from_partial_diagonal(
                9,
                9,
                &[0.5359, 0.9417, 0.9802, 0.5777, -0.1227, -0.0034, -0.5721, 0.2870, -0.3599],
            );
            let mut b = DMatrix::zeros(9, 4);
            for (i, j) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 0), (5, 1), (6, 2), (7, 3), (8, 0)]
            {
                b[(i, j)] = 1.0;
            }
            let mut c = DMatrix::zeros(4, 9);
            for (i, j) in [(0, 0), (0, 1), (1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7), (3, 8)]
            {
                c[(i, j)] = 1.0;
            }
            let d = DMatrix::zeros(4, 4);
            Ok((LurePlant::new(a, b, c, d)?, 1.0))
        }
        _ => Err(Error::InvalidArgument(format!("unknown example id {id}, expected 1..6"))),
    }
}

/// JSON plant file: row-major matrices plus the slope scale.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlantFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub slope_scale: f64,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl PlantFile {
    pub fn from_plant(plant: &LurePlant, slope_scale: f64) -> Self {
        Self {
            a: matrix_to_rows(plant.a()),
            b: matrix_to_rows(plant.b()),
            c: matrix_to_rows(plant.c()),
            d: matrix_to_rows(plant.d()),
            slope_scale,
        }
    }

    pub fn into_plant(&self) -> Result<(LurePlant, f64)> {
        if !(self.slope_scale > 0.0) || !self.slope_scale.is_finite() {
            return Err(Error::InvalidArgument("slope_scale must be positive".into()));
        }
        let plant = LurePlant::new(
            rows_to_matrix(&self.a, "A")?,
            rows_to_matrix(&self.b, "B")?,
            rows_to_matrix(&self.c, "C")?,
            rows_to_matrix(&self.d, "D")?,
        )?;
        Ok((plant, self.slope_scale))
    }
}

pub fn load_plant(path: &std::path::Path) -> Result<(LurePlant, f64)> {
    let text = std::fs::read_to_string(path)?;
    let file: PlantFile = serde_json::from_str(&text)?;
    file.into_plant()
}

pub fn save_plant(path: &std::path::Path, plant: &LurePlant, slope_scale: f64) -> Result<()> {
    let file = PlantFile::from_plant(plant, slope_scale);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
