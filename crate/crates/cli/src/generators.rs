//! Synthetic regression instances.

use std::fmt;
use std::str::FromStr;

use lever_sketch_core::densemat::PivotedQr;
use lever_sketch_core::rng::{stream_rng, StreamRng};
use lever_sketch_core::{DenseMatrix, Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Singular values of `ill_conditioned` decay geometrically over this many decades.
pub const ILL_CONDITIONED_DECADES: f64 = 8.0;
/// Row 0 of `coherent_rows` is scaled by this times `√n`.
pub const COHERENT_ROW_SCALE: f64 = 1e4;
/// Default `‖η‖_F / ‖A X♮‖_F`.
pub const DEFAULT_RESIDUAL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// I.i.d. standard normal entries.
    Gaussian,
    /// Planted SVD with singular values `10⁰ … 10⁻⁸`.
    IllConditioned,
    /// Gaussian with one dominant row whose leverage score is close to 1.
    CoherentRows,
}

impl Generator {
    pub const ALL: [Generator; 3] = [Generator::Gaussian, Generator::IllConditioned, Generator::CoherentRows];

    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Gaussian => "gaussian",
            Generator::IllConditioned => "ill_conditioned",
            Generator::CoherentRows => "coherent_rows",
        }
    }

    pub fn validate(self, n: usize, d: usize) -> Result<()> {
        if n == 0 || d == 0 {
            return Err(Error::NonPositiveDimension);
        }
        if self == Generator::IllConditioned && n < d {
            return Err(Error::InvalidParameter(format!("ill_conditioned needs n >= d (n = {n}, d = {d})")));
        }
        Ok(())
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown generator {s:?}")))
    }
}

fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(rng: &mut StreamRng, rows: usize, cols: usize) -> DenseMatrix {
    loop {
        let qr = PivotedQr::new(&gaussian(rng, rows, cols));
        if qr.rank() == cols {
            return qr.thin_q();
        }
    }
}

/// Draws an `n × d` design matrix from `g`.
pub fn design_matrix(g: Generator, n: usize, d: usize, rng: &mut StreamRng) -> Result<DenseMatrix> {
    g.validate(n, d)?;
    Ok(match g {
        Generator::Gaussian => gaussian(rng, n, d),
        Generator::IllConditioned => {
            let left = orthonormal_columns(rng, n, d);
            let right = orthonormal_columns(rng, d, d);
            let step = if d > 1 { ILL_CONDITIONED_DECADES / (d - 1) as f64 } else { 0.0 };
            let sigma: Vec<f64> = (0..d).map(|j| 10f64.powf(-step * j as f64)).collect();
            left.matmul(&DenseMatrix::from_diagonal(&sigma))?.matmul(&right.transpose())?
        }
        Generator::CoherentRows => {
            let mut a = gaussian(rng, n, d);
            let scale = COHERENT_ROW_SCALE * (n as f64).sqrt();
            a.row_mut(0).iter_mut().for_each(|v| *v *= scale);
            a
        }
    })
}

/// A design matrix, right-hand sides `B = A X♮ + η`, and the planted `X♮`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub x_planted: DenseMatrix,
}

/// Builds an instance with `‖η‖_F = residual_fraction · ‖A X♮‖_F`.
pub fn instance(
    g: Generator,
    n: usize,
    d: usize,
    big_n: usize,
    residual_fraction: f64,
    seed: u64,
) -> Result<Instance> {
    if big_n == 0 {
        return Err(Error::NonPositiveDimension);
    }
    if !(residual_fraction >= 0.0 && residual_fraction.is_finite()) {
        return Err(Error::InvalidParameter(format!("residual fraction {residual_fraction}")));
    }
    let mut rng = stream_rng(seed);
    let a = design_matrix(g, n, d, &mut rng)?;
    let x_planted = gaussian(&mut rng, d, big_n);
    let signal = a.matmul(&x_planted)?;
    let noise = gaussian(&mut rng, n, big_n);
    let scale = residual_fraction * signal.frobenius() / noise.frobenius();
    let b = signal.add(&noise.scale(scale))?;
    Ok(Instance { a, b, x_planted })
}
