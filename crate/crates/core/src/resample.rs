//! Classical upsampling baselines: piece-wise linear interpolation and
//! not-a-knot cubic splines.
//!
//! Both operate on uniformly sampled complex sequences and share one length
//! convention: interpolating n knots by a factor V yields V*(n-1)+1 points
//! on the knot span; the final V-1 points extend the last piece so every
//! call returns exactly V*n samples at V times the input rate. Real and
//! imaginary parts are interpolated independently (the spline system has
//! real coefficients, so solving it over complex values is exactly that).

use num_complex::Complex64;
use thiserror::Error;

use crate::signal::ComplexSequence;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("upsampling factor must be >= 1")]
    ZeroFactor,

    #[error("target rate needs a positive input rate, got {0} Hz")]
    NonPositiveRate(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("knot times must be strictly increasing")]
    NonIncreasingKnots,

    #[error("knot count {tau} does not match value count {values}")]
    KnotValueMismatch { tau: usize, values: usize },
}

/// The rate reached by upsampling: `factor * low_rate_hz`, exactly.
pub fn target_rate(factor: usize, low_rate_hz: f64) -> Result<f64, ResampleError> {
    if factor < 1 {
        return Err(ResampleError::ZeroFactor);
    }
    if !(low_rate_hz > 0.0) {
        return Err(ResampleError::NonPositiveRate(low_rate_hz));
    }
    Ok(factor as f64 * low_rate_hz)
}

/// Strictly increasing sample times paired with complex values.
#[derive(Debug, Clone)]
pub struct KnotGrid {
    tau: Vec<f64>,
    values: Vec<Complex64>,
}

impl KnotGrid {
    pub fn new(tau: Vec<f64>, values: Vec<Complex64>) -> Result<Self, ResampleError> {
        if tau.len() != values.len() {
            return Err(ResampleError::KnotValueMismatch {
                tau: tau.len(),
                values: values.len(),
            });
        }
        if tau.len() < 2 {
            return Err(ResampleError::TooShort {
                needed: 2,
                got: tau.len(),
            });
        }
        if tau.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ResampleError::NonIncreasingKnots);
        }
        Ok(Self { tau, values })
    }

    pub fn uniform(values: Vec<Complex64>, fs_hz: f64) -> Result<Self, ResampleError> {
        let tau = (0..values.len()).map(|k| k as f64 / fs_hz).collect();
        Self::new(tau, values)
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least two knots by construction
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// One cubic piece in local coordinates u = t - start:
/// P(u) = c0 + c1 u + c2 u^2 + c3 u^3.
#[derive(Debug, Clone)]
pub struct SplinePiece {
    pub start: f64,
    pub end: f64,
    pub coeffs: [Complex64; 4],
    pub start_slope: Complex64,
    pub end_slope: Complex64,
}

impl SplinePiece {
    pub fn value_at(&self, t: f64) -> Complex64 {
        let u = t - self.start;
        self.coeffs[0] + (self.coeffs[1] + (self.coeffs[2] + self.coeffs[3] * u) * u) * u
    }

    pub fn derivative_at(&self, t: f64) -> Complex64 {
        let u = t - self.start;
        self.coeffs[1] + (self.coeffs[2] * 2.0 + self.coeffs[3] * 3.0 * u) * u
    }
}

/// Piecewise cubic with continuous value and first derivative.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    pieces: Vec<SplinePiece>,
}

impl CubicSpline {
    /// Not-a-knot spline: the first two and last two pieces are each one
    /// cubic, which makes the interpolant reproduce cubic polynomials
    /// exactly. Needs at least 4 knots.
    pub fn not_a_knot(grid: &KnotGrid) -> Result<Self, ResampleError> {
        let n = grid.len();
        if n < 4 {
            return Err(ResampleError::TooShort { needed: 4, got: n });
        }
        let tau = grid.tau();
        let y = grid.values();
        let h: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<Complex64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        // Tridiagonal system for the knot slopes. Interior rows enforce C2
        // continuity; the end rows fold the not-a-knot condition into the
        // first and last equations so the system stays tridiagonal.
        let mut sub = vec![0.0f64; n];
        let mut diag = vec![0.0f64; n];
        let mut sup = vec![0.0f64; n];
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];

        diag[0] = h[1];
        sup[0] = h[0] + h[1];
        rhs[0] = (delta[0] * (h[1] * (2.0 * h[1] + 3.0 * h[0])) + delta[1] * (h[0] * h[0]))
            / (h[0] + h[1]);

        for i in 1..n - 1 {
            sub[i] = h[i];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i - 1];
            rhs[i] = (delta[i - 1] * h[i] + delta[i] * h[i - 1]) * 3.0;
        }

        let hl = h[n - 2];
        let hp = h[n - 3];
        sub[n - 1] = hl + hp;
        diag[n - 1] = hp;
        rhs[n - 1] = (delta[n - 2] * (hp * (2.0 * hp + 3.0 * hl)) + delta[n - 3] * (hl * hl))
            / (hl + hp);

        // Thomas elimination, no pivoting.
        let mut slopes = vec![Complex64::new(0.0, 0.0); n];
        let mut cp = vec![0.0f64; n];
        let mut dp = vec![Complex64::new(0.0, 0.0); n];
        cp[0] = sup[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - sub[i] * cp[i - 1];
            cp[i] = sup[i] / m;
            dp[i] = (rhs[i] - dp[i - 1] * sub[i]) / m;
        }
        slopes[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            slopes[i] = dp[i] - slopes[i + 1] * cp[i];
        }

        let pieces = (0..n - 1)
            .map(|i| {
                let hi = h[i];
                let c2 = (delta[i] * 3.0 - slopes[i] * 2.0 - slopes[i + 1]) / hi;
                let c3 = (slopes[i] + slopes[i + 1] - delta[i] * 2.0) / (hi * hi);
                SplinePiece {
                    start: tau[i],
                    end: tau[i + 1],
                    coeffs: [y[i], slopes[i], c2, c3],
                    start_slope: slopes[i],
                    end_slope: slopes[i + 1],
                }
            })
            .collect();
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[SplinePiece] {
        &self.pieces
    }

    fn piece_index_for(&self, t: f64) -> usize {
        // Extrapolate with the boundary pieces outside the knot span.
        if t <= self.pieces[0].start {
            return 0;
        }
        match self
            .pieces
            .binary_search_by(|p| p.start.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.pieces.len() - 1),
            Err(ins) => ins.saturating_sub(1).min(self.pieces.len() - 1),
        }
    }

    pub fn value_at(&self, t: f64) -> Complex64 {
        self.pieces[self.piece_index_for(t)].value_at(t)
    }

    pub fn derivative_at(&self, t: f64) -> Complex64 {
        self.pieces[self.piece_index_for(t)].derivative_at(t)
    }
}

fn check_upsample_args(len: usize, min_len: usize, factor: usize) -> Result<(), ResampleError> {
    if factor < 1 {
        return Err(ResampleError::ZeroFactor);
    }
    if len < min_len {
        return Err(ResampleError::TooShort {
            needed: min_len,
            got: len,
        });
    }
    Ok(())
}

/// Piece-wise linear upsampling. Knot samples pass through exactly; points
/// between knots lie on the connecting chord.
pub fn lai_upsample(sig: &ComplexSequence, factor: usize) -> Result<ComplexSequence, ResampleError> {
    check_upsample_args(sig.len(), 2, factor)?;
    if factor == 1 {
        return Ok(sig.clone());
    }
    let y = sig.samples();
    let n = y.len();
    let v = factor;
    let mut out = Vec::with_capacity(n * v);
    for m in 0..n * v {
        if m % v == 0 && m / v < n {
            out.push(y[m / v]);
            continue;
        }
        let k = (m / v).min(n - 2); // last chord extends past the final knot
        let frac = m as f64 / v as f64 - k as f64;
        out.push(y[k] + (y[k + 1] - y[k]) * frac);
    }
    Ok(ComplexSequence::new(out, sig.fs_hz() * v as f64).expect("nonempty"))
}

/// Cubic-spline upsampling with not-a-knot end conditions.
pub fn csi_upsample(sig: &ComplexSequence, factor: usize) -> Result<ComplexSequence, ResampleError> {
    check_upsample_args(sig.len(), 4, factor)?;
    if factor == 1 {
        return Ok(sig.clone());
    }
    let n = sig.len();
    let v = factor;
    let grid = KnotGrid::uniform(sig.samples().to_vec(), sig.fs_hz())?;
    let spline = CubicSpline::not_a_knot(&grid)?;
    let mut out = Vec::with_capacity(n * v);
    for m in 0..n * v {
        if m % v == 0 && m / v < n {
            out.push(sig.samples()[m / v]);
            continue;
        }
        let t = m as f64 / (v as f64 * sig.fs_hz());
        out.push(spline.value_at(t));
    }
    Ok(ComplexSequence::new(out, sig.fs_hz() * v as f64).expect("nonempty"))
}
