//! Fixed-point arithmetic over power-of-two rings Z_{2^ell}.
//!
//! Residues are held in 64-bit words masked to `ell` bits after every
//! operation; `ell = 64` uses the natural wraparound. Negative reals are
//! embedded by two's complement: encode(x) = floor(x * 2^s) mod 2^ell.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("value {0} overflows the signed range of the ring")]
    Overflow(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid ring parameters: ell={ell}, scale={scale}")]
    BadParams { ell: u32, scale: u32 },
}

/// Bit width and fractional scale of a fixed-point ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingParams {
    pub ell: u32,
    pub scale: u32,
}

impl RingParams {
    pub fn new(ell: u32, scale: u32) -> Result<RingParams, RingError> {
        // ell = 4 is below the protocol range but kept for exhaustive tests
        if !(2..=64).contains(&ell) || scale > ell - 2 {
            return Err(RingError::BadParams { ell, scale });
        }
        Ok(RingParams { ell, scale })
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.ell == 64 {
            u64::MAX
        } else {
            (1u64 << self.ell) - 1
        }
    }

    #[inline]
    pub fn reduce(&self, v: u64) -> u64 {
        v & self.mask()
    }

    /// Signed reinterpretation of a residue in [-2^{ell-1}, 2^{ell-1}).
    #[inline]
    pub fn to_signed(&self, r: u64) -> i64 {
        let r = self.reduce(r);
        if self.ell == 64 {
            r as i64
        } else if r >= 1u64 << (self.ell - 1) {
            ((r as i128) - (1i128 << self.ell)) as i64
        } else {
            r as i64
        }
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    /// floor(x * 2^s) mod 2^ell, failing when |x| * 2^s reaches 2^{ell-1}.
    pub fn encode(&self, x: f64) -> Result<u64, RingError> {
        let scaled = x * (self.scale_factor());
        if !scaled.is_finite() || scaled.abs() >= (2f64).powi(self.ell as i32 - 1) {
            return Err(RingError::Overflow(x));
        }
        Ok(self.from_signed(scaled.floor() as i64))
    }

    /// Signed reinterpretation divided by 2^s.
    pub fn decode(&self, r: u64) -> f64 {
        self.to_signed(r) as f64 / self.scale_factor()
    }

    #[inline]
    pub fn scale_factor(&self) -> f64 {
        (2f64).powi(self.scale as i32)
    }
}

pub fn encode_real(x: f64, params: RingParams) -> Result<u64, RingError> {
    params.encode(x)
}

pub fn decode_real(r: u64, params: RingParams) -> f64 {
    params.decode(r)
}

/// Row-major matrix of residues over Z_{2^ell}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTensor {
    pub params: RingParams,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u64>,
}

impl RingTensor {
    pub fn zeros(params: RingParams, rows: usize, cols: usize) -> RingTensor {
        RingTensor {
            params,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_residues(
        params: RingParams,
        rows: usize,
        cols: usize,
        data: Vec<u64>,
    ) -> Result<RingTensor, RingError> {
        if data.len() != rows * cols {
            return Err(RingError::DimensionMismatch(format!(
                "{}x{} tensor needs {} residues, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        let data = data.into_iter().map(|v| params.reduce(v)).collect();
        Ok(RingTensor {
            params,
            rows,
            cols,
            data,
        })
    }

    pub fn encode(
        params: RingParams,
        rows: usize,
        cols: usize,
        values: &[f64],
    ) -> Result<RingTensor, RingError> {
        let data = values
            .iter()
            .map(|&v| params.encode(v))
            .collect::<Result<Vec<_>, _>>()?;
        RingTensor::from_residues(params, rows, cols, data)
    }

    pub fn decode(&self) -> Vec<f64> {
        self.data.iter().map(|&r| self.params.decode(r)).collect()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = self.params.reduce(v);
    }

    pub fn add(&self, rhs: &RingTensor) -> Result<RingTensor, RingError> {
        self.zip_with(rhs, |a, b| a.wrapping_add(b))
    }

    pub fn sub(&self, rhs: &RingTensor) -> Result<RingTensor, RingError> {
        self.zip_with(rhs, |a, b| a.wrapping_sub(b))
    }

    pub fn hadamard(&self, rhs: &RingTensor) -> Result<RingTensor, RingError> {
        self.zip_with(rhs, |a, b| a.wrapping_mul(b))
    }

    fn zip_with(
        &self,
        rhs: &RingTensor,
        f: impl Fn(u64, u64) -> u64,
    ) -> Result<RingTensor, RingError> {
        if self.rows != rhs.rows || self.cols != rhs.cols || self.params.ell != rhs.params.ell {
            return Err(RingError::DimensionMismatch(format!(
                "{}x{} (ell={}) vs {}x{} (ell={})",
                self.rows, self.cols, self.params.ell, rhs.rows, rhs.cols, rhs.params.ell
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| self.params.reduce(f(a, b)))
            .collect();
        Ok(RingTensor {
            params: self.params,
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scalar_mul(&self, c: u64) -> RingTensor {
        let data = self
            .data
            .iter()
            .map(|&a| self.params.reduce(a.wrapping_mul(c)))
            .collect();
        RingTensor {
            params: self.params,
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Z = X * W mod 2^ell; the resulting scale is s_X + s_W, the caller truncates.
pub fn ring_matmul(x: &RingTensor, w: &RingTensor) -> Result<RingTensor, RingError> {
    if x.cols != w.rows || x.params.ell != w.params.ell {
        return Err(RingError::DimensionMismatch(format!(
            "{}x{} * {}x{}",
            x.rows, x.cols, w.rows, w.cols
        )));
    }
    let params = RingParams {
        ell: x.params.ell,
        scale: (x.params.scale + w.params.scale).min(x.params.ell - 2),
    };
    let mut out = RingTensor::zeros(params, x.rows, w.cols);
    for i in 0..x.rows {
        for t in 0..x.cols {
            let xv = x.get(i, t);
            if xv == 0 {
                continue;
            }
            for j in 0..w.cols {
                let cur = out.data[i * w.cols + j];
                out.data[i * w.cols + j] = cur.wrapping_add(xv.wrapping_mul(w.get(t, j)));
            }
        }
    }
    for v in &mut out.data {
        *v &= params.mask();
    }
    Ok(out)
}

/// Reduce every element mod 2^{ell_small}; scale is unchanged.
pub fn local_downcast(t: &RingTensor, ell_small: u32) -> RingTensor {
    debug_assert!(ell_small <= t.params.ell);
    let params = RingParams {
        ell: ell_small,
        scale: t.params.scale,
    };
    let data = t.data.iter().map(|&v| params.reduce(v)).collect();
    RingTensor {
        params,
        rows: t.rows,
        cols: t.cols,
        data,
    }
}
