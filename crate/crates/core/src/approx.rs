//! Distribution-aware piecewise-polynomial approximation.
//!
//! The expected approximation loss integrates the input probability density
//! (summarized as a histogram); fits minimize it by weighted least squares
//! at bin midpoints, and breakpoints are grid-searched around template
//! initials. A fixed-point evaluator reproduces the secure pipeline's
//! arithmetic (Horner with signed truncation after each multiply) for
//! error studies.

use crate::fixed_ring::RingParams;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("histogram invalid: {0}")]
    BadHistogram(String),
    #[error("empty breakpoint candidate set")]
    EmptyCandidates,
    #[error("model file malformed: {0}")]
    BadModel(String),
    #[error("coefficient {0} not representable in the ring")]
    CoefficientOverflow(f64),
    #[error("io error: {0}")]
    Io(String),
}

// --- reference scalar functions -------------------------------------------

/// Abramowitz–Stegun 7.1.26 rational approximation, |error| <= 1.5e-7.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736)
            * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

// --- histograms -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: f64,
}

impl Bin {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Input-distribution summary: sorted non-overlapping bins, counts >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<Bin>,
    pub total: f64,
}

impl Histogram {
    pub fn new(bins: Vec<Bin>) -> Result<Histogram, ApproxError> {
        if bins.is_empty() {
            return Err(ApproxError::BadHistogram("no bins".into()));
        }
        let mut total = 0.0;
        for (i, b) in bins.iter().enumerate() {
            if !(b.upper > b.lower) || b.count < 0.0 || !b.count.is_finite() {
                return Err(ApproxError::BadHistogram(format!("bin {i} malformed")));
            }
            if i > 0 && b.lower < bins[i - 1].upper - 1e-12 {
                return Err(ApproxError::BadHistogram(format!(
                    "bin {i} overlaps or is unsorted"
                )));
            }
            total += b.count;
        }
        if total <= 0.0 {
            return Err(ApproxError::BadHistogram("total count is zero".into()));
        }
        Ok(Histogram { bins, total })
    }

    /// Parse UTF-8 lines "lower upper count"; '#' starts a comment.
    pub fn from_text(text: &str) -> Result<Histogram, ApproxError> {
        let mut bins = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(ApproxError::BadHistogram(format!(
                    "line {}: expected 'lower upper count'",
                    lineno + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    ApproxError::BadHistogram(format!("line {}: bad number", lineno + 1))
                })
            };
            bins.push(Bin {
                lower: parse(fields[0])?,
                upper: parse(fields[1])?,
                count: parse(fields[2])?,
            });
        }
        Histogram::new(bins)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# lower upper count\n");
        for b in &self.bins {
            out.push_str(&format!("{} {} {}\n", b.lower, b.upper, b.count));
        }
        out
    }

    pub fn load(path: &std::path::Path) -> Result<Histogram, ApproxError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ApproxError::Io(e.to_string()))?;
        Histogram::from_text(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ApproxError> {
        std::fs::write(path, self.to_text()).map_err(|e| ApproxError::Io(e.to_string()))
    }

    fn analytic(lo: f64, hi: f64, width: f64, pdf: impl Fn(f64) -> f64) -> Histogram {
        let n = ((hi - lo) / width).round() as usize;
        let bins = (0..n)
            .map(|i| {
                let lower = lo + i as f64 * width;
                let upper = lower + width;
                Bin {
                    lower,
                    upper,
                    count: pdf(0.5 * (lower + upper)).max(0.0),
                }
            })
            .collect();
        Histogram::new(bins).expect("analytic histogram is valid")
    }

    /// Synthetic stand-in for GELU pre-activation inputs: a left-heavy
    /// mixture peaking near -3 with little mass above zero.
    pub fn synthetic_gelu() -> Histogram {
        Histogram::analytic(-6.0, 4.0, 0.05, |x| {
            0.8 * normal_pdf(x, -3.0, 0.8) + 0.2 * normal_pdf(x, -1.0, 0.6)
        })
    }

    /// Synthetic stand-in for softmax inputs after max-subtraction: all
    /// mass at x <= 0 with a long smooth left tail.
    pub fn synthetic_exp() -> Histogram {
        Histogram::analytic(-16.0, 0.0, 0.05, |x| normal_pdf(x, 0.0, 2.0))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.bins[0].lower, self.bins[self.bins.len() - 1].upper)
    }

    pub fn mass_in(&self, l: f64, h: f64) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.mid() >= l && b.mid() <= h)
            .map(|b| b.count)
            .sum()
    }
}

// --- weighted least squares --------------------------------------------------

/// Weighted polynomial fit of f on [l, h] at the histogram's bin midpoints,
/// weights = bin mass. Falls back to uniform weights if the interval holds
/// no mass, and reduces the degree if the system is rank-deficient.
/// Coefficients returned lowest-order first.
pub fn weighted_fit(
    f: &(dyn Fn(f64) -> f64 + Sync),
    l: f64,
    h: f64,
    degree: usize,
    hist: &Histogram,
) -> Vec<f64> {
    let mut points: Vec<(f64, f64)> = hist
        .bins
        .iter()
        .filter(|b| b.mid() >= l && b.mid() <= h)
        .map(|b| (b.mid(), b.count))
        .collect();
    let mass: f64 = points.iter().map(|&(_, w)| w).sum();
    if mass <= 0.0 {
        // uniform weights: keep the midpoints if any, else a dense grid
        if points.is_empty() {
            let grid = 64;
            points = (0..grid)
                .map(|i| (l + (h - l) * (i as f64 + 0.5) / grid as f64, 1.0))
                .collect();
        } else {
            for p in &mut points {
                p.1 = 1.0;
            }
        }
    }
    fit_points(f, &points, degree)
}

/// Unweighted dense-grid least squares (the non-distribution-aware
/// reference used by the error study).
pub fn reference_poly_fit(
    f: &(dyn Fn(f64) -> f64 + Sync),
    l: f64,
    h: f64,
    degree: usize,
) -> Vec<f64> {
    let grid = 512;
    let points: Vec<(f64, f64)> = (0..grid)
        .map(|i| (l + (h - l) * (i as f64 + 0.5) / grid as f64, 1.0))
        .collect();
    fit_points(f, &points, degree)
}

fn fit_points(f: &(dyn Fn(f64) -> f64 + Sync), points: &[(f64, f64)], degree: usize) -> Vec<f64> {
    let mut d = degree;
    loop {
        let rows = points.len();
        let cols = d + 1;
        let mut design = DMatrix::zeros(rows, cols);
        let mut rhs = DVector::zeros(rows);
        for (r, &(x, w)) in points.iter().enumerate() {
            let sw = w.sqrt();
            let mut pw = 1.0;
            for c in 0..cols {
                design[(r, c)] = sw * pw;
                pw *= x;
            }
            rhs[r] = sw * f(x);
        }
        let svd = design.clone().svd(true, true);
        let rank = svd.rank(1e-9 * svd.singular_values.max());
        if rank < cols && d > 0 {
            d -= 1; // degenerate weights (e.g. a point mass): reduce degree
            continue;
        }
        let sol = svd.solve(&rhs, 1e-12).expect("svd solve");
        return sol.iter().copied().collect();
    }
}

// --- piecewise polynomials ----------------------------------------------------

/// Piecewise polynomial over all of R. Piece i covers values up to
/// breakpoint i; `include_left[i]` says whether x == breakpoint i belongs
/// to piece i (closed left interval) or piece i+1. The last piece covers
/// the remaining right tail. Coefficients are lowest-order first.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub breakpoints: Vec<f64>,
    pub include_left: Vec<bool>,
    pub pieces: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn new(
        breakpoints: Vec<f64>,
        include_left: Vec<bool>,
        pieces: Vec<Vec<f64>>,
    ) -> PiecewisePoly {
        assert_eq!(pieces.len(), breakpoints.len() + 1);
        assert_eq!(include_left.len(), breakpoints.len());
        assert!(breakpoints.windows(2).all(|w| w[0] < w[1]));
        PiecewisePoly {
            breakpoints,
            include_left,
            pieces,
        }
    }

    fn piece_index(&self, x: f64) -> usize {
        for (i, &bp) in self.breakpoints.iter().enumerate() {
            let left = if self.include_left[i] { x <= bp } else { x < bp };
            if left {
                return i;
            }
        }
        self.pieces.len() - 1
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        let coeffs = &self.pieces[self.piece_index(x)];
        let mut acc = 0.0;
        for &c in coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Text form: `breakpoints ...` / `boundary le|lt ...` / one `piece ...`
    /// line per piece with decimal coefficients, lowest order first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("breakpoints");
        for b in &self.breakpoints {
            out.push_str(&format!(" {b}"));
        }
        out.push('\n');
        out.push_str("boundary");
        for &il in &self.include_left {
            out.push_str(if il { " le" } else { " lt" });
        }
        out.push('\n');
        for p in &self.pieces {
            out.push_str("piece");
            for c in p {
                out.push_str(&format!(" {c}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PiecewisePoly, ApproxError> {
        let mut breakpoints = None;
        let mut include_left = None;
        let mut pieces = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kw = fields.next().unwrap();
            match kw {
                "breakpoints" => {
                    let vals: Result<Vec<f64>, _> =
                        fields.map(|s| s.parse::<f64>()).collect();
                    breakpoints =
                        Some(vals.map_err(|_| ApproxError::BadModel("bad breakpoint".into()))?);
                }
                "boundary" => {
                    let vals: Result<Vec<bool>, ApproxError> = fields
                        .map(|s| match s {
                            "le" => Ok(true),
                            "lt" => Ok(false),
                            other => {
                                Err(ApproxError::BadModel(format!("bad boundary '{other}'")))
                            }
                        })
                        .collect();
                    include_left = Some(vals?);
                }
                "piece" => {
                    let vals: Result<Vec<f64>, _> =
                        fields.map(|s| s.parse::<f64>()).collect();
                    pieces.push(
                        vals.map_err(|_| ApproxError::BadModel("bad coefficient".into()))?,
                    );
                }
                other => {
                    return Err(ApproxError::BadModel(format!("unknown keyword '{other}'")))
                }
            }
        }
        let breakpoints =
            breakpoints.ok_or_else(|| ApproxError::BadModel("missing breakpoints".into()))?;
        let include_left =
            include_left.ok_or_else(|| ApproxError::BadModel("missing boundary".into()))?;
        if pieces.len() != breakpoints.len() + 1 || include_left.len() != breakpoints.len() {
            return Err(ApproxError::BadModel("piece/breakpoint count mismatch".into()));
        }
        Ok(PiecewisePoly::new(breakpoints, include_left, pieces))
    }

    pub fn load(path: &std::path::Path) -> Result<PiecewisePoly, ApproxError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ApproxError::Io(e.to_string()))?;
        PiecewisePoly::from_text(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ApproxError> {
        std::fs::write(path, self.to_text()).map_err(|e| ApproxError::Io(e.to_string()))
    }
}

/// Histogram-weighted mean squared error of p against f.
pub fn piecewise_weighted_mse(
    f: &(dyn Fn(f64) -> f64 + Sync),
    p: &PiecewisePoly,
    hist: &Histogram,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in &hist.bins {
        let x = b.mid();
        let e = f(x) - p.eval_real(x);
        num += b.count * e * e;
        den += b.count;
    }
    num / den
}

pub fn piecewise_weighted_rmse(
    f: &(dyn Fn(f64) -> f64 + Sync),
    p: &PiecewisePoly,
    hist: &Histogram,
) -> f64 {
    piecewise_weighted_mse(f, p, hist).sqrt()
}

// --- templates and breakpoint search -------------------------------------------

/// The two fixed piece structures: exp is {0 | cubic}, gelu is
/// {0 | quadratic | identity}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Exp,
    Gelu,
}

impl Template {
    pub fn init_breakpoints(self) -> Vec<f64> {
        match self {
            Template::Exp => vec![-4.0],
            Template::Gelu => vec![-2.1, 0.2],
        }
    }

    pub fn breakpoint_count(self) -> usize {
        match self {
            Template::Exp => 1,
            Template::Gelu => 2,
        }
    }

    /// Fit the free piece(s) at fixed breakpoints.
    pub fn fit_at(
        self,
        f: &(dyn Fn(f64) -> f64 + Sync),
        bps: &[f64],
        hist: &Histogram,
    ) -> PiecewisePoly {
        match self {
            Template::Exp => {
                // pieces: 0 for x < T, cubic on [T, 0]
                let t = bps[0];
                let cubic = weighted_fit(f, t, 0.0, 3, hist);
                PiecewisePoly::new(vec![t], vec![false], vec![vec![0.0], cubic])
            }
            Template::Gelu => {
                // pieces: 0 for x <= T1, quadratic on (T1, T2], x for x > T2
                let (t1, t2) = (bps[0], bps[1]);
                let quad = weighted_fit(f, t1, t2, 2, hist);
                PiecewisePoly::new(
                    vec![t1, t2],
                    vec![true, true],
                    vec![vec![0.0], quad, vec![0.0, 1.0]],
                )
            }
        }
    }
}

/// Per-axis candidate grid around an initial breakpoint.
fn candidates(init: f64, radius: f64, step: f64) -> Vec<f64> {
    if radius <= 0.0 || step <= 0.0 {
        return vec![init];
    }
    let n = (radius / step).floor() as i64;
    (-n..=n).map(|i| init + i as f64 * step).collect()
}

/// Grid search over breakpoint candidates (Cartesian product for the
/// two-breakpoint template); the first candidate in iteration order wins
/// ties. Returns the best piecewise fit and its weighted MSE.
pub fn search_breakpoints(
    f: &(dyn Fn(f64) -> f64 + Sync),
    template: Template,
    init: &[f64],
    hist: &Histogram,
    radius: f64,
    step: f64,
) -> Result<(PiecewisePoly, f64), ApproxError> {
    assert_eq!(init.len(), template.breakpoint_count());
    let grids: Vec<Vec<f64>> = init.iter().map(|&b| candidates(b, radius, step)).collect();
    let combos: Vec<Vec<f64>> = match grids.len() {
        1 => grids[0].iter().map(|&t| vec![t]).collect(),
        2 => {
            let mut out = Vec::with_capacity(grids[0].len() * grids[1].len());
            for &t1 in &grids[0] {
                for &t2 in &grids[1] {
                    if t1 < t2 {
                        out.push(vec![t1, t2]);
                    }
                }
            }
            out
        }
        _ => unreachable!("templates have 1 or 2 breakpoints"),
    };
    if combos.is_empty() {
        return Err(ApproxError::EmptyCandidates);
    }

    let evaluate = |bps: &Vec<f64>| -> (PiecewisePoly, f64) {
        let p = template.fit_at(f, bps, hist);
        let loss = piecewise_weighted_mse(f, &p, hist);
        (p, loss)
    };
    // deterministic argmin: smallest loss, then smallest candidate index
    let best = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            combos
                .par_iter()
                .enumerate()
                .map(|(i, bps)| (i, evaluate(bps)))
                .min_by(|(ia, (_, la)), (ib, (_, lb))| {
                    la.partial_cmp(lb).unwrap().then(ia.cmp(ib))
                })
        }
        #[cfg(not(feature = "parallel"))]
        {
            combos
                .iter()
                .enumerate()
                .map(|(i, bps)| (i, evaluate(bps)))
                .min_by(|(ia, (_, la)), (ib, (_, lb))| {
                    la.partial_cmp(lb).unwrap().then(ia.cmp(ib))
                })
        }
    };
    let (_, (p, loss)) = best.ok_or(ApproxError::EmptyCandidates)?;
    Ok((p, loss))
}

/// Fitted exponential template under the given histogram (search with the
/// default radius 0.5 and step 0.05 around T = -4).
pub fn template_exp(hist: &Histogram) -> PiecewisePoly {
    search_breakpoints(&f64::exp, Template::Exp, &[-4.0], hist, 0.5, 0.05)
        .expect("non-empty grid")
        .0
}

/// Fitted GELU template under the given histogram (search around
/// (T1, T2) = (-2.1, 0.2)).
pub fn template_gelu(hist: &Histogram) -> PiecewisePoly {
    search_breakpoints(&gelu, Template::Gelu, &[-2.1, 0.2], hist, 0.5, 0.05)
        .expect("non-empty grid")
        .0
}

// --- fixed-point evaluation -----------------------------------------------------

/// A piecewise polynomial with coefficients and breakpoints encoded into a
/// fixed-point ring, evaluated exactly as the secure pipeline does.
#[derive(Debug, Clone)]
pub struct FixedPiecewise {
    pub ring: RingParams,
    pub breakpoints: Vec<u64>,
    pub include_left: Vec<bool>,
    pub pieces: Vec<Vec<u64>>,
}

impl FixedPiecewise {
    pub fn from_real(p: &PiecewisePoly, ring: RingParams) -> Result<FixedPiecewise, ApproxError> {
        let enc = |v: f64| {
            ring.encode(v)
                .map_err(|_| ApproxError::CoefficientOverflow(v))
        };
        Ok(FixedPiecewise {
            ring,
            breakpoints: p
                .breakpoints
                .iter()
                .map(|&b| enc(b))
                .collect::<Result<_, _>>()?,
            include_left: p.include_left.clone(),
            pieces: p
                .pieces
                .iter()
                .map(|piece| piece.iter().map(|&c| enc(c)).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn piece_index(&self, x: u64) -> usize {
        let sx = self.ring.to_signed(x);
        for (i, &bp) in self.breakpoints.iter().enumerate() {
            let sb = self.ring.to_signed(bp);
            let left = if self.include_left[i] { sx <= sb } else { sx < sb };
            if left {
                return i;
            }
        }
        self.pieces.len() - 1
    }

    /// Horner evaluation with signed truncation by 2^s after each multiply,
    /// wrapping mod 2^ell exactly like the share arithmetic. The flag
    /// reports whether any intermediate left the signed ell-bit range
    /// (overflow is flagged, not silently accepted, in analysis mode).
    pub fn eval(&self, x: u64) -> (u64, bool) {
        let ring = self.ring;
        let s = ring.scale;
        let mask = ring.mask();
        let half = 1i128 << (ring.ell - 1);
        let coeffs = &self.pieces[self.piece_index(x)];
        let sx = ring.to_signed(x) as i128;
        let mut overflow = false;
        let mut acc: i128 = match coeffs.last() {
            Some(&c) => ring.to_signed(c) as i128,
            None => 0,
        };
        for &c in coeffs.iter().rev().skip(1) {
            let prod = acc * sx;
            let tr = prod >> s;
            if tr >= half || tr < -half {
                overflow = true;
            }
            let sum = tr + ring.to_signed(c) as i128;
            if sum >= half || sum < -half {
                overflow = true;
            }
            // wrap into the ring exactly like share arithmetic would
            acc = ring.to_signed((sum as u64) & mask) as i128;
        }
        ((acc as u64) & mask, overflow)
    }
}

pub fn eval_piecewise_real(p: &PiecewisePoly, x: f64) -> f64 {
    p.eval_real(x)
}

pub fn eval_piecewise_fixed(p: &FixedPiecewise, x: u64) -> (u64, bool) {
    p.eval(x)
}
