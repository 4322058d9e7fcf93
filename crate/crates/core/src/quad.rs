//! Adaptive Gauss–Kronrod quadrature (7-15 pair) with fallible integrands.
//!
//! Refinement bisects the interval with the largest error estimate until the
//! summed estimate meets the relative target. Evaluation order is fixed, so
//! results are deterministic for identical inputs.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights on the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.4058451513773972,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.1294849661688697,
    0.279_705_391_489_276_67,
    0.3818300505051189,
    0.417_959_183_673_469_4,
];

/// Tolerances and budget for one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    /// Relative error target on the integral value.
    pub rel_tol: f64,
    /// Absolute error floor; dominates when the integral is essentially zero.
    pub abs_tol: f64,
    /// Panel budget before declaring failure.
    pub max_panels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_panels: 4000,
        }
    }
}

impl QuadSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

/// Value and accounting for one finished integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub abs_error: f64,
    pub panels: usize,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Single Gauss–Kronrod 7-15 pass over `[a, b]`.
fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let f_center = f(center)?;
    let mut kronrod = WGK[7] * f_center;
    let mut gauss = 0.0;
    let mut res_abs = kronrod.abs();
    let mut values = [0.0f64; 15];
    values[7] = f_center;

    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f_lo = f(center - dx)?;
        let f_hi = f(center + dx)?;
        values[i] = f_lo;
        values[14 - i] = f_hi;
        kronrod += WGK[i] * (f_lo + f_hi);
        res_abs += WGK[i] * (f_lo.abs() + f_hi.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f_lo + f_hi);
        }
    }
    // 7-point Gauss uses the center too
    gauss += WG[3] * f_center;

    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for i in 0..7 {
        res_asc += WGK[i] * ((values[i] - mean).abs() + (values[14 - i] - mean).abs());
    }

    let raw_err = ((kronrod - gauss) * half).abs();
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();

    let mut err = raw_err;
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }

    Ok((kronrod * half, err, 15))
}

/// Adaptively integrate `f` over `[a, b]`.
///
/// The integrand may fail (for example at a channel threshold); the failure
/// propagates out of the integration immediately.
pub fn integrate<F>(mut f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput("non-finite integration bounds".into()));
    }
    if a == b {
        return Ok(QuadOutcome {
            value: 0.0,
            abs_error: 0.0,
            panels: 0,
            evals: 0,
        });
    }

    let (value, error, evals0) = gk15(&mut f, a, b)?;
    let mut panels = vec![Panel { a, b, value, error }];
    let mut evals = evals0;

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err <= target {
            return Ok(QuadOutcome {
                value: total,
                abs_error: total_err,
                panels: panels.len(),
                evals,
            });
        }
        if panels.len() >= spec.max_panels {
            return Err(Error::QuadratureFailure {
                achieved: if total != 0.0 {
                    total_err / total.abs()
                } else {
                    total_err
                },
                target: spec.rel_tol,
                panels: panels.len(),
            });
        }

        // split the worst panel; ties resolve to the lowest index
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(i, p), (j, q)| p.error.total_cmp(&q.error).then(j.cmp(i)))
            .map(|(i, _)| i)
            .expect("nonempty panel list");
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // interval exhausted float resolution; accept its estimate as-is
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let total_err: f64 = panels.iter().map(|p| p.error).sum();
            return Ok(QuadOutcome {
                value: total,
                abs_error: total_err,
                panels: panels.len(),
                evals,
            });
        }
        let (v1, e1, n1) = gk15(&mut f, a, mid)?;
        let (v2, e2, n2) = gk15(&mut f, mid, b)?;
        evals += n1 + n2;
        panels[worst] = Panel {
            a,
            b: mid,
            value: v1,
            error: e1,
        };
        panels.push(Panel {
            a: mid,
            b,
            value: v2,
            error: e2,
        });
    }
}

/// Integrate over contiguous segments `[points[0], points[1], ...]`,
/// summing values and error estimates. Segment boundaries are typically
/// placed at integrand cusps so that no node lands on them.
pub fn integrate_segmented<F>(mut f: F, points: &[f64], spec: &QuadSpec) -> Result<QuadOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two segment boundaries".into(),
        ));
    }
    let mut out = QuadOutcome {
        value: 0.0,
        abs_error: 0.0,
        panels: 0,
        evals: 0,
    };
    for w in points.windows(2) {
        let piece = integrate(&mut f, w[0], w[1], spec)?;
        out.value += piece.value;
        out.abs_error += piece.abs_error;
        out.panels += piece.panels;
        out.evals += piece.evals;
    }
    Ok(out)
}
