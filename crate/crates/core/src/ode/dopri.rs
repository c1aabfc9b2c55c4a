//! Dormand–Prince 5(4) with local extrapolation and FSAL.
//!
//! Each accepted step stores its end slopes, which makes the cubic Hermite
//! interpolant in [`Trajectory`] available for free.

use super::{OdeError, OdeOptions, Trajectory};
use alloc::vec;
use alloc::vec::Vec;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

struct Stages {
    tol: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

fn weighted_rms(err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol + tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    libm::sqrt(sum / n)
}

/// Integrates `y' = rhs(anchor, t, y)` from `t0` to `t_end`.
///
/// Every entry of `stops` inside `(t0, t_end)` becomes a mesh node. Between
/// consecutive stops `rhs` receives the midpoint of that segment as
/// `anchor`, so piecewise-defined right-hand sides switch pieces only at
/// stops.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory, OdeError>
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    opts.check()?;
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(OdeError::InvalidInput("integration interval must be non-empty"));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let n = y0.len();
    let tol = opts.tol;

    let mut ends: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|s| *s > t0 && *s < t_end)
        .collect();
    ends.sort_by(f64::total_cmp);
    ends.dedup();
    ends.push(t_end);

    let mut st = Stages {
        tol,
        k: core::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        y_new: vec![0.0; n],
        err: vec![0.0; n],
    };
    let mut mesh = vec![t0];
    let mut values = y0.to_vec();
    let mut start_slopes = Vec::new();
    let mut end_slopes = Vec::new();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = 0.0;
    let mut steps = 0usize;

    for &seg_end in &ends {
        let anchor = 0.5 * (t + seg_end);
        rhs(anchor, t, &y, &mut st.k[0]);
        if st.k[0].iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        if h == 0.0 {
            h = initial_step(&mut rhs, anchor, t, &y, seg_end - t, opts, &mut st);
        }
        let mut last_rejected = false;
        let mut last_nonfinite = false;
        while t < seg_end {
            steps += 1;
            if steps > opts.max_steps {
                return Err(OdeError::MaxSteps { t });
            }
            h = h.min(opts.max_step);
            let remaining = seg_end - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let h_try = if landing {
                remaining
            } else if 2.0 * h > remaining {
                // avoid leaving a sliver before the stop
                0.5 * remaining
            } else {
                h
            };
            if h_try <= 1e-13 * t.abs().max(1.0) {
                return Err(if last_nonfinite {
                    OdeError::NonFinite { t }
                } else {
                    OdeError::StepUnderflow { t }
                });
            }

            let err = step(&mut rhs, anchor, t, &y, h_try, &mut st);
            let finite = err.is_finite() && st.y_new.iter().all(|v| v.is_finite());
            if !finite {
                last_nonfinite = true;
                last_rejected = true;
                h = 0.25 * h_try;
                continue;
            }
            last_nonfinite = false;
            if err > 1.0 {
                let factor = (SAFETY * libm::pow(err, -0.2)).max(MIN_FACTOR);
                h = h_try * factor;
                last_rejected = true;
                continue;
            }

            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * libm::pow(err, -0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;

            t = if landing { seg_end } else { t + h_try };
            core::mem::swap(&mut y, &mut st.y_new);
            mesh.push(t);
            values.extend_from_slice(&y);
            start_slopes.extend_from_slice(&st.k[0]);
            end_slopes.extend_from_slice(&st.k[6]);
            // first same as last
            let (head, tail) = st.k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            if !landing {
                h = h_try * factor;
            } else {
                h = h.max(h_try * factor);
            }
        }
    }
    Trajectory::new(n, mesh, values, start_slopes, end_slopes, tol)
}

/// One trial step from `(t, y)` of size `h`. Leaves the 5th order solution
/// in `st.y_new`, its slope in `st.k[6]`, and returns the scaled error.
fn step<F>(rhs: &mut F, anchor: f64, t: f64, y: &[f64], h: f64, st: &mut Stages) -> f64
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let Stages {
        k,
        tmp,
        y_new,
        err,
        tol,
    } = st;
    macro_rules! stage {
        ($dst:expr, $c:expr, $( ($a:expr, $src:expr) ),+) => {{
            for i in 0..n {
                tmp[i] = y[i] + h * (0.0 $( + $a * k[$src][i] )+);
            }
            let (_, hi) = k.split_at_mut($dst);
            rhs(anchor, t + $c * h, tmp, &mut hi[0]);
        }};
    }
    stage!(1, C2, (A21, 0));
    stage!(2, C3, (A31, 0), (A32, 1));
    stage!(3, C4, (A41, 0), (A42, 1), (A43, 2));
    stage!(4, C5, (A51, 0), (A52, 1), (A53, 2), (A54, 3));
    stage!(5, 1.0, (A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4));
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    {
        let (_, hi) = k.split_at_mut(6);
        rhs(anchor, t + h, y_new, &mut hi[0]);
    }
    for i in 0..n {
        err[i] = h
            * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                + E7 * k[6][i]);
    }
    weighted_rms(err, y, y_new, *tol)
}

/// Starting step size following Hairer, Nørsett & Wanner.
fn initial_step<F>(
    rhs: &mut F,
    anchor: f64,
    t: f64,
    y: &[f64],
    span: f64,
    opts: &OdeOptions,
    st: &mut Stages,
) -> f64
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    let tol = opts.tol;
    let scale = |v: f64| tol + tol * v.abs();
    let n = y.len().max(1) as f64;
    let rms = |f: &dyn Fn(usize) -> f64| libm::sqrt((0..y.len()).map(|i| f(i) * f(i)).sum::<f64>() / n);
    let d0 = rms(&|i| y[i] / scale(y[i]));
    let d1 = rms(&|i| st.k[0][i] / scale(y[i]));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for ((tmp, yi), ki) in st.tmp.iter_mut().zip(y).zip(&st.k[0]) {
        *tmp = yi + h0 * ki;
    }
    let (lo, hi) = st.k.split_at_mut(1);
    rhs(anchor, t + h0, &st.tmp, &mut hi[0]);
    let d2 = rms(&|i| (hi[0][i] - lo[0][i]) / scale(y[i])) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        libm::pow(0.01 / d1.max(d2), 0.2)
    };
    let h = (100.0 * h0).min(h1).min(opts.max_step);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        h0
    }
}
