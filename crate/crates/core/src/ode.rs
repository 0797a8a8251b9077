//! Adaptive Dormand–Prince 5(4) integrator with its fourth-order dense output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on attempted steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

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

// Fifth-order weights minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output coefficients (Hairer's DOPRI5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns `y` at each of
/// `output_times` (sorted, all `>= t0`).
///
/// The error of every accepted step satisfies
/// `|err_i| <= abs_tol + rel_tol * max(|y_i|, |y_new_i|)` componentwise.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    output_times: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if output_times.windows(2).any(|w| w[0] > w[1]) || output_times.iter().any(|&t| t < t0) {
        return Err(Error::domain("output times must be sorted and >= t0"));
    }
    let dim = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] == t0 {
        out.push(y0.to_vec());
        next_out += 1;
    }
    let Some(&t_end) = output_times.last() else {
        return Ok((out, stats));
    };
    if next_out == output_times.len() {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, t_end - t0, opts, &mut stats);

    let mut attempts = 0;
    while next_out < output_times.len() {
        attempts += 1;
        if attempts > opts.max_steps {
            return Err(Error::Numerical {
                t,
                reason: "step limit exceeded".into(),
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Numerical {
                t,
                reason: "step size underflow".into(),
            });
        }
        h = h.min(t_end - t);

        for i in 0..dim {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..dim {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &tmp, &mut k6);
        for i in 0..dim {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err: f64 = 0.0;
        for i in 0..dim {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            let t_new = if t + h >= t_end { t_end } else { t + h };
            while next_out < output_times.len() && output_times[next_out] <= t_new {
                let to = output_times[next_out];
                if to == t_new {
                    out.push(y_new.clone());
                } else {
                    let theta = (to - t) / (t_new - t);
                    let theta1 = 1.0 - theta;
                    let h = t_new - t;
                    out.push(
                        (0..dim)
                            .map(|i| {
                                let ydiff = y_new[i] - y[i];
                                let bspl = h * k1[i] - ydiff;
                                let r4 = ydiff - h * k7[i] - bspl;
                                let r5 = h
                                    * (D1 * k1[i]
                                        + D3 * k3[i]
                                        + D4 * k4[i]
                                        + D5 * k5[i]
                                        + D6 * k6[i]
                                        + D7 * k7[i]);
                                y[i] + theta
                                    * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
                            })
                            .collect(),
                    );
                }
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            stats.accepted += 1;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.1);
        }
    }
    Ok((out, stats))
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    dy: &[f64],
    span: f64,
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    // Hairer–Nørsett–Wanner starting-step heuristic.
    let scale: Vec<f64> = y
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / v.len().max(1) as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(dy);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(dy).map(|(a, b)| a + h0 * b).collect();
    let mut dy1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut dy1);
    stats.evaluations += 1;
    let diff: Vec<f64> = dy1.iter().zip(dy).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
