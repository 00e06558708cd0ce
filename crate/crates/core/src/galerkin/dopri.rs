//! Dormand-Prince 5(4) with PI step control and continuous output.

use serde::{Deserialize, Serialize};

use crate::error::{PceError, Result};

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

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC1: f64 = 0.2;
const FAC2: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopriOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub keep_dense: bool,
}

impl Default for DopriOptions {
    fn default() -> Self {
        DopriOptions {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            max_steps: 100_000,
            initial_step: None,
            keep_dense: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Quartic interpolant over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    cont: Vec<f64>,
}

impl DenseSegment {
    pub fn end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let theta = (t - self.t0) / self.h;
        let th1 = 1.0 - theta;
        for i in 0..n {
            let c = |m: usize| self.cont[m * n + i];
            out[i] = c(0) + theta * (c(1) + th1 * (c(2) + theta * (c(3) + th1 * c(4))));
        }
    }
}

#[derive(Debug, Clone)]
pub struct DopriOutput {
    /// States at the requested output times.
    pub values: Vec<Vec<f64>>,
    /// `(t, h)` of every accepted step, for replay with [`solve_on_steps`].
    pub steps: Vec<(f64, f64)>,
    pub segments: Vec<DenseSegment>,
    pub stats: StepStats,
}

struct Work {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Work {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

// Stages 2..7 from k[0] = f(t, y); fills ynew, k[6] = f(t+h, ynew) and err.
fn stages<F: FnMut(f64, &[f64], &mut [f64])>(f: &mut F, t: f64, y: &[f64], h: f64, w: &mut Work) {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, $($a:expr => $j:expr),+) => {{
            for i in 0..n {
                w.ytmp[i] = y[i] + h * (0.0 $(+ $a * w.k[$j][i])+);
            }
            let (ytmp, k) = (&w.ytmp, &mut w.k);
            f(t + $c * h, ytmp, &mut k[$dst]);
        }};
    }
    stage!(1, C2, A21 => 0);
    stage!(2, C3, A31 => 0, A32 => 1);
    stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
    stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    for i in 0..n {
        w.ytmp[i] = y[i]
            + h * (A61 * w.k[0][i]
                + A62 * w.k[1][i]
                + A63 * w.k[2][i]
                + A64 * w.k[3][i]
                + A65 * w.k[4][i]);
    }
    {
        let (ytmp, k) = (&w.ytmp, &mut w.k);
        f(t + h, ytmp, &mut k[5]);
    }
    for i in 0..n {
        w.ynew[i] = y[i]
            + h * (A71 * w.k[0][i]
                + A73 * w.k[2][i]
                + A74 * w.k[3][i]
                + A75 * w.k[4][i]
                + A76 * w.k[5][i]);
    }
    {
        let (ynew, k) = (&w.ynew, &mut w.k);
        f(t + h, ynew, &mut k[6]);
    }
    for i in 0..n {
        w.err[i] = h
            * (E1 * w.k[0][i]
                + E3 * w.k[2][i]
                + E4 * w.k[3][i]
                + E5 * w.k[4][i]
                + E6 * w.k[5][i]
                + E7 * w.k[6][i]);
    }
}

fn dense(y: &[f64], h: f64, w: &Work) -> Vec<f64> {
    let n = y.len();
    let mut cont = vec![0.0; 5 * n];
    for i in 0..n {
        let ydiff = w.ynew[i] - y[i];
        let bspl = h * w.k[0][i] - ydiff;
        cont[i] = y[i];
        cont[n + i] = ydiff;
        cont[2 * n + i] = bspl;
        cont[3 * n + i] = ydiff - h * w.k[6][i] - bspl;
        cont[4 * n + i] = h
            * (D1 * w.k[0][i]
                + D3 * w.k[2][i]
                + D4 * w.k[3][i]
                + D5 * w.k[4][i]
                + D6 * w.k[5][i]
                + D7 * w.k[6][i]);
    }
    cont
}

fn check_outputs(t0: f64, t1: f64, outputs: &[f64]) -> Result<()> {
    if !(t1 > t0) {
        return Err(PceError::Config(format!("empty time span [{t0}, {t1}]")));
    }
    for (i, &t) in outputs.iter().enumerate() {
        if t < t0 || t > t1 {
            return Err(PceError::OutsideSpan {
                t,
                start: t0,
                end: t1,
            });
        }
        if i > 0 && t < outputs[i - 1] {
            return Err(PceError::Config("output times must be sorted".into()));
        }
    }
    Ok(())
}

struct Recorder<'a> {
    outputs: &'a [f64],
    next: usize,
    values: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
    steps: Vec<(f64, f64)>,
    keep_dense: bool,
}

impl<'a> Recorder<'a> {
    fn new(outputs: &'a [f64], t0: f64, y0: &[f64], keep_dense: bool) -> Self {
        let mut r = Recorder {
            outputs,
            next: 0,
            values: Vec::with_capacity(outputs.len()),
            segments: Vec::new(),
            steps: Vec::new(),
            keep_dense,
        };
        while r.next < outputs.len() && outputs[r.next] == t0 {
            r.values.push(y0.to_vec());
            r.next += 1;
        }
        r
    }

    fn accept(&mut self, t: f64, y: &[f64], h: f64, w: &Work, last: bool) {
        let tn = t + h;
        let needs = self.next < self.outputs.len() && (last || self.outputs[self.next] <= tn);
        if needs || self.keep_dense {
            let seg = DenseSegment {
                t0: t,
                h,
                cont: dense(y, h, w),
            };
            while self.next < self.outputs.len() && (last || self.outputs[self.next] <= tn) {
                let to = self.outputs[self.next];
                if to == tn || last && to >= tn {
                    self.values.push(w.ynew.clone());
                } else {
                    let mut v = vec![0.0; y.len()];
                    seg.eval(to, &mut v);
                    self.values.push(v);
                }
                self.next += 1;
            }
            if self.keep_dense {
                self.segments.push(seg);
            }
        }
        self.steps.push((t, h));
    }

    fn finish(self, stats: StepStats) -> DopriOutput {
        DopriOutput {
            values: self.values,
            steps: self.steps,
            segments: self.segments,
            stats,
        }
    }
}

fn error_norm(y: &[f64], w: &Work, atol: f64, rtol: f64) -> f64 {
    let n = y.len();
    let s: f64 = (0..n)
        .map(|i| {
            let sk = atol + rtol * y[i].abs().max(w.ynew[i].abs());
            (w.err[i] / sk).powi(2)
        })
        .sum();
    (s / n.max(1) as f64).sqrt()
}

fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    hmax: f64,
    atol: f64,
    rtol: f64,
) -> f64 {
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let dnf: f64 = (0..n).map(|i| (f0[i] / sk[i]).powi(2)).sum();
    let dny: f64 = (0..n).map(|i| (y[i] / sk[i]).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    f(t + h, &y1, &mut f1);
    let der2 = (0..n)
        .map(|i| ((f1[i] - f0[i]) / sk[i]).powi(2))
        .sum::<f64>()
        .sqrt()
        / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(hmax)
}

/// Adaptive integration of `y' = f(t, y)` over `[t0, t1]`.
pub fn solve<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &DopriOptions,
) -> Result<DopriOutput>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    check_outputs(t0, t1, outputs)?;
    let n = y0.len();
    let (atol, rtol) = (opts.abs_tol, opts.rel_tol);
    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stats = StepStats::default();
    let mut rec = Recorder::new(outputs, t0, y0, opts.keep_dense);
    f(t, &y, &mut w.k[0]);
    stats.rhs_evals += 1;
    let hmax = t1 - t0;
    let mut h = match opts.initial_step {
        Some(h) => h.min(hmax),
        None => {
            stats.rhs_evals += 1;
            initial_step(&mut f, t, &y, &w.k[0].clone(), hmax, atol, rtol)
        }
    };
    let expo1 = 0.2 - BETA * 0.75;
    let mut facold: f64 = 1e-4;
    let mut rejected_last = false;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(PceError::TooManySteps(opts.max_steps));
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Err(PceError::StepSizeUnderflow { t });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        stages(&mut f, t, &y, h, &mut w);
        stats.rhs_evals += 6;
        let err = error_norm(&y, &w, atol, rtol);
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
            let mut hnew = h / fac;
            facold = err.max(1e-4);
            stats.accepted += 1;
            rec.accept(t, &y, h, &w, last);
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut w.ynew);
            w.k.swap(0, 6);
            if last {
                break;
            }
            if !hnew.is_finite() {
                hnew = h * FAC2;
            }
            if rejected_last {
                hnew = hnew.min(h);
            }
            rejected_last = false;
            h = hnew;
        } else {
            let fac = (fac11 / SAFE).min(1.0 / FAC1);
            h /= if fac.is_finite() { fac } else { 1.0 / FAC1 };
            if stats.accepted >= 1 {
                stats.rejected += 1;
            }
            rejected_last = true;
        }
    }
    Ok(rec.finish(stats))
}

/// Integration with a prescribed sequence of `(t, h)` steps ending at `t1`,
/// typically the accepted steps of an earlier adaptive run.
pub fn solve_on_steps<F>(
    mut f: F,
    steps: &[(f64, f64)],
    t1: f64,
    y0: &[f64],
    outputs: &[f64],
    keep_dense: bool,
) -> Result<DopriOutput>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let t0 = steps
        .first()
        .ok_or_else(|| PceError::Config("empty step sequence".into()))?
        .0;
    check_outputs(t0, t1, outputs)?;
    let n = y0.len();
    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let mut stats = StepStats::default();
    let mut rec = Recorder::new(outputs, t0, y0, keep_dense);
    f(t0, &y, &mut w.k[0]);
    stats.rhs_evals += 1;
    for (s, &(t, h)) in steps.iter().enumerate() {
        if !(h > 0.0) {
            return Err(PceError::Config("step sizes must be positive".into()));
        }
        stages(&mut f, t, &y, h, &mut w);
        stats.rhs_evals += 6;
        stats.accepted += 1;
        rec.accept(t, &y, h, &w, s + 1 == steps.len());
        std::mem::swap(&mut y, &mut w.ynew);
        w.k.swap(0, 6);
    }
    Ok(rec.finish(stats))
}
