//! Fixed-step RK4 geodesics with parallel-transported frames, and drift of
//! the quantities Killing tensors and Killing–Yano forms keep constant.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Strategy;
use crate::expr::EvalError;
use crate::geometry::AffineConnection;
use crate::sampling::DomainBox;
use crate::tensor::{NumTensor, TensorField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Parallel-transported frame vectors at this sample.
    pub frames: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTrace {
    pub h: f64,
    pub samples: Vec<Sample>,
    /// Named series, one value per sample.
    pub monitors: Vec<(String, Vec<f64>)>,
    /// Set when integration stopped early because the next step left the
    /// domain.
    pub left_domain: bool,
}

impl GeodesicTrace {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn add_monitor(&mut self, name: impl Into<String>, values: Vec<f64>) {
        assert_eq!(values.len(), self.samples.len(), "one monitor value per sample");
        self.monitors.push((name.into(), values));
    }

    /// CSV with columns `t, x1…xn, v1…vn` followed by the monitors.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.extend(self.monitors.iter().map(|(name, _)| name.clone()));
        writeln!(out, "{}", header.join(","))?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = vec![format!("{:e}", s.t)];
            row.extend(s.x.iter().map(|v| format!("{v:e}")));
            row.extend(s.v.iter().map(|v| format!("{v:e}")));
            row.extend(self.monitors.iter().map(|(_, m)| format!("{:e}", m[k])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Right-hand side of the geodesic and parallel-transport equations on the
/// packed state `[x, v, E_1, …, E_m]`.
struct Flow<'a> {
    gamma: &'a AffineConnection,
    n: usize,
    symbols: Vec<f64>,
    scratch: Vec<f64>,
}

impl Flow<'_> {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        self.gamma
            .tape()
            .eval_into(&y[..n], &mut self.scratch, &mut self.symbols)?;
        let (x_dot, rest) = dy.split_at_mut(n);
        x_dot.copy_from_slice(&y[n..2 * n]);
        let v = &y[n..2 * n];
        for (block, target) in y[n..].chunks(n).zip(rest.chunks_mut(n)) {
            for (k, t) in target.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, &vi) in v.iter().enumerate() {
                    if vi == 0.0 {
                        continue;
                    }
                    let row = &self.symbols[(k * n + i) * n..(k * n + i + 1) * n];
                    let contracted: f64 = row.iter().zip(block).map(|(g, e)| g * e).sum();
                    acc += vi * contracted;
                }
                *t = -acc;
            }
        }
        Ok(())
    }
}

/// Integrates `ẍ^k + Γ^k_ij ẋ^i ẋ^j = 0` from `(x0, v0)` for `duration` with
/// step `h`, transporting `frames` along. Stops early, keeping what was
/// computed, if a step would leave `domain`.
pub fn integrate(
    gamma: &AffineConnection,
    x0: &[f64],
    v0: &[f64],
    frames: &[Vec<f64>],
    duration: f64,
    h: f64,
    domain: Option<&DomainBox>,
) -> Result<GeodesicTrace> {
    let n = gamma.dim();
    if h.is_nan() || h <= 0.0 || duration.is_nan() || duration < 0.0 {
        return Err(Error::Invalid("step and duration must be positive".into()));
    }
    if x0.len() != n || v0.len() != n || frames.iter().any(|e| e.len() != n) {
        return Err(Error::Invalid(
            "initial data dimension differs from the connection".into(),
        ));
    }
    if domain.is_some_and(|d| !d.contains(x0)) {
        return Err(Error::Invalid(format!("starting point {x0:?} outside the domain")));
    }
    let len = n * (2 + frames.len());
    let mut y = Vec::with_capacity(len);
    y.extend_from_slice(x0);
    y.extend_from_slice(v0);
    for e in frames {
        y.extend_from_slice(e);
    }
    let mut flow = Flow {
        gamma,
        n,
        symbols: vec![0.0; n * n * n],
        scratch: Vec::new(),
    };
    let unpack = |t: f64, y: &[f64]| Sample {
        t,
        x: y[..n].to_vec(),
        v: y[n..2 * n].to_vec(),
        frames: y[2 * n..].chunks(n).map(<[f64]>::to_vec).collect(),
    };
    let steps = (duration / h).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(unpack(0.0, &y));
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut stage = vec![0.0; len];
    let mut left_domain = false;
    for step in 1..=steps {
        flow.eval(&y, &mut k1)?;
        for j in 0..len {
            stage[j] = y[j] + 0.5 * h * k1[j];
        }
        flow.eval(&stage, &mut k2)?;
        for j in 0..len {
            stage[j] = y[j] + 0.5 * h * k2[j];
        }
        flow.eval(&stage, &mut k3)?;
        for j in 0..len {
            stage[j] = y[j] + h * k3[j];
        }
        flow.eval(&stage, &mut k4)?;
        for j in 0..len {
            stage[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if domain.is_some_and(|d| !d.contains(&stage[..n])) {
            left_domain = true;
            break;
        }
        std::mem::swap(&mut y, &mut stage);
        samples.push(unpack(step as f64 * h, &y));
    }
    Ok(GeodesicTrace {
        h,
        samples,
        monitors: Vec::new(),
        left_domain,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub series: Vec<f64>,
    /// `max_t |s(t) − s(0)| / max(|s(0)|, 1)`.
    pub relative: f64,
}

fn drift_of(series: Vec<f64>) -> Drift {
    let s0 = series.first().copied().unwrap_or(0.0);
    let worst = series.iter().fold(0.0_f64, |m, s| m.max((s - s0).abs()));
    Drift {
        relative: worst / s0.abs().max(1.0),
        series,
    }
}

fn contract(t: &NumTensor, vectors: &[&[f64]]) -> f64 {
    t.contract_all(vectors)
}

/// `φ(γ̇, …, γ̇)` along the trace.
pub fn monitor_kt(phi: &TensorField, trace: &GeodesicTrace) -> Result<Drift> {
    let p = phi.rank();
    let mut series = Vec::with_capacity(trace.samples.len());
    for s in &trace.samples {
        let t = phi.evaluate(&s.x)?;
        let args: Vec<&[f64]> = vec![&s.v; p];
        series.push(contract(&t, &args));
    }
    Ok(drift_of(series))
}

/// `ω(γ̇, E_2, …, E_p)` along the trace, with the `E_a` the first `p − 1`
/// transported frame vectors. For `p = 1` this is `ω(γ̇)`.
pub fn monitor_ky(omega: &TensorField, trace: &GeodesicTrace) -> Result<Drift> {
    let p = omega.rank();
    if p == 0 {
        return Err(Error::Invalid("monitor_ky needs a form of degree >= 1".into()));
    }
    let mut series = Vec::with_capacity(trace.samples.len());
    for s in &trace.samples {
        if s.frames.len() + 1 < p {
            return Err(Error::Invalid(format!(
                "degree {p} form needs {} transported frames, trace has {}",
                p - 1,
                s.frames.len()
            )));
        }
        let t = omega.evaluate(&s.x)?;
        let mut args: Vec<&[f64]> = vec![&s.v];
        args.extend(s.frames[..p - 1].iter().map(Vec::as_slice));
        series.push(contract(&t, &args));
    }
    Ok(drift_of(series))
}

/// Starting data for one geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

/// Seeded starting data: points in the middle half of `domain`, velocities
/// with components in `[−speed, speed]`, frame entries in `[−1, 1]`.
pub fn random_initial_conditions(
    domain: &DomainBox,
    count: usize,
    seed: u64,
    speed: f64,
    frames: usize,
) -> Vec<InitialCondition> {
    let n = domain.dim();
    let inner = domain.shrink(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x0 = inner.random_point(&mut rng);
            let v0 = (0..n).map(|_| rng.gen_range(-speed..=speed)).collect();
            let frames = (0..frames)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            InitialCondition { x0, v0, frames }
        })
        .collect()
}

/// Integrates every starting condition; order of the output matches the
/// input whatever the strategy.
pub fn integrate_ensemble(
    gamma: &AffineConnection,
    starts: &[InitialCondition],
    duration: f64,
    h: f64,
    domain: Option<&DomainBox>,
    strategy: Strategy,
) -> Result<Vec<GeodesicTrace>> {
    // compile once up front so worker threads share the tape
    let _ = gamma.tape();
    strategy.try_map(starts, |ic| {
        integrate(gamma, &ic.x0, &ic.v0, &ic.frames, duration, h, domain)
    })
}
