//! Fixed-step explicit Runge–Kutta integration of `dφ/dt = v(t, φ)` over `[0, 1]`.
//!
//! States are row batches: each row is one trajectory, all advanced with the
//! same uniform step `1/steps`. Forward runs `t: 0 → 1`, reverse runs
//! `t: 1 → 0` with negative steps.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sample::Sample;

/// Velocity field over row batches.
pub trait VectorField<T: Real> {
    /// Velocity at time `t` for every row of `state`; must preserve shape.
    fn velocity(&self, t: T, state: ArrayView2<T>) -> Result<Array2<T>>;
}

impl<T: Real, F> VectorField<T> for F
where
    F: Fn(T, ArrayView2<T>) -> Array2<T>,
{
    fn velocity(&self, t: T, state: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self(t, state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Euler,
    Midpoint,
    /// Third-order Heun: c = (0, 1/3, 2/3), a21 = 1/3, a32 = 2/3, b = (1/4, 0, 3/4).
    Heun3,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Euler, Method::Midpoint, Method::Heun3];

    /// Field evaluations per step.
    pub fn stages(self) -> usize {
        match self {
            Method::Euler => 1,
            Method::Midpoint => 2,
            Method::Heun3 => 3,
        }
    }

    pub fn order(self) -> usize {
        self.stages()
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Midpoint => "midpoint",
            Method::Heun3 => "heun3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "midpoint" => Ok(Method::Midpoint),
            "heun3" => Ok(Method::Heun3),
            other => Err(Error::InvalidArgument(format!("unknown solver method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    pub method: Method,
    pub steps: usize,
    pub direction: Direction,
}

impl SolverConfig {
    pub fn forward(method: Method, steps: usize) -> Self {
        Self {
            method,
            steps,
            direction: Direction::Forward,
        }
    }

    pub fn reverse(method: Method, steps: usize) -> Self {
        Self {
            method,
            steps,
            direction: Direction::Reverse,
        }
    }

    /// Field evaluations for one full integration.
    pub fn nfe(&self) -> usize {
        self.steps * self.method.stages()
    }
}

fn eval<T: Real, F: VectorField<T> + ?Sized>(field: &F, t: T, state: ArrayView2<T>) -> Result<Array2<T>> {
    let v = field.velocity(t, state)?;
    if v.dim() != state.dim() {
        return Err(Error::dim("vector field output", state.len(), v.len()));
    }
    Ok(v)
}

fn rk_step<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    method: Method,
    t: T,
    h: T,
    x: &Array2<T>,
) -> Result<Array2<T>> {
    let k1 = eval(field, t, x.view())?;
    Ok(match method {
        Method::Euler => x + &(k1 * h),
        Method::Midpoint => {
            let half = h / T::lit(2.0);
            let xm = x + &(&k1 * half);
            let k2 = eval(field, t + half, xm.view())?;
            x + &(k2 * h)
        }
        Method::Heun3 => {
            let third = h / T::lit(3.0);
            let x2 = x + &(&k1 * third);
            let k2 = eval(field, t + third, x2.view())?;
            let two_thirds = T::lit(2.0) * third;
            let x3 = x + &(&k2 * two_thirds);
            let k3 = eval(field, t + two_thirds, x3.view())?;
            let w1 = h * T::lit(0.25);
            let w3 = h * T::lit(0.75);
            x + &(k1 * w1) + &(k3 * w3)
        }
    })
}

fn run<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    x0: ArrayView2<T>,
    config: SolverConfig,
    mut trajectory: Option<&mut Vec<Array2<T>>>,
) -> Result<Array2<T>> {
    if config.steps == 0 {
        return Err(Error::InvalidArgument("solver steps must be ≥ 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration { step: 0 });
    }
    let n = config.steps as f64;
    let (start, sign) = match config.direction {
        Direction::Forward => (0.0, 1.0),
        Direction::Reverse => (1.0, -1.0),
    };
    let h = T::lit(sign / n);
    let mut x = x0.to_owned();
    if let Some(tr) = trajectory.as_deref_mut() {
        tr.push(x.clone());
    }
    for i in 0..config.steps {
        let t = T::lit(start + sign * i as f64 / n);
        x = rk_step(field, config.method, t, h, &x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step: i + 1 });
        }
        if let Some(tr) = trajectory.as_deref_mut() {
            tr.push(x.clone());
        }
    }
    Ok(x)
}

/// Integrates every row of `x0` and returns the endpoint.
pub fn integrate<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    x0: ArrayView2<T>,
    config: SolverConfig,
) -> Result<Array2<T>> {
    run(field, x0, config, None)
}

/// As [`integrate`], also returning the state after every step (first entry is `x0`).
pub fn integrate_with_trajectory<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    x0: ArrayView2<T>,
    config: SolverConfig,
) -> Result<(Array2<T>, Vec<Array2<T>>)> {
    let mut tr = Vec::with_capacity(config.steps + 1);
    let end = run(field, x0, config, Some(&mut tr))?;
    Ok((end, tr))
}

/// Single-sample integration; the result keeps the input's shape.
pub fn integrate_sample<F: VectorField<f64> + ?Sized>(field: &F, x0: &Sample, config: SolverConfig) -> Result<Sample> {
    let view = ArrayView2::from_shape((1, x0.len()), x0.values()).expect("row view");
    let out = integrate(field, view, config)?;
    Sample::new(out.into_raw_vec_and_offset().0, x0.shape().to_vec())
}

/// Integrates from `t = 1` back to `t = 0`.
pub fn reverse_map<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    x1: ArrayView2<T>,
    method: Method,
    steps: usize,
) -> Result<Array2<T>> {
    integrate(field, x1, SolverConfig::reverse(method, steps))
}
