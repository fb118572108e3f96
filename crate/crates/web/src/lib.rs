//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array` with a fixed row stride so the
//! page can plot it without any decoding. The plain Rust functions of the
//! same name back the exports and are what the tests exercise.

use factcheck_core::harness::{execute, ExperimentConfig};
use factcheck_core::lyapunov::Lyapunov;
use factcheck_core::meanfield::ode_flow;
use factcheck_core::{Error, Result, UnreliabilityVector};
use wasm_bindgen::prelude::*;

/// Estimator run on a simulated stream. Rows are `t, P_1..P_n, gamma, V`
/// with `V` NaN when not tracked.
pub fn trajectory(pi: &[f64], horizon: u64, seed: u64, points: u64) -> Result<Vec<f64>> {
    let config = ExperimentConfig {
        pi: pi.to_vec(),
        horizon,
        seed,
        cadence: Some((horizon / points.max(1)).max(1)),
        ..Default::default()
    };
    let outcome = execute(&config)?;
    let mut out = Vec::new();
    for rec in &outcome.trajectory.records {
        out.push(rec.t as f64);
        out.extend_from_slice(&rec.estimate);
        out.push(rec.gamma as f64);
        out.push(rec.diagnostics.as_ref().and_then(|d| d.lyapunov).unwrap_or(f64::NAN));
    }
    Ok(out)
}

/// Mean-field flow from `x0`. Rows are `s, x_1..x_n, V`.
pub fn flow(pi: &[f64], x0: &[f64], duration: f64, step: f64) -> Result<Vec<f64>> {
    let pi = UnreliabilityVector::interior(pi.to_vec())?;
    let x0 = UnreliabilityVector::new(x0.to_vec())?;
    let path = ode_flow(&x0, &pi, duration, step)?;
    let mut out = Vec::with_capacity(path.samples.len() * (pi.len() + 2));
    for s in &path.samples {
        out.push(s.s);
        out.extend_from_slice(&s.x);
        out.push(s.v);
    }
    Ok(out)
}

/// `V` on a `res × res` grid of cell centres over the two free coordinates
/// of a three-agent model, with coordinate `fixed` held at `value`. Row
/// index runs over the first free coordinate.
pub fn lyapunov_slice(pi: &[f64], fixed: usize, value: f64, res: usize) -> Result<Vec<f64>> {
    if pi.len() != 3 || fixed > 2 {
        return Err(Error::InvalidArgument("slices need three agents and fixed in 0..3".into()));
    }
    if res == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let lyap = Lyapunov::new(&UnreliabilityVector::interior(pi.to_vec())?)?;
    let free: Vec<usize> = (0..3).filter(|&k| k != fixed).collect();
    let mut out = Vec::with_capacity(res * res);
    let mut x = [0.0; 3];
    x[fixed] = value;
    for a in 0..res {
        for b in 0..res {
            x[free[0]] = (a as f64 + 0.5) / res as f64;
            x[free[1]] = (b as f64 + 0.5) / res as f64;
            out.push(lyap.value(&UnreliabilityVector::new(x.to_vec())?)?);
        }
    }
    Ok(out)
}

fn js(err: Error) -> JsError {
    JsError::new(&err.to_string())
}

#[wasm_bindgen(js_name = trajectory)]
pub fn trajectory_js(pi: &[f64], horizon: u32, seed: u32, points: u32) -> Result<Vec<f64>, JsError> {
    trajectory(pi, horizon.into(), seed.into(), points.into()).map_err(js)
}

#[wasm_bindgen(js_name = flow)]
pub fn flow_js(pi: &[f64], x0: &[f64], duration: f64, step: f64) -> Result<Vec<f64>, JsError> {
    flow(pi, x0, duration, step).map_err(js)
}

#[wasm_bindgen(js_name = lyapunovSlice)]
pub fn lyapunov_slice_js(pi: &[f64], fixed: usize, value: f64, res: usize) -> Result<Vec<f64>, JsError> {
    lyapunov_slice(pi, fixed, value, res).map_err(js)
}
