//! RK4 geodesic integration with parallel transport of a frame.

use crate::catalog::MetricDescriptor;
use crate::error::{GeoError, Result};
use crate::tensor::connection_at;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub s: f64,
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Last accepted step.
    pub step: f64,
    /// Largest step-doubling difference among accepted steps (0 for fixed steps).
    pub error_estimate: f64,
    pub exited: bool,
    pub exit_reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    Fixed(f64),
    /// Step doubling/halving against an absolute per-step tolerance.
    Adaptive { initial: f64, tol: f64 },
}

/// Christoffel symbols Γ^d_{ab} at x, stored [d][a][b].
pub fn christoffel_values(metric: &MetricDescriptor, x: &[f64]) -> Result<Vec<f64>> {
    let b = connection_at(metric, x, 1)?;
    Ok(b.gamma.iter().map(|j| j.value()).collect())
}

fn rhs(metric: &MetricDescriptor, y: &[f64], nvec: usize) -> Result<Vec<f64>> {
    let n = metric.dim();
    let gam = christoffel_values(metric, &y[..n])?;
    let mut out = vec![0.0; y.len()];
    out[..n].copy_from_slice(&y[n..2 * n]);
    let l = &y[n..2 * n];
    for v in 0..nvec + 1 {
        let w = &y[(v + 1) * n..(v + 2) * n];
        for d in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += gam[(d * n + a) * n + b] * l[a] * w[b];
                }
            }
            out[(v + 1) * n + d] = -s;
        }
    }
    Ok(out)
}

fn rk4_step(metric: &MetricDescriptor, y: &[f64], h: f64, nvec: usize) -> Result<Vec<f64>> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs(metric, y, nvec)?;
    let k2 = rhs(metric, &add(y, &k1, h / 2.0), nvec)?;
    let k3 = rhs(metric, &add(y, &k2, h / 2.0), nvec)?;
    let k4 = rhs(metric, &add(y, &k3, h), nvec)?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn sample(s: f64, y: &[f64], n: usize, nvec: usize) -> TrajectorySample {
    TrajectorySample {
        s,
        x: y[..n].to_vec(),
        l: y[n..2 * n].to_vec(),
        frame: (0..nvec)
            .map(|v| y[(v + 2) * n..(v + 3) * n].to_vec())
            .collect(),
    }
}

/// Integrates ∇_L L = 0 from (x0, v0) over the signed parameter span, transporting `frame`.
pub fn geodesic_flow(
    metric: &MetricDescriptor,
    x0: &[f64],
    v0: &[f64],
    span: f64,
    control: StepControl,
    frame: &[Vec<f64>],
) -> Result<Trajectory> {
    let n = metric.dim();
    metric.domain.check(x0)?;
    if v0.iter().all(|v| *v == 0.0) {
        return Err(GeoError::Input("initial tangent is zero".into()));
    }
    let nvec = frame.len();
    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    for e in frame {
        y.extend_from_slice(e);
    }
    let dir = span.signum();
    let total = span.abs();
    let mut s = 0.0;
    let mut traj = Trajectory {
        samples: vec![sample(0.0, &y, n, nvec)],
        step: 0.0,
        error_estimate: 0.0,
        exited: false,
        exit_reason: None,
    };
    let (mut h, tol) = match control {
        StepControl::Fixed(h) => (h.abs(), None),
        StepControl::Adaptive { initial, tol } => (initial.abs(), Some(tol)),
    };
    if !(h > 0.0) {
        return Err(GeoError::Input("step must be positive".into()));
    }
    while s < total * (1.0 - 1e-14) {
        let hs = h.min(total - s);
        let attempt = match tol {
            None => rk4_step(metric, &y, dir * hs, nvec).map(|v| (v, 0.0)),
            Some(tol) => {
                let full = rk4_step(metric, &y, dir * hs, nvec);
                let half = rk4_step(metric, &y, dir * hs / 2.0, nvec)
                    .and_then(|m| rk4_step(metric, &m, dir * hs / 2.0, nvec));
                match (full, half) {
                    (Ok(f), Ok(hf)) => {
                        let err = f.iter().zip(&hf).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                        if err > tol && hs > 1e-12 {
                            h = hs / 2.0;
                            continue;
                        }
                        Ok((hf, err))
                    }
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            }
        };
        match attempt {
            Ok((next, err)) => {
                let ok = metric.domain.violation(&next[..n]);
                if let Some(reason) = ok {
                    traj.exited = true;
                    traj.exit_reason = Some(reason);
                    break;
                }
                y = next;
                s += hs;
                traj.step = hs;
                traj.error_estimate = traj.error_estimate.max(err);
                traj.samples.push(sample(dir * s, &y, n, nvec));
                if let Some(tol) = tol {
                    if err < tol / 32.0 {
                        h = hs * 2.0;
                    }
                }
            }
            Err(GeoError::SingularChart { reason, .. }) => {
                traj.exited = true;
                traj.exit_reason = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{minkowski, MinkowskiChart};

    #[test]
    fn straight_lines_in_flat_space() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let frame = vec![vec![0.0, 0.0, 1.0, 0.0]];
        let t = geodesic_flow(
            &m,
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 0.5, 0.0, -0.2],
            2.0,
            StepControl::Fixed(0.25),
            &frame,
        )
        .unwrap();
        let last = t.samples.last().unwrap();
        assert!((last.s - 2.0).abs() < 1e-14);
        assert!((last.x[1] - 2.0).abs() < 1e-14);
        assert_eq!(last.frame[0], frame[0]);
        assert!(!t.exited);
    }

    #[test]
    fn exit_is_flagged() {
        let m = minkowski(MinkowskiChart::Polar);
        let t = geodesic_flow(
            &m,
            &[0.0, 1.0, 1.0, 0.0],
            &[1.0, -1.0, 0.0, 0.0],
            3.0,
            StepControl::Fixed(0.1),
            &[],
        )
        .unwrap();
        assert!(t.exited);
        assert!(t.samples.last().unwrap().x[1] > 0.0);
    }
}
