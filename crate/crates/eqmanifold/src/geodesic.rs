//! Geodesic integration in manifold coordinates: the exponential map by
//! adaptive Runge-Kutta integration of `x''^k + Gamma^k_ij x'^i x'^j = 0`,
//! and its local inverse by damped Newton shooting on the endpoint map.

use nalgebra::{DMatrix, DVector};

use crate::economy::{EconomyModel, ManifoldPoint};
use crate::error::{Error, Result};
use crate::geometry::{self, metric_at};

/// Absolute and relative tolerance of the embedded 4/5 pair.
pub const INTEGRATOR_ATOL: f64 = 1e-10;
pub const INTEGRATOR_RTOL: f64 = 1e-10;

/// Step cap; keeps the cubic-Hermite dense output at interpolation error
/// well below the 1e-8 contract of the path samples.
const MAX_STEP: f64 = 0.02;
const MIN_STEP: f64 = 1e-14;
const MAX_STEPS: usize = 1_000_000;

/// A tangent vector at a base point, in the coordinate basis `X_0..X_{L-1}`.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub coeffs: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, coeffs: DVector<f64>) -> Self {
        TangentVector { base, coeffs }
    }

    /// Riemannian norm `sqrt(c^T g c)` at the base point.
    pub fn g_norm(&self, model: &EconomyModel) -> Result<f64> {
        let g = metric_at(model, &self.base)?.g;
        Ok((self.coeffs.dot(&(&g * &self.coeffs))).max(0.0).sqrt())
    }
}

/// One accepted integrator step.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub s: f64,
    pub coords: DVector<f64>,
    pub velocity: DVector<f64>,
}

/// A geodesic sampled at every accepted step, `s` running from 0 to 1.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    /// Squared g-speed at s = 0; conserved along the path.
    pub energy: f64,
}

impl GeodesicPath {
    /// Coordinates at parameter `s` by cubic Hermite interpolation between
    /// the bracketing accepted steps.
    pub fn coords_at(&self, s: f64) -> DVector<f64> {
        let samples = &self.samples;
        if s <= samples[0].s {
            return samples[0].coords.clone();
        }
        if s >= samples[samples.len() - 1].s {
            return samples[samples.len() - 1].coords.clone();
        }
        let k = samples.partition_point(|smp| smp.s <= s) - 1;
        let (a, b) = (&samples[k], &samples[k + 1]);
        let h = b.s - a.s;
        let tau = (s - a.s) / h;
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        &a.coords * h00 + &a.velocity * (h10 * h) + &b.coords * h01 + &b.velocity * (h11 * h)
    }

    /// Max relative deviation of the g-speed from its value at s = 0.
    pub fn speed_drift(&self, model: &EconomyModel) -> Result<f64> {
        let s0 = g_speed(model, &self.samples[0])?;
        if s0 == 0.0 {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for sample in &self.samples {
            let sp = g_speed(model, sample)?;
            worst = worst.max((sp - s0).abs() / s0);
        }
        Ok(worst)
    }
}

/// g-speed `sqrt(v^T g v)` of a path sample.
pub fn g_speed(model: &EconomyModel, sample: &PathSample) -> Result<f64> {
    let pt = model.embed(sample.coords[0], sample.coords.as_slice().split_at(1).1)?;
    let g = metric_at(model, &pt)?.g;
    Ok((sample.velocity.dot(&(&g * &sample.velocity))).max(0.0).sqrt())
}

/// Follows the geodesic with `gamma(0) = base`, `gamma'(0) = v` to `s = 1`;
/// returns the endpoint and the sampled path.
pub fn exp_map(model: &EconomyModel, v: &TangentVector) -> Result<(ManifoldPoint, GeodesicPath)> {
    let l = model.goods();
    if v.coeffs.len() != l {
        return Err(Error::Validation(format!(
            "tangent coefficients have length {}, expected L = {l}",
            v.coeffs.len()
        )));
    }
    if v.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Validation("tangent coefficients must be finite".into()));
    }
    let mut y0 = vec![0.0; 2 * l];
    y0[0] = v.base.t();
    y0[1..l].copy_from_slice(v.base.alpha().as_slice());
    y0[l..].copy_from_slice(v.coeffs.as_slice());

    let samples = integrate(model, y0)?;
    let last = samples.last().expect("path has at least the initial sample");
    let endpoint = model.embed(last.coords[0], last.coords.as_slice().split_at(1).1)?;
    let energy = {
        let g = metric_at(model, &v.base)?.g;
        v.coeffs.dot(&(&g * &v.coeffs))
    };
    Ok((endpoint, GeodesicPath { samples, energy }))
}

/// Numerical inverse of the exponential map by damped Newton shooting,
/// initialized at the coordinate difference `y - x`.
pub fn log_map(
    model: &EconomyModel,
    x: &ManifoldPoint,
    y: &ManifoldPoint,
) -> Result<TangentVector> {
    const MAX_ITER: usize = 50;
    const MAX_HALVINGS: usize = 20;
    const FD_STEP: f64 = 1e-6;
    const TOL: f64 = 1e-10;

    let l = model.goods();
    let target = y.coords();
    let shoot = |c: &DVector<f64>| -> Result<DVector<f64>> {
        let (end, _) = exp_map(model, &TangentVector::new(x.clone(), c.clone()))?;
        Ok(end.coords() - &target)
    };

    let mut c = y.coords() - x.coords();
    let mut residual = shoot(&c)?;
    let mut res_norm = residual.amax();
    for iteration in 0..MAX_ITER {
        if res_norm <= TOL {
            return Ok(TangentVector::new(x.clone(), c));
        }
        // Forward-difference sensitivity of the endpoint map.
        let mut jac = DMatrix::zeros(l, l);
        for col in 0..l {
            let mut cp = c.clone();
            cp[col] += FD_STEP;
            let f = shoot(&cp)?;
            jac.set_column(col, &((f - &residual) / FD_STEP));
        }
        let delta = jac
            .lu()
            .solve(&(-&residual))
            .ok_or(Error::NonConvergence { iterations: iteration, residual: res_norm })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &c + &delta * lambda;
            match shoot(&trial) {
                Ok(f) if f.amax() < res_norm => {
                    accepted = Some((trial, f));
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        match accepted {
            Some((trial, f)) => {
                c = trial;
                res_norm = f.amax();
                residual = f;
            }
            None => {
                // Take the most damped step anyway; a strict stall here would
                // cycle forever, NonConvergence reports it after MAX_ITER.
                let trial = &c + &delta * lambda;
                residual = shoot(&trial)?;
                res_norm = residual.amax();
                c = trial;
            }
        }
    }
    if res_norm <= TOL {
        return Ok(TangentVector::new(x.clone(), c));
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, residual: res_norm })
}

/// Dormand-Prince 5(4) with FSAL and PI-free standard step control.
fn integrate(model: &EconomyModel, y0: Vec<f64>) -> Result<Vec<PathSample>> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // 5th-order weights equal the last A row (FSAL); E is b5 - b4.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let n = y0.len();
    let l = n / 2;
    let rhs = |s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        dy[..l].copy_from_slice(&y[l..]);
        let (alpha, v) = (&y[1..l], &y[l..]);
        geometry::geodesic_accel(model, y[0], alpha, v, &mut dy[l..]).map_err(|e| match e {
            Error::Domain { t, .. } => {
                Error::DomainExit { s, t, coords: y[..l].to_vec() }
            }
            other => other,
        })
    };

    let mut samples = Vec::new();
    let push = |samples: &mut Vec<PathSample>, s: f64, y: &[f64]| {
        samples.push(PathSample {
            s,
            coords: DVector::from_column_slice(&y[..l]),
            velocity: DVector::from_column_slice(&y[l..]),
        });
    };

    let mut s = 0.0;
    let mut y = y0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    {
        let mut k0 = std::mem::take(&mut k[0]);
        rhs(s, &y, &mut k0)?;
        k[0] = k0;
    }
    push(&mut samples, s, &y);

    let mut h = MAX_STEP.min(1e-2);
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    for _ in 0..MAX_STEPS {
        if s >= 1.0 {
            return Ok(samples);
        }
        h = h.min(1.0 - s);
        if h < MIN_STEP {
            return Err(Error::Stiffness { s, step: h });
        }
        let mut failed = false;
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (m, km) in k.iter().enumerate().take(stage) {
                    let a = A[stage - 1][m];
                    if a != 0.0 {
                        acc += a * km[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let c = A[stage - 1].iter().sum::<f64>();
            if stage == 6 {
                y_new.copy_from_slice(&y_stage);
            }
            let mut k_stage = std::mem::take(&mut k[stage]);
            let status = rhs(s + c * h, &y_stage, &mut k_stage);
            k[stage] = k_stage;
            match status {
                Ok(()) => {}
                Err(Error::DomainExit { .. }) => {
                    // Retry with a shorter step before declaring an exit; the
                    // trajectory may still turn inside the domain.
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed {
            h *= 0.5;
            if h < MIN_STEP {
                // Genuine exit: report the boundary crossing point.
                return Err(Error::DomainExit { s, t: y[0], coords: y[..l].to_vec() });
            }
            continue;
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (m, km) in k.iter().enumerate() {
                if E[m] != 0.0 {
                    e += E[m] * km[i];
                }
            }
            e *= h;
            let scale = INTEGRATOR_ATOL + INTEGRATOR_RTOL * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            s += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6); // FSAL
            push(&mut samples, s, &y);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(MAX_STEP);
        } else {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= factor;
        }
    }
    Err(Error::Stiffness { s, step: h })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_sin3() -> EconomyModel {
        EconomyModel::tanh_sin(3, 0.5, 0.3, 1.0, 0.0).unwrap()
    }

    fn tangent(model: &EconomyModel, t: f64, alpha: &[f64], coeffs: &[f64]) -> TangentVector {
        TangentVector::new(model.embed(t, alpha).unwrap(), DVector::from_column_slice(coeffs))
    }

    /// Classic fixed-step RK4 on the geodesic system; the independent
    /// reference integration for the adaptive path.
    fn rk4_reference(model: &EconomyModel, v: &TangentVector, steps: usize) -> Vec<f64> {
        let l = model.goods();
        let n = 2 * l;
        let mut y = vec![0.0; n];
        y[0] = v.base.t();
        y[1..l].copy_from_slice(v.base.alpha().as_slice());
        y[l..].copy_from_slice(v.coeffs.as_slice());
        let h = 1.0 / steps as f64;
        let rhs = |y: &[f64]| -> Vec<f64> {
            let mut dy = vec![0.0; n];
            dy[..l].copy_from_slice(&y[l..]);
            geometry::geodesic_accel(model, y[0], &y[1..l], &y[l..], &mut dy[l..]).unwrap();
            dy
        };
        let mut tmp = vec![0.0; n];
        for _ in 0..steps {
            let k1 = rhs(&y);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            let k2 = rhs(&tmp);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            let k3 = rhs(&tmp);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            let k4 = rhs(&tmp);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let m = tanh_sin3();
        let v = tangent(&m, 0.37, &[0.1, -0.6], &[0.0, 0.0, 0.0]);
        let (end, path) = exp_map(&m, &v).unwrap();
        assert_eq!(end.t(), 0.37);
        assert_eq!(end.alpha().as_slice(), &[0.1, -0.6]);
        assert_eq!(path.energy, 0.0);
    }

    #[test]
    fn constant_economy_geodesics_are_straight_lines() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let v = tangent(&m, 0.2, &[0.3, -0.1], &[0.5, -0.25, 0.75]);
        let (end, path) = exp_map(&m, &v).unwrap();
        assert!((end.t() - 0.7).abs() < 1e-12);
        assert!((end.alpha()[0] - 0.05).abs() < 1e-12);
        assert!((end.alpha()[1] - 0.65).abs() < 1e-12);
        assert!(path.speed_drift(&m).unwrap() < 1e-12);
    }

    #[test]
    fn endpoint_matches_high_precision_reference() {
        // Endpoint integrated with 25-digit arithmetic (mpmath Taylor method).
        let m = tanh_sin3();
        let v = tangent(&m, 0.0, &[0.0, 0.0], &[0.3, 0.1, -0.2]);
        let (end, path) = exp_map(&m, &v).unwrap();
        assert!((end.t() - 0.30257324305077883558).abs() < 1e-9);
        assert!((end.alpha()[0] - 0.10183304439320006280).abs() < 1e-9);
        assert!((end.alpha()[1] - -0.19821225326716687838).abs() < 1e-9);
        let last = path.samples.last().unwrap();
        assert!((last.velocity[0] - 0.30922279893144608500).abs() < 1e-8);
        assert!((last.velocity[1] - 0.10500252034435435867).abs() < 1e-8);
        assert!((last.velocity[2] - -0.19516470503288489761).abs() < 1e-8);
    }

    #[test]
    fn adaptive_endpoint_matches_fixed_step_rk4() {
        let m = tanh_sin3();
        let v = tangent(&m, 0.0, &[0.0, 0.0], &[0.3, 0.1, -0.2]);
        let (end, _) = exp_map(&m, &v).unwrap();
        let reference = rk4_reference(&m, &v, 20_000);
        assert!((end.t() - reference[0]).abs() < 1e-8);
        assert!((end.alpha()[0] - reference[1]).abs() < 1e-8);
        assert!((end.alpha()[1] - reference[2]).abs() < 1e-8);
    }

    #[test]
    fn speed_is_conserved() {
        let m = tanh_sin3();
        for (i, coeffs) in [[0.4, 0.2, -0.3], [-0.6, 0.1, 0.2], [0.1, -0.5, 0.4]]
            .iter()
            .enumerate()
        {
            let v = tangent(&m, -0.5 + 0.4 * i as f64, &[0.2, -0.2], coeffs);
            let (_, path) = exp_map(&m, &v).unwrap();
            assert!(path.speed_drift(&m).unwrap() < 1e-8);
        }
    }

    #[test]
    fn scaling_property_via_dense_output() {
        let m = tanh_sin3();
        let v = tangent(&m, 0.1, &[0.05, -0.15], &[0.5, 0.2, -0.4]);
        let (_, full) = exp_map(&m, &v).unwrap();
        for c in [0.25, 0.5, 0.8] {
            let scaled = TangentVector::new(v.base.clone(), &v.coeffs * c);
            let (end, _) = exp_map(&m, &scaled).unwrap();
            let interp = full.coords_at(c);
            let diff = (end.coords() - interp).amax();
            assert!(diff < 1e-8, "c = {c}: diff {diff:e}");
        }
    }

    #[test]
    fn domain_exit_is_reported_with_exit_point() {
        let m = tanh_sin3();
        let v = tangent(&m, 2.5, &[0.0, 0.0], &[5.0, 0.0, 0.0]);
        match exp_map(&m, &v) {
            Err(Error::DomainExit { s, t, .. }) => {
                assert!(s < 1.0);
                assert!(t > 2.5);
            }
            other => panic!("expected DomainExit, got {other:?}"),
        }
    }

    #[test]
    fn log_of_base_is_zero() {
        let m = tanh_sin3();
        let x = m.embed(0.3, &[0.2, -0.1]).unwrap();
        let v = log_map(&m, &x, &x).unwrap();
        assert!(v.coeffs.amax() < 1e-12);
    }

    #[test]
    fn log_map_constant_economy_is_coordinate_difference() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let x = m.embed(0.1, &[0.3, 0.4]).unwrap();
        let y = m.embed(0.9, &[-0.2, 0.6]).unwrap();
        let v = log_map(&m, &x, &y).unwrap();
        let want = y.coords() - x.coords();
        assert!((v.coeffs - want).amax() < 1e-10);
    }

    #[test]
    fn exp_log_round_trip() {
        let m = tanh_sin3();
        let x = m.embed(-0.2, &[0.3, 0.1]).unwrap();
        for coeffs in [[0.4, -0.2, 0.3], [0.1, 0.5, -0.1], [-0.3, -0.3, 0.2]] {
            let mut v = TangentVector::new(x.clone(), DVector::from_column_slice(&coeffs));
            let norm = v.g_norm(&m).unwrap();
            if norm > 1.0 {
                v.coeffs /= norm;
            }
            let (end, _) = exp_map(&m, &v).unwrap();
            let back = log_map(&m, &x, &end).unwrap();
            assert!((back.coeffs - &v.coeffs).amax() < 1e-7);
        }
    }
}
