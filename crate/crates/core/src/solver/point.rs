use nalgebra::DVector;

/// Iterate of the homogeneous self-dual embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t: DVector<f64>,
    pub tau: f64,
    pub kappa: f64,
    /// Barrier parameter `(x't + tau kappa) / (k + 1)`.
    pub lambda: f64,
    /// Fraction of the starting point's residuals still present. Every step
    /// multiplies the residuals of `Ax - b tau`, `A'y + t - c tau` and
    /// `-c'x + b'y - kappa` by `1 - eta * omega`; the backward pass needs it.
    pub theta: f64,
}

impl InteriorPoint {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn barrier_parameter(&self) -> f64 {
        (self.x.dot(&self.t) + self.tau * self.kappa) / (self.x.len() as f64 + 1.0)
    }

    pub fn refresh_lambda(&mut self) {
        self.lambda = self.barrier_parameter();
    }

    pub fn is_strictly_interior(&self) -> bool {
        self.tau > 0.0
            && self.kappa > 0.0
            && self.x.iter().all(|v| *v > 0.0)
            && self.t.iter().all(|v| *v > 0.0)
    }

    pub fn advance(&mut self, d: &Direction, omega: f64) {
        self.x.axpy(omega, &d.dx, 1.0);
        self.y.axpy(omega, &d.dy, 1.0);
        self.t.axpy(omega, &d.dt, 1.0);
        self.tau += omega * d.dtau;
        self.kappa += omega * d.dkappa;
        self.refresh_lambda();
    }

    /// The same point divided through by `tau`: `(x, y, t, 1, kappa / tau)`.
    /// The barrier parameter becomes `lambda / tau^2` and `theta` becomes `theta / tau`.
    pub fn scaled(&self) -> InteriorPoint {
        let s = 1.0 / self.tau;
        let mut out = InteriorPoint {
            x: &self.x * s,
            y: &self.y * s,
            t: &self.t * s,
            tau: 1.0,
            kappa: self.kappa * s,
            lambda: 0.0,
            theta: self.theta * s,
        };
        out.refresh_lambda();
        out
    }
}

/// All-ones starting point: `x = t = e`, `y = 0`, `tau = kappa = 1`, so `lambda = 1`.
pub fn initialize(k: usize, p: usize) -> InteriorPoint {
    InteriorPoint {
        x: DVector::from_element(k, 1.0),
        y: DVector::zeros(p),
        t: DVector::from_element(k, 1.0),
        tau: 1.0,
        kappa: 1.0,
        lambda: 1.0,
        theta: 1.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dt: DVector<f64>,
    pub dtau: f64,
    pub dkappa: f64,
}

/// Largest `omega <= 1` keeping `x, t, tau, kappa` strictly positive after
/// backing off by `rho`: `min(1, rho * min_{d_v < 0} -v / d_v)`.
pub fn step_size(pt: &InteriorPoint, d: &Direction, rho: f64) -> f64 {
    let pairs =
        pt.x.iter()
            .zip(d.dx.iter())
            .chain(pt.t.iter().zip(d.dt.iter()))
            .chain(std::iter::once((&pt.tau, &d.dtau)))
            .chain(std::iter::once((&pt.kappa, &d.dkappa)));
    let ratio = pairs
        .filter(|(_, dv)| **dv < 0.0)
        .map(|(v, dv)| -v / dv)
        .fold(f64::INFINITY, f64::min);
    if ratio.is_finite() {
        (rho * ratio).min(1.0)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(dx: &[f64], dt: &[f64], dtau: f64, dkappa: f64) -> Direction {
        Direction {
            dx: DVector::from_row_slice(dx),
            dy: DVector::zeros(1),
            dt: DVector::from_row_slice(dt),
            dtau,
            dkappa,
        }
    }

    #[test]
    fn all_ones_start() {
        let pt = initialize(2, 1);
        assert_eq!(pt.x.as_slice(), &[1.0, 1.0]);
        assert_eq!(pt.y.as_slice(), &[0.0]);
        assert_eq!(pt.t.as_slice(), &[1.0, 1.0]);
        assert_eq!((pt.tau, pt.kappa, pt.lambda), (1.0, 1.0, 1.0));
        assert_eq!(initialize(1, 1).lambda, 1.0);
        for k in 1..20 {
            let pt = initialize(k, 1);
            assert_eq!(pt.barrier_parameter(), 1.0);
            assert_eq!(pt.x.dot(&pt.t) + pt.tau * pt.kappa, k as f64 + 1.0);
        }
    }

    #[test]
    fn nonnegative_direction_takes_full_step() {
        let pt = initialize(2, 1);
        assert_eq!(
            step_size(&pt, &dir(&[1.0, 0.0], &[0.5, 2.0], 0.0, 3.0), 0.99),
            1.0
        );
    }

    #[test]
    fn single_blocking_component() {
        let mut pt = initialize(1, 1);
        pt.x[0] = 1.0;
        let w = step_size(&pt, &dir(&[-2.0], &[0.0], 0.0, 0.0), 0.99);
        assert!((w - 0.495).abs() < 1e-15);
    }

    #[test]
    fn minimum_over_blocking_components() {
        let pt = initialize(2, 1);
        // -1/-2.5 = 0.4 and -1/-1.25 = 0.8
        let w = step_size(&pt, &dir(&[-2.5, 0.0], &[0.0, -1.25], 0.0, 0.0), 0.9);
        assert!((w - 0.36).abs() < 1e-15);
    }

    #[test]
    fn scaling_divides_by_tau() {
        let mut pt = initialize(2, 1);
        pt.tau = 2.0;
        pt.kappa = 3.0;
        pt.refresh_lambda();
        let s = pt.scaled();
        assert_eq!(s.tau, 1.0);
        assert_eq!(s.kappa, 1.5);
        assert!((s.lambda - pt.lambda / 4.0).abs() < 1e-15);
    }
}
