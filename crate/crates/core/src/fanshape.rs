//! Fan-shaped ReLU blocks `F_{j+1} = σ(F_j - μ^j σ(h_{j+1}))`, `F_1 = h_1`.
//!
//! For large `μ` the block equals `h_1` on `h_1⁺ ∩ h_2⁻ ∩ … ∩ h_D⁻` and zero
//! elsewhere, except on a thin slack set along the gate hyperplanes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::netcore::{Activation, Network, Src};

/// Cap applied to the powers `μ^j`.
pub const MU_POW_CAP: f64 = 1e12;

/// Affine functional `h(x) = p·x + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub p: Vec<f64>,
    pub r: f64,
}

impl Affine {
    pub fn new(p: Vec<f64>, r: f64) -> Self {
        Affine { p, r }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.r
    }

    pub fn neg(&self) -> Affine {
        Affine {
            p: self.p.iter().map(|v| -v).collect(),
            r: -self.r,
        }
    }

    /// `self - s·other`.
    pub fn sub_scaled(&self, other: &Affine, s: f64) -> Affine {
        Affine {
            p: self.p.iter().zip(&other.p).map(|(a, b)| a - s * b).collect(),
            r: self.r - s * other.r,
        }
    }

    fn sources(&self) -> Vec<(Src, f64)> {
        Network::affine_in(&self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanSpec {
    pub h: Vec<Affine>,
    pub mu: f64,
}

impl FanSpec {
    pub fn new(h: Vec<Affine>, mu: f64) -> Result<Self> {
        let s = FanSpec { h, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.h.len();
        if d < 2 || self.h.iter().any(|h| h.p.len() != d) {
            return Err(Error::Input(format!("a fan in R^D needs D ≥ 2 functionals of length D, got {d}")));
        }
        if !(self.mu >= 2.0) || !self.mu.is_finite() {
            return Err(Error::Input(format!("mu must be at least 2, got {}", self.mu)));
        }
        let m = DMatrix::from_fn(d, d, |r, c| self.h[r].p[c]);
        let smin = m.singular_values().min();
        if !(smin > 1e-10) {
            return Err(Error::Input(format!("fan directions are dependent (σ_min = {smin:e})")));
        }
        Ok(())
    }

    /// `h_1(x)` on the ideal fan `h_1⁺ ∩ h_2⁻ ∩ … ∩ h_D⁻`, zero elsewhere.
    pub fn ideal(&self, x: &[f64]) -> f64 {
        let h1 = self.h[0].eval(x);
        if h1 >= 0.0 && self.h[1..].iter().all(|h| h.eval(x) <= 0.0) {
            h1
        } else {
            0.0
        }
    }
}

/// `μ^j`, capped at [`MU_POW_CAP`] with a warning.
pub fn mu_power(mu: f64, j: u32) -> f64 {
    let v = mu.powi(j as i32);
    if v > MU_POW_CAP {
        log::warn!("mu^{j} = {v:e} exceeds {MU_POW_CAP:e}; capped");
        MU_POW_CAP
    } else {
        v
    }
}

/// Over-estimate `(2B)^{D-1} √D` of the largest hyperplane section of
/// `[-B, B]^D`.
pub fn c_bound(d: usize, b: f64) -> f64 {
    (2.0 * b).powi(d as i32 - 1) * (d as f64).sqrt()
}

/// Appends a fan chain with lead `lead` and gates `gates` to `net`; returns
/// the id of the last unit. Gate units come first so that all of them sit
/// in the first layer.
pub(crate) fn push_fan(net: &mut Network, lead: &Affine, gates: &[Affine], mu: f64) -> usize {
    push_fan_with(net, lead, gates, mu, Activation::Relu)
}

pub(crate) fn push_fan_with(
    net: &mut Network,
    lead: &Affine,
    gates: &[Affine],
    mu: f64,
    act: Activation,
) -> usize {
    assert!(!gates.is_empty(), "a fan needs at least one gate");
    let gate_ids: Vec<usize> = gates.iter().map(|g| net.push(act, g.r, g.sources())).collect();
    let mut src = lead.sources();
    src.push((Src::Neuron(gate_ids[0]), -mu_power(mu, 1)));
    let mut prev = net.push(act, lead.r, src);
    for (j, &g) in gate_ids.iter().enumerate().skip(1) {
        prev = net.push(
            act,
            0.0,
            vec![(Src::Neuron(prev), 1.0), (Src::Neuron(g), -mu_power(mu, j as u32 + 1))],
        );
    }
    prev
}

fn build(spec: &FanSpec) -> Result<Network> {
    spec.validate()?;
    let mut net = Network::new(spec.dim());
    let out = push_fan(&mut net, &spec.h[0], &spec.h[1..], spec.mu);
    net.set_output(vec![(out, 1.0)], 0.0);
    Ok(net)
}

/// `σ(h_1 - μ σ(h_2))`: width 2, depth 2.
pub fn build_fan_2d(spec: &FanSpec) -> Result<Network> {
    if spec.dim() != 2 {
        return Err(Error::Input(format!("planar fan needs D = 2, got {}", spec.dim())));
    }
    build(spec)
}

/// The D-dimensional chain: width D, depth D.
pub fn build_fan_nd(spec: &FanSpec) -> Result<Network> {
    build(spec)
}

/// Analytic bound `C Σ_{j=1}^{D-1} μ^{-j}` on the slack measure in
/// `[-B, B]^D`; for `D = 2` this is `2√2 B / μ`, and it never exceeds
/// `C / (μ - 1)`.
pub fn slack_measure_bound(spec: &FanSpec, b: f64) -> f64 {
    let d = spec.dim();
    let c = c_bound(d, b);
    (1..d as u32).map(|j| 1.0 / spec.mu.powi(j as i32)).sum::<f64>() * c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(d: usize, mu: f64) -> FanSpec {
        let h = (0..d)
            .map(|k| {
                let mut p = vec![0.0; d];
                p[k] = 1.0;
                Affine::new(p, 0.0)
            })
            .collect();
        FanSpec::new(h, mu).unwrap()
    }

    #[test]
    fn planar_fan_values() {
        let net = build_fan_2d(&axes(2, 100.0)).unwrap();
        assert_eq!(net.evaluate(&[0.5, -0.3]).unwrap(), 0.5);
        assert_eq!(net.evaluate(&[0.5, 0.3]).unwrap(), 0.0);
        assert!((net.evaluate(&[0.5, 0.004]).unwrap() - 0.1).abs() < 1e-12);
        let m = net.structure_metrics();
        assert_eq!((m.width, m.depth), (2, 2));
    }

    #[test]
    fn spatial_fan_values() {
        let net = build_fan_nd(&axes(3, 100.0)).unwrap();
        assert_eq!(net.evaluate(&[0.4, -1.0, -1.0]).unwrap(), 0.4);
        assert_eq!(net.evaluate(&[0.4, 0.2, -1.0]).unwrap(), 0.0);
        let m = net.structure_metrics();
        assert_eq!((m.width, m.depth), (3, 3));
    }

    #[test]
    fn dependent_directions_rejected() {
        let h = vec![Affine::new(vec![1.0, 1.0], 0.0), Affine::new(vec![2.0, 2.0], 1.0)];
        assert!(FanSpec::new(h, 10.0).is_err());
    }

    #[test]
    fn bounds() {
        let b2 = slack_measure_bound(&axes(2, 100.0), 1.0);
        assert!((b2 - 2.0 * 2f64.sqrt() / 100.0).abs() < 1e-15);
        let s3 = axes(3, 2.0);
        let c = c_bound(3, 1.0);
        assert!((slack_measure_bound(&s3, 1.0) - 0.75 * c).abs() < 1e-12);
        assert!(slack_measure_bound(&s3, 1.0) <= c / (2.0 - 1.0));
        assert!(slack_measure_bound(&axes(2, 1e300), 1.0) < 1e-290);
    }

    #[test]
    fn power_cap() {
        assert_eq!(mu_power(1e5, 2), 1e10);
        assert_eq!(mu_power(1e5, 3), MU_POW_CAP);
    }
}
