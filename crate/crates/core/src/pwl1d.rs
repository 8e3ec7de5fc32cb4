//! Univariate piecewise-linear functions and their exact wide and deep
//! ReLU realizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Activation, Network, Src};

/// Slopes closer than this are fused.
pub const MERGE_TOL: f64 = 1e-9;

/// Candidate breakpoints closer than this are treated as one.
const KNOT_EPS: f64 = 1e-12;

/// `f` on `[-B, B]`, stored as breakpoints `x_0 = -B < … < x_{n+1} = B`,
/// slopes `w^(0..=n)` and the anchor `f(x_0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlFunction1D {
    #[serde(rename = "B")]
    pub b: f64,
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub anchor: f64,
}

impl PwlFunction1D {
    pub fn new(b: f64, breakpoints: Vec<f64>, slopes: Vec<f64>, anchor: f64) -> Result<Self> {
        let f = PwlFunction1D {
            b,
            breakpoints,
            slopes,
            anchor,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::Input(format!("B must be positive, got {}", self.b)));
        }
        let k = &self.breakpoints;
        if k.len() < 2 || self.slopes.len() + 1 != k.len() {
            return Err(Error::Input(format!(
                "{} breakpoints need {} slopes, got {}",
                k.len(),
                k.len().saturating_sub(1),
                self.slopes.len()
            )));
        }
        if k[0] != -self.b || k[k.len() - 1] != self.b {
            return Err(Error::Input("breakpoints must start at -B and end at B".into()));
        }
        if k.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("breakpoints must be strictly increasing".into()));
        }
        if !self.anchor.is_finite() || self.slopes.iter().any(|s| !s.is_finite()) {
            return Err(Error::Input("non-finite slope or anchor".into()));
        }
        if let Some(w) = self.slopes.windows(2).find(|w| (w[1] - w[0]).abs() <= MERGE_TOL) {
            return Err(Error::DegeneratePiece { delta: (w[1] - w[0]).abs() });
        }
        Ok(())
    }

    /// Number of interior breakpoints.
    pub fn n(&self) -> usize {
        self.breakpoints.len() - 2
    }

    pub fn pieces(&self) -> usize {
        self.slopes.len()
    }

    /// Interior breakpoints `x_1..x_n`.
    pub fn interior(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.breakpoints;
        let mut y = self.anchor;
        for (i, &w) in self.slopes.iter().enumerate() {
            if x <= k[i] {
                break;
            }
            let hi = x.min(k[i + 1]);
            y += w * (hi - k[i]);
        }
        y
    }

    /// Slope increments `Δ_i = w^(i) - w^(i-1)` with `w^(-1) = 0`.
    pub fn deltas(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.slopes
            .iter()
            .map(|&w| {
                let d = w - prev;
                prev = w;
                d
            })
            .collect()
    }

    /// Builds the canonical form from sampled knots `(x, f(x))`, fusing
    /// neighbouring pieces whose slopes agree within [`MERGE_TOL`].
    pub fn from_knots(b: f64, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Input("need at least two knots".into()));
        }
        let mut bp = vec![xs[0]];
        let mut slopes: Vec<f64> = Vec::new();
        let mut start = 0;
        for i in 0..xs.len() - 1 {
            let s = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            if let Some(last) = slopes.last_mut() {
                if (s - *last).abs() <= MERGE_TOL {
                    *last = (ys[i + 1] - ys[start]) / (xs[i + 1] - xs[start]);
                    *bp.last_mut().unwrap() = xs[i + 1];
                    continue;
                }
            }
            start = i;
            slopes.push(s);
            bp.push(xs[i + 1]);
        }
        PwlFunction1D::new(b, bp, slopes, ys[0])
    }
}

/// Exact piecewise-linear form of a univariate ReLU network on `[-B, B]`.
///
/// Breakpoints are found by propagation: every unit's preactivation is
/// affine between the current knots, so its sign changes are located by
/// interpolation and added as new knots before moving on.
pub fn extract_pwl(net: &Network, b: f64) -> Result<PwlFunction1D> {
    if net.input_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "extraction needs a univariate network, got input_dim {}",
            net.input_dim()
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Input(format!("B must be positive, got {b}")));
    }
    if net.neurons().iter().any(|n| n.activation == Activation::Step) {
        return Err(Error::Unsupported("binary-step units are not piecewise linear".into()));
    }
    let mut knots = vec![-b, b];
    for unit in 0..net.neurons().len() {
        if net.neurons()[unit].activation != Activation::Relu {
            continue;
        }
        let pre: Vec<f64> = knots.iter().map(|&x| net.preactivations(&[x])[unit]).collect();
        let mut added = Vec::new();
        for i in 0..knots.len() - 1 {
            let (p, q) = (pre[i], pre[i + 1]);
            if (p < 0.0 && q > 0.0) || (p > 0.0 && q < 0.0) {
                let t = knots[i] + (knots[i + 1] - knots[i]) * p / (p - q);
                if t - knots[i] > KNOT_EPS && knots[i + 1] - t > KNOT_EPS {
                    added.push(t);
                }
            }
        }
        if !added.is_empty() {
            knots.extend(added);
            knots.sort_by(f64::total_cmp);
        }
    }
    let ys: Vec<f64> = knots.iter().map(|&x| net.evaluate(&[x]).expect("dim checked")).collect();
    PwlFunction1D::from_knots(b, &knots, &ys)
}

/// `H₁(x) = f(x₀) + Σ Δ_i σ(x - x_i)`: one hidden layer of width `n+1`.
pub fn build_wide(f: &PwlFunction1D) -> Result<Network> {
    f.validate()?;
    let mut net = Network::new(1);
    let mut terms = Vec::with_capacity(f.pieces());
    for (i, d) in f.deltas().into_iter().enumerate() {
        let u = net.push(Activation::Relu, -f.breakpoints[i], vec![(Src::Input(0), 1.0)]);
        terms.push((u, d));
    }
    net.set_output(terms, f.anchor);
    Ok(net)
}

/// One-unit-wide chain `R_{i+1} = σ(|Δ_{i+1}|(R_i/|Δ_i| - x_{i+1} + x_i))`
/// read out as `f(x₀) + Σ sgn(Δ_i) R_i`; depth `n+2`.
pub fn build_deep(f: &PwlFunction1D) -> Result<Network> {
    f.validate()?;
    let deltas = f.deltas();
    let k = &f.breakpoints;
    let mut net = Network::new(1);
    let mut terms = Vec::with_capacity(deltas.len());
    // A zero first slope leaves Δ₀ = 0; R₀ then runs at unit scale and is
    // not read out.
    let scale = |i: usize| {
        let a = deltas[i].abs();
        if i == 0 && a == 0.0 {
            1.0
        } else {
            a
        }
    };
    let s0 = scale(0);
    let mut prev = net.push(Activation::Relu, -s0 * k[0], vec![(Src::Input(0), s0)]);
    terms.push((prev, deltas[0].signum() * (deltas[0] != 0.0) as u8 as f64));
    for i in 1..deltas.len() {
        let a = deltas[i].abs();
        if a <= MERGE_TOL {
            return Err(Error::DegeneratePiece { delta: a });
        }
        let u = net.push(
            Activation::Relu,
            -a * (k[i] - k[i - 1]),
            vec![(Src::Neuron(prev), a / scale(i - 1))],
        );
        terms.push((u, deltas[i].signum()));
        prev = u;
    }
    net.set_output(terms, f.anchor);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hat() -> PwlFunction1D {
        PwlFunction1D::new(1.0, vec![-1.0, 0.0, 1.0], vec![1.0, -1.0], 0.0).unwrap()
    }

    #[test]
    fn one_piece_wide_and_deep() {
        let f = PwlFunction1D::new(1.0, vec![-1.0, 1.0], vec![2.0], -1.0).unwrap();
        let w = build_wide(&f).unwrap();
        let d = build_deep(&f).unwrap();
        assert_eq!(w.neurons().len(), 1);
        assert_eq!(w.neurons()[0].bias, 1.0);
        assert_eq!(w.output_terms(), &[(0, 2.0)]);
        assert_eq!(d.neurons()[0].incoming, vec![(Src::Input(0), 2.0)]);
        assert_eq!(d.neurons()[0].bias, 2.0);
        assert_eq!(d.structure_metrics().depth, 2);
        for x in [-1.0, -0.25, 0.0, 0.7, 1.0] {
            assert_eq!(w.evaluate(&[x]).unwrap(), 2.0 * x + 1.0);
            assert_eq!(d.evaluate(&[x]).unwrap(), 2.0 * x + 1.0);
        }
    }

    #[test]
    fn hat_function() {
        let f = hat();
        let w = build_wide(&f).unwrap();
        let d = build_deep(&f).unwrap();
        // H₁ = σ(x+1) - 2σ(x)
        assert_eq!(w.output_terms(), &[(0, 1.0), (1, -2.0)]);
        assert_eq!(w.evaluate(&[0.5]).unwrap(), 0.5);
        assert_eq!(d.evaluate(&[0.5]).unwrap(), 0.5);
        assert_eq!(d.evaluate(&[-0.5]).unwrap(), 0.5);
        let m = d.structure_metrics();
        assert_eq!((m.width, m.depth), (1, 3));
    }

    #[test]
    fn zero_first_slope_is_handled() {
        let f = PwlFunction1D::new(1.0, vec![-1.0, 0.2, 1.0], vec![0.0, 3.0], 0.5).unwrap();
        let d = build_deep(&f).unwrap();
        for x in [-1.0, 0.0, 0.2, 0.6, 1.0] {
            assert!((d.evaluate(&[x]).unwrap() - f.eval(x)).abs() < 1e-12);
        }
        assert_eq!(d.structure_metrics().depth, f.n() + 2);
    }

    #[test]
    fn equal_neighbouring_slopes_rejected() {
        let e = PwlFunction1D::new(1.0, vec![-1.0, 0.0, 1.0], vec![1.0, 1.0], 0.0);
        assert!(matches!(e, Err(Error::DegeneratePiece { .. })));
    }

    #[test]
    fn identity_extracts_to_one_piece() {
        let mut n = Network::new(1);
        let p = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), 1.0)]);
        let q = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), -1.0)]);
        n.set_output(vec![(p, 1.0), (q, -1.0)], 0.0);
        let f = extract_pwl(&n, 1.0).unwrap();
        assert_eq!(f.slopes, vec![1.0]);
        assert_eq!(f.anchor, -1.0);
    }

    #[test]
    fn abs_extracts_to_two_pieces() {
        let mut n = Network::new(1);
        let p = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), 1.0)]);
        let q = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), -1.0)]);
        n.set_output(vec![(p, 1.0), (q, 1.0)], 0.0);
        let f = extract_pwl(&n, 1.0).unwrap();
        assert_eq!(f.breakpoints, vec![-1.0, 0.0, 1.0]);
        assert_eq!(f.slopes, vec![-1.0, 1.0]);
        assert_eq!(f.anchor, 1.0);
        for i in 0..=10_000 {
            let x = -1.0 + 2.0 * i as f64 / 10_000.0;
            assert!((f.eval(x) - x.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn pwl_doc_round_trip() {
        let f = hat();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"B\""));
        let back: PwlFunction1D = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
