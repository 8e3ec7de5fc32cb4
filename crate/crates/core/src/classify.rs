//! Classification networks: binary-step indicators of simplex unions and
//! ramped De Morgan networks over interval and box rules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanshape::c_bound;
use crate::geometry::{clip_halfplane, enumerate_regions_2d, triangulate, Hypercube, Simplex};
use crate::netcore::{compose_sum, Activation, Network, Src};
use crate::regress::{Mode, TransformOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Rule {
    Hypercube { lo: Vec<f64>, hi: Vec<f64> },
    Simplex { vertices: Vec<Vec<f64>> },
}

/// Disjoint rules; the label is 1 inside any rule region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSystem {
    #[serde(rename = "D")]
    pub d: usize,
    pub rules: Vec<Rule>,
}

impl RuleSystem {
    pub fn from_json(text: &str) -> Result<Self> {
        let rs: RuleSystem = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        for (i, r) in rs.rules.iter().enumerate() {
            let dim = match r {
                Rule::Hypercube { lo, hi } => Hypercube::new(lo.clone(), hi.clone()).map(|h| h.dim()),
                Rule::Simplex { vertices } => Simplex::new(vertices.clone()).map(|s| s.dim()),
            }
            .map_err(|e| Error::parse(format!("rules[{i}]"), e.to_string()))?;
            if dim != rs.d {
                return Err(Error::parse(format!("rules[{i}]"), format!("dimension {dim}, expected {}", rs.d)));
            }
        }
        Ok(rs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }

    pub fn hypercubes(&self) -> Result<Vec<Hypercube>> {
        self.rules
            .iter()
            .map(|r| match r {
                Rule::Hypercube { lo, hi } => Hypercube::new(lo.clone(), hi.clone()),
                Rule::Simplex { .. } => Err(Error::Input("expected hypercube rules".into())),
            })
            .collect()
    }

    pub fn simplices(&self) -> Result<Vec<Simplex>> {
        self.rules
            .iter()
            .map(|r| match r {
                Rule::Simplex { vertices } => Simplex::new(vertices.clone()),
                Rule::Hypercube { .. } => Err(Error::Input("expected simplex rules".into())),
            })
            .collect()
    }
}

/// Rule indices split into wide groups (`S_p`) and deep groups (`T_q`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitecturePlan {
    pub wide: Vec<Vec<usize>>,
    pub deep: Vec<Vec<usize>>,
}

impl ArchitecturePlan {
    pub fn all_wide(n: usize) -> Self {
        ArchitecturePlan {
            wide: vec![(0..n).collect()],
            deep: vec![],
        }
    }

    pub fn all_deep(n: usize) -> Self {
        ArchitecturePlan {
            wide: vec![],
            deep: vec![(0..n).collect()],
        }
    }

    /// Every index in `0..n` must appear in exactly one group.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.wide.iter().chain(&self.deep).flatten() {
            if i >= n || seen[i] {
                return Err(Error::Input(format!("plan repeats or overruns rule index {i}")));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("plan leaves rule {i} unassigned")));
        }
        Ok(())
    }
}

fn dims_agree(simplices: &[Simplex]) -> Result<usize> {
    let d = simplices[0].dim();
    if simplices.iter().any(|s| s.dim() != d) {
        return Err(Error::Input("rules of mixed dimension".into()));
    }
    Ok(d)
}

fn form_src(w: &[f64], scale: f64) -> Vec<(Src, f64)> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (Src::Input(k), scale * v))
        .collect()
}

/// `z(Σ_i z(ℓ_i(x)) - D - 1)`: width `D+1`, depth 2.
pub fn build_step_wide_block(s: &Simplex) -> Result<Network> {
    let d = s.dim();
    let mut net = Network::new(d);
    let ids: Vec<usize> = s
        .facet_forms()?
        .iter()
        .map(|(w, r)| net.push(Activation::Step, *r, form_src(w, 1.0)))
        .collect();
    let top = net.push(
        Activation::Step,
        -(d as f64) - 1.0,
        ids.iter().map(|&i| (Src::Neuron(i), 1.0)).collect(),
    );
    net.set_output(vec![(top, 1.0)], 0.0);
    Ok(net)
}

/// Sum of per-simplex step blocks; 1 exactly on the union of the closed
/// simplices.
pub fn build_step_wide(d: usize, simplices: &[Simplex]) -> Result<Network> {
    if simplices.is_empty() {
        return Ok(Network::constant(d, 0.0));
    }
    if dims_agree(simplices)? != d {
        return Err(Error::Input(format!("rules are not {d}-dimensional")));
    }
    let blocks = simplices.iter().map(build_step_wide_block).collect::<Result<Vec<_>>>()?;
    compose_sum(&blocks, &vec![1.0; blocks.len()], 0.0)
}

/// The step chain `F_2 = z(z(ℓ_1) - ½ - μ z(-ℓ_2))`,
/// `F_j = z(F_{j-1} - ½ - μ z(-ℓ_j))`, ending with `ℓ_{D+1}`: width `D+1`,
/// depth `D+1`.
pub fn build_step_deep_block(s: &Simplex, mu: f64) -> Result<Network> {
    let d = s.dim();
    let forms = s.facet_forms()?;
    let mut net = Network::new(d);
    let lead = net.push(Activation::Step, forms[0].1, form_src(&forms[0].0, 1.0));
    let gates: Vec<usize> = forms[1..]
        .iter()
        .map(|(w, r)| net.push(Activation::Step, -r, form_src(w, -1.0)))
        .collect();
    let mut prev = lead;
    for g in gates {
        prev = net.push(
            Activation::Step,
            -0.5,
            vec![(Src::Neuron(prev), 1.0), (Src::Neuron(g), -mu)],
        );
    }
    net.set_output(vec![(prev, 1.0)], 0.0);
    Ok(net)
}

/// Per-simplex deep blocks stacked one after another.
pub fn build_step_deep(d: usize, simplices: &[Simplex], mu: f64) -> Result<Network> {
    if !(mu > 1.0) {
        return Err(Error::Input(format!("mu must exceed 1, got {mu}")));
    }
    if simplices.is_empty() {
        return Ok(Network::constant(d, 0.0));
    }
    if dims_agree(simplices)? != d {
        return Err(Error::Input(format!("rules are not {d}-dimensional")));
    }
    let blocks = simplices
        .iter()
        .map(|s| build_step_deep_block(s, mu))
        .collect::<Result<Vec<_>>>()?;
    crate::netcore::compose_stack(&blocks)
}

/// `μ` at half of the bound `1/(μ-1) < δ/(C K)`.
pub fn step_mu(d: usize, b: f64, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !(b > 0.0) {
        return Err(Error::Input(format!("delta and B must be positive, got {delta}, {b}")));
    }
    Ok(1.0 + 2.0 * c_bound(d, b) * k.max(1) as f64 / delta)
}

/// Ramp width from a target disagreement `ε` for `n` box rules: half of
/// `(1 - (ε/2)^{1/n}) / 2`.
pub fn ramp_for_epsilon(eps: f64, n: usize) -> f64 {
    0.5 * (1.0 - (eps / 2.0).powf(1.0 / n.max(1) as f64)) / 2.0
}

/// A quarter of the smallest gap between rules, or `None` for fewer than
/// two rules.
pub fn default_ramp(rules: &[Hypercube]) -> Option<f64> {
    let mut g = f64::INFINITY;
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            g = g.min(rules[i].gap(&rules[j]));
        }
    }
    g.is_finite().then_some(g / 4.0)
}

fn check_rules(rules: &[Hypercube], ramp: f64) -> Result<usize> {
    if !(ramp > 0.0) {
        return Err(Error::Input(format!("ramp must be positive, got {ramp}")));
    }
    let d = rules.first().map_or(1, |r| r.dim());
    for (i, r) in rules.iter().enumerate() {
        if r.dim() != d {
            return Err(Error::Input(format!("rule {i} has dimension {}, expected {d}", r.dim())));
        }
        for (j, s) in rules.iter().enumerate().skip(i + 1) {
            let gap = r.gap(s);
            if !(gap > 2.0 * ramp) {
                return Err(Error::Input(format!(
                    "rules {i} and {j} are {gap} apart; the ramp {ramp} needs more than {}",
                    2.0 * ramp
                )));
            }
        }
    }
    Ok(d)
}

/// Pushes the ramped box indicator `A = σ(Σ_j T_j - (D-1))`, where `T_j` is
/// the trapezoid over `[lo_j, hi_j]` built from four ramps `σ(·/δ_r)`.
fn push_box(net: &mut Network, r: &Hypercube, ramp: f64, lag: usize) -> usize {
    let mut src = Vec::with_capacity(4 * r.dim());
    for k in 0..r.dim() {
        let edges = [
            (r.lo[k] - ramp, 1.0),
            (r.lo[k], -1.0),
            (r.hi[k], -1.0),
            (r.hi[k] + ramp, 1.0),
        ];
        for (at, sign) in edges {
            let id = net.push_lagged(
                Activation::Relu,
                -at / ramp,
                vec![(Src::Input(k), 1.0 / ramp)],
                lag,
            );
            src.push((Src::Neuron(id), sign));
        }
    }
    net.push(Activation::Relu, -(r.dim() as f64 - 1.0), src)
}

/// Chained union `u_i = clamp(u_{i-1} + A_i)` with `clamp(t) = σ(t) - σ(t-1)`.
pub fn build_demorgan_deep(rules: &[Hypercube], ramp: f64) -> Result<Network> {
    let d = check_rules(rules, ramp)?;
    let mut net = Network::new(d);
    if rules.is_empty() {
        return Ok(net);
    }
    let mut carry: Vec<(Src, f64)> = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        let a = push_box(&mut net, r, ramp, 2 * i);
        let mut src = carry.clone();
        src.push((Src::Neuron(a), 1.0));
        let p = net.push(Activation::Relu, 0.0, src.clone());
        let q = net.push(Activation::Relu, -1.0, src);
        carry = vec![(Src::Neuron(p), 1.0), (Src::Neuron(q), -1.0)];
    }
    let terms = carry
        .into_iter()
        .map(|(s, w)| match s {
            Src::Neuron(id) => (id, w),
            Src::Input(_) => unreachable!("carry holds neurons"),
        })
        .collect();
    net.set_output(terms, 0.0);
    Ok(net)
}

/// `1 - clamp(Σ_i ¬A_i - (n-1))` with `¬A_i = σ(1 - A_i)`.
pub fn build_demorgan_wide(rules: &[Hypercube], ramp: f64) -> Result<Network> {
    let d = check_rules(rules, ramp)?;
    let mut net = Network::new(d);
    if rules.is_empty() {
        return Ok(net);
    }
    let nots: Vec<(Src, f64)> = rules
        .iter()
        .map(|r| {
            let a = push_box(&mut net, r, ramp, 0);
            let na = net.push(Activation::Relu, 1.0, vec![(Src::Neuron(a), -1.0)]);
            (Src::Neuron(na), 1.0)
        })
        .collect();
    let t = -(rules.len() as f64 - 1.0);
    let p = net.push(Activation::Relu, t, nots.clone());
    let q = net.push(Activation::Relu, t - 1.0, nots);
    net.set_output(vec![(p, -1.0), (q, 1.0)], 1.0);
    Ok(net)
}

/// Wide networks for the groups `S_p` plus deep chains for the groups `T_q`,
/// summed.
pub fn build_mixed(rules: &[Hypercube], plan: &ArchitecturePlan, ramp: f64) -> Result<Network> {
    let d = check_rules(rules, ramp)?;
    plan.validate(rules.len())?;
    let pick = |g: &[usize]| g.iter().map(|&i| rules[i].clone()).collect::<Vec<_>>();
    let mut parts = Vec::new();
    for g in plan.wide.iter().filter(|g| !g.is_empty()) {
        parts.push(build_demorgan_wide(&pick(g), ramp)?);
    }
    for g in plan.deep.iter().filter(|g| !g.is_empty()) {
        parts.push(build_demorgan_deep(&pick(g), ramp)?);
    }
    if parts.is_empty() {
        return Ok(Network::new(d));
    }
    compose_sum(&parts, &vec![1.0; parts.len()], 0.0)
}

/// Closed triangles covering `{x : z(net(x)) = 1}` inside `[-B, B]²`.
pub fn positive_simplices(net: &Network, opts: &TransformOptions) -> Result<Vec<Simplex>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let regions = enumerate_regions_2d(net, opts.b, opts.region_samples, &mut rng)?;
    let mut out = Vec::new();
    for r in &regions {
        let cell = clip_halfplane(&r.polygon, r.a, r.b);
        out.extend(triangulate(&cell, [0.0, 0.0], 0.0).into_iter().map(|p| p.simplex));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Classified {
    /// Output is `H(x) - ½`, read through `z` like the source.
    pub network: Network,
    pub simplices: usize,
    pub mu: Option<f64>,
}

/// Rebuilds the label map `z(net(x))` as a step-activation network.
pub fn classify_transform(net: &Network, mode: Mode, delta: f64, opts: &TransformOptions) -> Result<Classified> {
    let d = net.input_dim();
    if d != 2 {
        return Err(Error::Unsupported(format!(
            "classification transform extracts planar regions only, got input_dim {d}"
        )));
    }
    let simplices = positive_simplices(net, opts)?;
    let (h, mu) = match mode {
        Mode::Wide => (build_step_wide(d, &simplices)?, None),
        Mode::Deep => {
            let mu = match opts.mu {
                Some(m) => m,
                None => step_mu(d, opts.b, simplices.len(), delta)?,
            };
            (build_step_deep(d, &simplices, mu)?, Some(mu))
        }
    };
    let mut network = h;
    let terms = network.output_terms().to_vec();
    let bias = network.output_bias();
    network.set_output(terms, bias - 0.5);
    Ok(Classified {
        network,
        simplices: simplices.len(),
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Hypercube {
        Hypercube::new(vec![a], vec![b]).unwrap()
    }

    #[test]
    fn step_wide_template() {
        let net = build_step_wide(2, &[Simplex::template(2)]).unwrap();
        assert_eq!(net.evaluate(&[0.2, 0.3]).unwrap(), 1.0);
        assert_eq!(net.evaluate(&[0.8, 0.8]).unwrap(), 0.0);
        assert_eq!(net.evaluate(&[0.0, 0.0]).unwrap(), 1.0);
        let m = net.structure_metrics();
        assert_eq!((m.width, m.depth), (3, 2));
        assert_eq!(build_step_wide(2, &[]).unwrap().evaluate(&[0.1, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn step_deep_template() {
        for d in 2..=4 {
            let net = build_step_deep(d, &[Simplex::template(d)], 1e4).unwrap();
            let m = net.structure_metrics();
            assert_eq!((m.width, m.depth), (d + 1, d + 1));
            let inside = vec![0.5 / d as f64; d];
            assert_eq!(net.evaluate(&inside).unwrap(), 1.0);
            let mut out = inside.clone();
            out[d - 1] = -0.1;
            assert_eq!(net.evaluate(&out).unwrap(), 0.0);
            assert_eq!(net.evaluate(&vec![0.9; d]).unwrap(), 0.0);
        }
    }

    #[test]
    fn trapezoid_values() {
        let deep = build_demorgan_deep(&[iv(0.2, 0.5)], 0.05).unwrap();
        assert!((deep.evaluate(&[0.3]).unwrap() - 1.0).abs() < 1e-12);
        assert!((deep.evaluate(&[0.175]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(deep.evaluate(&[0.6]).unwrap(), 0.0);
        let wide = build_demorgan_wide(&[iv(0.2, 0.5)], 0.05).unwrap();
        assert!((wide.evaluate(&[0.3]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(build_demorgan_deep(&[], 0.1).unwrap().evaluate(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn two_interval_union() {
        let rules = [iv(0.1, 0.2), iv(0.6, 0.7)];
        for net in [build_demorgan_deep(&rules, 0.05).unwrap(), build_demorgan_wide(&rules, 0.05).unwrap()] {
            assert!((net.evaluate(&[0.15]).unwrap() - 1.0).abs() < 1e-12);
            assert!((net.evaluate(&[0.65]).unwrap() - 1.0).abs() < 1e-12);
            assert!(net.evaluate(&[0.4]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn gaps_enforced() {
        assert!(build_demorgan_deep(&[iv(0.1, 0.2), iv(0.25, 0.3)], 0.05).is_err());
        assert!(build_demorgan_wide(&[iv(0.1, 0.3), iv(0.2, 0.4)], 0.01).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(ArchitecturePlan { wide: vec![vec![0]], deep: vec![vec![2]] }.validate(3).is_err());
        assert!(ArchitecturePlan { wide: vec![vec![0, 1]], deep: vec![vec![1, 2]] }.validate(3).is_err());
        assert!(ArchitecturePlan { wide: vec![vec![0, 2]], deep: vec![vec![1]] }.validate(3).is_ok());
    }

    #[test]
    fn rule_document() {
        let text = r#"{"D":2,"rules":[{"type":"hypercube","lo":[0,0],"hi":[1,1]},{"type":"simplex","vertices":[[2,0],[3,0],[2,1]]}]}"#;
        let rs = RuleSystem::from_json(text).unwrap();
        assert_eq!(rs.rules.len(), 2);
        assert_eq!(RuleSystem::from_json(&rs.to_json()).unwrap(), rs);
        let bad = r#"{"D":2,"rules":[{"type":"hypercube","lo":[0],"hi":[1]}]}"#;
        assert!(matches!(RuleSystem::from_json(bad), Err(Error::Parse { .. })));
    }
}
