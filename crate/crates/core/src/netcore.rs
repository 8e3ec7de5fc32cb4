//! Network graph, forward evaluation, route-based metrics and the JSON
//! document format.
//!
//! A [`Network`] is a DAG of scalar units listed in topological order with
//! a single linear readout. Units may read any input coordinate or any
//! earlier unit, so shortcut edges are first class.
//!
//! # Width and depth
//!
//! A route is a path from an input coordinate to a unit; its length is the
//! number of affine operations along it. A unit belongs to every layer `l`
//! for which it has a route of length `l`. Width is the largest layer,
//! depth is the longest route to the readout, where the readout is one more
//! affine operation unless the output is exactly one unit (weight 1,
//! bias 0).
//!
//! Stacked networks carry `x` forward without spending units on it: a
//! unit's `lag` says that input coordinates reach it through a carried route
//! of that many layers. Lag adds to route length and never to width.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Step,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => relu(t),
            Activation::Step => step(t),
            Activation::Identity => t,
        }
    }
}

/// `max(0, t)`.
#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// Binary step with `z(0) = 1`.
#[inline]
pub fn step(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Src {
    Input(usize),
    Neuron(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    pub incoming: Vec<(Src, f64)>,
    pub bias: f64,
    pub activation: Activation,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    neurons: Vec<Neuron>,
    out_terms: Vec<(usize, f64)>,
    out_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub width: usize,
    pub depth: usize,
    pub neuron_count: usize,
    pub parameter_count: usize,
}

impl Network {
    pub fn new(input_dim: usize) -> Self {
        assert!(input_dim > 0, "input_dim must be positive");
        Network {
            input_dim,
            neurons: Vec::new(),
            out_terms: Vec::new(),
            out_bias: 0.0,
        }
    }

    /// A network that outputs `c` everywhere.
    pub fn constant(input_dim: usize, c: f64) -> Self {
        let mut net = Network::new(input_dim);
        net.out_bias = c;
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn output_terms(&self) -> &[(usize, f64)] {
        &self.out_terms
    }

    pub fn output_bias(&self) -> f64 {
        self.out_bias
    }

    /// Appends a unit and returns its id.
    ///
    /// Panics if a source refers to a unit that does not exist yet or to an
    /// input coordinate out of range; builders in this crate never do that.
    pub fn push(&mut self, activation: Activation, bias: f64, incoming: Vec<(Src, f64)>) -> usize {
        self.push_lagged(activation, bias, incoming, 0)
    }

    pub fn push_lagged(
        &mut self,
        activation: Activation,
        bias: f64,
        incoming: Vec<(Src, f64)>,
        lag: usize,
    ) -> usize {
        let id = self.neurons.len();
        for (s, _) in &incoming {
            match *s {
                Src::Input(k) => assert!(k < self.input_dim, "input x{k} out of range"),
                Src::Neuron(j) => assert!(j < id, "unit {j} does not precede unit {id}"),
            }
        }
        self.neurons.push(Neuron {
            incoming,
            bias,
            activation,
            lag,
        });
        id
    }

    /// Affine unit input `w·x + c`, as a list of sources.
    pub fn affine_in(w: &[f64]) -> Vec<(Src, f64)> {
        w.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (Src::Input(k), *v))
            .collect()
    }

    pub fn set_output(&mut self, terms: Vec<(usize, f64)>, bias: f64) {
        for (id, _) in &terms {
            assert!(*id < self.neurons.len(), "output refers to unknown unit {id}");
        }
        self.out_terms = terms;
        self.out_bias = bias;
    }

    /// Forward value at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::Input(format!(
                "expected {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut buf = Vec::with_capacity(self.neurons.len());
        Ok(self.eval_with(x, &mut buf))
    }

    /// Forward value using `buf` as scratch; `x` must have `input_dim`
    /// entries.
    pub fn eval_with(&self, x: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        for n in &self.neurons {
            let mut t = n.bias;
            for &(s, w) in &n.incoming {
                t += w * match s {
                    Src::Input(k) => x[k],
                    Src::Neuron(j) => buf[j],
                };
            }
            buf.push(n.activation.apply(t));
        }
        let mut y = self.out_bias;
        for &(id, w) in &self.out_terms {
            y += w * buf[id];
        }
        y
    }

    /// Preactivations of every unit at `x`.
    pub fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        let mut post: Vec<f64> = Vec::with_capacity(self.neurons.len());
        let mut pre = Vec::with_capacity(self.neurons.len());
        for n in &self.neurons {
            let mut t = n.bias;
            for &(s, w) in &n.incoming {
                t += w * match s {
                    Src::Input(k) => x[k],
                    Src::Neuron(j) => post[j],
                };
            }
            pre.push(t);
            post.push(n.activation.apply(t));
        }
        pre
    }

    /// Whether the output is exactly one unit with weight 1 and bias 0.
    pub fn is_bare_output(&self) -> bool {
        self.out_bias == 0.0 && self.out_terms.len() == 1 && self.out_terms[0].1 == 1.0
    }

    /// Sorted, deduplicated route lengths of every unit.
    pub fn route_lengths(&self) -> Vec<Vec<usize>> {
        let mut lens: Vec<Vec<usize>> = Vec::with_capacity(self.neurons.len());
        for n in &self.neurons {
            let mut l = Vec::new();
            for &(s, _) in &n.incoming {
                match s {
                    Src::Input(_) => l.push(n.lag + 1),
                    Src::Neuron(j) => l.extend(lens[j].iter().map(|v| v + 1)),
                }
            }
            l.sort_unstable();
            l.dedup();
            lens.push(l);
        }
        lens
    }

    pub fn structure_metrics(&self) -> StructureMetrics {
        let lens = self.route_lengths();
        let mut layer: HashMap<usize, usize> = HashMap::new();
        for l in &lens {
            for &v in l {
                *layer.entry(v).or_default() += 1;
            }
        }
        let width = layer.values().copied().max().unwrap_or(0).max(1);
        let top = self
            .out_terms
            .iter()
            .filter_map(|(id, _)| lens[*id].last().copied())
            .max()
            .unwrap_or(0);
        let depth = if self.is_bare_output() { top } else { top + 1 }.max(1);
        let parameter_count = self
            .neurons
            .iter()
            .map(|n| n.incoming.len() + 1)
            .sum::<usize>()
            + self.out_terms.len()
            + 1;
        StructureMetrics {
            width,
            depth,
            neuron_count: self.neurons.len(),
            parameter_count,
        }
    }

    /// Copies every unit of `other` into `self`, returning the id offset.
    fn absorb(&mut self, other: &Network, extra_lag: usize) -> usize {
        let off = self.neurons.len();
        for n in &other.neurons {
            let incoming = n
                .incoming
                .iter()
                .map(|&(s, w)| match s {
                    Src::Input(k) => (Src::Input(k), w),
                    Src::Neuron(j) => (Src::Neuron(j + off), w),
                })
                .collect();
            self.neurons.push(Neuron {
                incoming,
                bias: n.bias,
                activation: n.activation,
                lag: n.lag + extra_lag,
            });
        }
        off
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkDoc::from(self)).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let doc: NetworkDoc = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        doc.into_network()
    }
}

/// `bias + Σ wᵢ·netᵢ(x)`, built by placing the networks side by side.
pub fn compose_sum(nets: &[Network], weights: &[f64], bias: f64) -> Result<Network> {
    if nets.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} networks but {} weights",
            nets.len(),
            weights.len()
        )));
    }
    let Some(first) = nets.first() else {
        return Err(Error::Input("compose_sum needs at least one network".into()));
    };
    let d = first.input_dim;
    let mut out = Network::new(d);
    let mut terms = Vec::new();
    let mut b = bias;
    for (net, &w) in nets.iter().zip(weights) {
        if net.input_dim != d {
            return Err(Error::Input(format!(
                "input_dim {} does not match {}",
                net.input_dim, d
            )));
        }
        let off = out.absorb(net, 0);
        terms.extend(net.out_terms.iter().map(|&(id, v)| (id + off, v * w)));
        b += w * net.out_bias;
    }
    out.out_terms = terms;
    out.out_bias = b;
    Ok(out)
}

/// Chains blocks so that block `m` starts where block `m-1` ends.
///
/// The input is carried to every block by lagged shortcut edges and the
/// running sum is read out directly, so the result computes
/// `Σ_m block_m(x)` with width equal to the widest block and depth equal
/// to the sum of block depths.
pub fn compose_stack(blocks: &[Network]) -> Result<Network> {
    let Some(first) = blocks.first() else {
        return Err(Error::Input("compose_stack needs at least one block".into()));
    };
    let d = first.input_dim;
    let mut out = Network::new(d);
    let mut terms = Vec::new();
    let mut b = 0.0;
    let mut offset = 0;
    for block in blocks {
        if block.input_dim != d {
            return Err(Error::Input(format!(
                "input_dim {} does not match {}",
                block.input_dim, d
            )));
        }
        let off = out.absorb(block, offset);
        terms.extend(block.out_terms.iter().map(|&(id, v)| (id + off, v)));
        b += block.out_bias;
        let lens = block.route_lengths();
        let top = lens.iter().filter_map(|l| l.last().copied()).max().unwrap_or(0);
        offset += top + 1;
    }
    out.out_terms = terms;
    out.out_bias = b;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SrcDoc {
    Input(String),
    Neuron(u64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NeuronDoc {
    id: u64,
    activation: Activation,
    bias: f64,
    #[serde(rename = "in")]
    inputs: Vec<(SrcDoc, f64)>,
    #[serde(default, skip_serializing_if = "is_zero")]
    lag: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputDoc {
    bias: f64,
    terms: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    version: u32,
    input_dim: usize,
    neurons: Vec<NeuronDoc>,
    output: OutputDoc,
}

impl From<&Network> for NetworkDoc {
    fn from(net: &Network) -> Self {
        let neurons = net
            .neurons
            .iter()
            .enumerate()
            .map(|(i, n)| NeuronDoc {
                id: i as u64,
                activation: n.activation,
                bias: n.bias,
                inputs: n
                    .incoming
                    .iter()
                    .map(|&(s, w)| {
                        let s = match s {
                            Src::Input(k) => SrcDoc::Input(format!("x{k}")),
                            Src::Neuron(j) => SrcDoc::Neuron(j as u64),
                        };
                        (s, w)
                    })
                    .collect(),
                lag: n.lag,
            })
            .collect();
        NetworkDoc {
            version: 1,
            input_dim: net.input_dim,
            neurons,
            output: OutputDoc {
                bias: net.out_bias,
                terms: net.out_terms.iter().map(|&(id, w)| (id as u64, w)).collect(),
            },
        }
    }
}

fn finite(v: f64, loc: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(loc(), "non-finite value"))
    }
}

impl NetworkDoc {
    fn into_network(self) -> Result<Network> {
        if self.version != 1 {
            return Err(Error::parse("version", format!("unsupported version {}", self.version)));
        }
        if self.input_dim == 0 {
            return Err(Error::parse("input_dim", "must be positive"));
        }
        let mut index: HashMap<u64, usize> = HashMap::new();
        let ids: HashMap<u64, usize> = self
            .neurons
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect();
        let mut net = Network::new(self.input_dim);
        for (i, n) in self.neurons.into_iter().enumerate() {
            if index.contains_key(&n.id) {
                return Err(Error::parse(format!("neurons[{i}].id"), format!("duplicate id {}", n.id)));
            }
            let bias = finite(n.bias, || format!("neurons[{i}].bias"))?;
            let mut incoming = Vec::with_capacity(n.inputs.len());
            for (k, (s, w)) in n.inputs.into_iter().enumerate() {
                let loc = || format!("neurons[{i}].in[{k}]");
                let w = finite(w, loc)?;
                let src = match s {
                    SrcDoc::Input(name) => {
                        let k_in = name
                            .strip_prefix('x')
                            .and_then(|r| r.parse::<usize>().ok())
                            .ok_or_else(|| Error::parse(loc(), format!("bad source {name:?}")))?;
                        if k_in >= self.input_dim {
                            return Err(Error::parse(loc(), format!("input {name} out of range")));
                        }
                        Src::Input(k_in)
                    }
                    SrcDoc::Neuron(id) => match index.get(&id) {
                        Some(&j) => Src::Neuron(j),
                        None if id == n.id || ids.contains_key(&id) => {
                            return Err(Error::parse(
                                loc(),
                                format!("unit {id} does not precede unit {}: cycle or out-of-order listing", n.id),
                            ))
                        }
                        None => return Err(Error::parse(loc(), format!("unknown unit {id}"))),
                    },
                };
                incoming.push((src, w));
            }
            if incoming.is_empty() {
                return Err(Error::parse(format!("neurons[{i}].in"), "unit has no inputs"));
            }
            index.insert(n.id, net.neurons.len());
            net.push_lagged(n.activation, bias, incoming, n.lag);
        }
        let out_bias = finite(self.output.bias, || "output.bias".into())?;
        let mut terms = Vec::with_capacity(self.output.terms.len());
        for (k, (id, w)) in self.output.terms.into_iter().enumerate() {
            let loc = || format!("output.terms[{k}]");
            let w = finite(w, loc)?;
            let j = *index
                .get(&id)
                .ok_or_else(|| Error::parse(loc(), format!("unknown unit {id}")))?;
            terms.push((j, w));
        }
        net.set_output(terms, out_bias);
        Ok(net)
    }
}
