//! Per-simplex wide (`N₁`) and deep (`N₂`) networks, parameter selection
//! and assembly into `H₁` / `H₂`.
//!
//! Every block is built in template coordinates `u = T(x)` of its simplex,
//! where the facet functionals are `ℓ_i = u_i` and `ℓ_{D+1} = 1 - Σu`, and
//! the map `T` is folded into the first-layer weights.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanshape::{c_bound, push_fan, Affine, MU_POW_CAP};
use crate::geometry::{cover_from_regions, enumerate_regions_2d, AffineMap, LinearPiece, SimplicialCover};
use crate::netcore::{compose_stack, compose_sum, Activation, Network, Src, StructureMetrics};
use crate::pwl1d;

/// Largest dimension the chained constructions accept.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Wide,
    Deep,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Mode::Wide),
            "deep" => Ok(Mode::Deep),
            _ => Err(Error::Input(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub mu: f64,
    pub eta: f64,
    pub nu: f64,
    pub tau: f64,
    pub delta: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl TransformParams {
    /// Explicit parameters, bypassing the δ rules.
    pub fn explicit(mu: f64, eta: f64, nu: f64, tau: f64, b: f64) -> Self {
        TransformParams {
            mu,
            eta,
            nu,
            tau,
            delta: f64::NAN,
            b,
        }
    }
}

/// The strict δ-bound that `η`, `ν`, `τ` and `1/μ` (or `1/(μ-1)` for
/// `D ≥ 3`) must stay below.
pub fn param_bound(mode: Mode, d: usize, b: f64, delta: f64) -> f64 {
    let s2 = 2f64.sqrt();
    match (mode, d) {
        (Mode::Wide, 2) => delta / (30.0 * s2 * b),
        (Mode::Deep, 2) => delta / (22.0 * s2 * b),
        (Mode::Wide, _) => {
            let k = (1u64 << d) as f64 - 1.0;
            delta / (k * c_bound(d, b) * (2 * d + 1) as f64)
        }
        (Mode::Deep, _) => delta / (c_bound(d, b) * (2 * d * d + 3 * d) as f64),
    }
}

fn params_from_bound(mode: Mode, d: usize, b: f64, delta: f64) -> TransformParams {
    let half = 0.5 * param_bound(mode, d, b, delta);
    let mu = if d == 2 { 1.0 / half } else { 1.0 + 1.0 / half };
    TransformParams {
        mu,
        eta: half,
        nu: half,
        tau: half,
        delta,
        b,
    }
}

/// Parameters at half of the δ-bound for the given mode and dimension.
///
/// `D = 1` needs no parameters (the univariate path is exact); the returned
/// values are then zero apart from `delta` and `B`.
pub fn choose_params(mode: Mode, d: usize, b: f64, delta: f64) -> Result<TransformParams> {
    if !(delta > 0.0) || !(b > 0.0) {
        return Err(Error::Input(format!("delta and B must be positive, got {delta}, {b}")));
    }
    if d == 0 || d > MAX_DIM {
        return Err(Error::Unsupported(format!("dimension {d} (supported: 1..={MAX_DIM})")));
    }
    if d == 1 {
        return Ok(TransformParams {
            mu: 0.0,
            eta: 0.0,
            nu: 0.0,
            tau: 0.0,
            delta,
            b,
        });
    }
    let p = params_from_bound(mode, d, b, delta);
    if !(p.mu <= MU_POW_CAP) {
        return Err(Error::Infeasible {
            reason: format!("mu = {:e} exceeds {MU_POW_CAP:e}", p.mu),
            min_delta: delta * p.mu / MU_POW_CAP,
        });
    }
    Ok(p)
}

/// Analytic mismatch budget of one block.
pub fn piece_budget(mode: Mode, d: usize, p: &TransformParams) -> f64 {
    let s2b = 2.0 * 2f64.sqrt() * p.b;
    match (mode, d) {
        (Mode::Wide, 2) => s2b * (6.0 * p.eta + 9.0 / p.mu),
        (Mode::Deep, 2) => s2b * (3.0 * p.nu + 2.0 * p.tau + 6.0 / p.mu),
        (Mode::Wide, _) => {
            let k = (1u64 << d) as f64 - 1.0;
            let df = d as f64;
            k * c_bound(d, p.b) * (df * p.eta + (df + 1.0) / (p.mu - 1.0))
        }
        (Mode::Deep, _) => {
            let c = c_bound(d, p.b);
            let df = d as f64;
            c * df * (df + 1.0) / (p.mu - 1.0) + c * (df + 1.0) * df * p.nu + c * df * p.tau
        }
    }
}

/// A dense solve together with its residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSolve {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub solution: Vec<f64>,
    pub residual: f64,
}

impl BasisSolve {
    pub fn solve(matrix: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<BasisSolve> {
        let n = rhs.len();
        let m = DMatrix::from_fn(n, n, |r, c| matrix[r][c]);
        let v = DVector::from_column_slice(&rhs);
        let x = m
            .clone()
            .lu()
            .solve(&v)
            .ok_or_else(|| Error::Internal("singular basis system".into()))?;
        let residual = (&m * &x - &v).norm();
        if !(residual <= 1e-8 * v.norm()) {
            return Err(Error::Internal(format!(
                "basis residual {residual:e} too large for |rhs| = {:e}",
                v.norm()
            )));
        }
        Ok(BasisSolve {
            matrix,
            rhs,
            solution: x.iter().copied().collect(),
            residual,
        })
    }
}

/// Coefficient vector `(p_1, …, p_D, r)`.
fn coeffs(h: &Affine) -> Vec<f64> {
    let mut v = h.p.clone();
    v.push(h.r);
    v
}

/// Square matrix whose columns are the coefficient vectors of `cols`.
fn columns(cols: &[Affine]) -> Vec<Vec<f64>> {
    let n = cols.len();
    (0..n).map(|r| cols.iter().map(|c| coeffs(c)[r]).collect()).collect()
}

fn unit(d: usize, k: usize) -> Affine {
    let mut p = vec![0.0; d];
    p[k] = 1.0;
    Affine::new(p, 0.0)
}

fn one(d: usize) -> Affine {
    Affine::new(vec![0.0; d], 1.0)
}

/// Facet functionals `ℓ_1..ℓ_{D+1}` in template coordinates.
pub fn template_facets(d: usize) -> Vec<Affine> {
    let mut f: Vec<Affine> = (0..d).map(|k| unit(d, k)).collect();
    f.push(Affine::new(vec![-1.0; d], 1.0));
    f
}

/// Pulls a template-coordinate functional back to the original frame.
fn pull_back(h: &Affine, t: &AffineMap) -> Affine {
    let d = h.p.len();
    let mut p = vec![0.0; d];
    let mut r = h.r;
    for i in 0..d {
        for (j, pj) in p.iter_mut().enumerate() {
            *pj += h.p[i] * t.a[(i, j)];
        }
        r += h.p[i] * t.c[i];
    }
    Affine::new(p, r)
}

/// A sign pattern over the `D+1` facets; `None` leaves a facet free.
pub type FanRegion = Vec<Option<bool>>;

/// Disjoint fan-shaped regions that tile the complement of the simplex.
///
/// `D = 2` uses `(∨,−,+)`, `(+,∨,−)`, `(−,+,∨)`. Larger `D` pairs sign
/// patterns along reflected Gray codes; when `D` is odd one region frees
/// two facets and overlaps the empty all-minus pattern (see README).
pub fn fan_regions(d: usize) -> Vec<FanRegion> {
    if d == 2 {
        return vec![
            vec![None, Some(false), Some(true)],
            vec![Some(true), None, Some(false)],
            vec![Some(false), Some(true), None],
        ];
    }
    let n = d + 1;
    let gray = |i: usize| i ^ (i >> 1);
    // bit set ⇒ facet negative
    let to_region = |code: usize, free: &[usize], bits: usize, base: usize| -> FanRegion {
        let mut r: FanRegion = (0..bits).map(|b| Some(code >> b & 1 == 0)).collect();
        for &f in free {
            r[f] = None;
        }
        let _ = base;
        r
    };
    let pair_path = |codes: &[usize], bits: usize, out: &mut Vec<FanRegion>, prefix: Option<bool>| {
        for w in codes.chunks(2) {
            let diff = (w[0] ^ w[1]).trailing_zeros() as usize;
            let mut r = to_region(w[0], &[diff], bits, 0);
            if let Some(s) = prefix {
                r.insert(0, Some(s));
            }
            out.push(r);
        }
    };
    let mut out = Vec::new();
    if n % 2 == 1 {
        let total = 1usize << n;
        let all = total - 1;
        let p = (1..total).find(|&i| gray(i) == all).expect("gray code covers all ones");
        let a: Vec<usize> = (1..p).map(gray).collect();
        let b: Vec<usize> = (p + 1..total).map(gray).collect();
        pair_path(&a, n, &mut out, None);
        pair_path(&b, n, &mut out, None);
    } else {
        let m = n - 1;
        let total = 1usize << m;
        let all = total - 1;
        let p = (1..total).find(|&i| gray(i) == all).expect("gray code covers all ones");
        // facet 0 positive: pair around the cycle, skipping all-plus and all-minus
        let a: Vec<usize> = (1..p).map(gray).collect();
        let b: Vec<usize> = (p + 1..total).map(gray).collect();
        pair_path(&a, m, &mut out, Some(true));
        pair_path(&b, m, &mut out, Some(true));
        // facet 0 free, all others negative
        let mut r: FanRegion = vec![Some(false); n];
        r[0] = None;
        out.push(r);
        // facet 0 negative: a square through all-minus, then pairs
        let k = (gray(p) ^ gray(p + 1)).trailing_zeros() as usize;
        let j = (gray(p - 1) ^ gray(p)).trailing_zeros() as usize;
        let mut sq = to_region(all, &[j, k], m, 0);
        sq.insert(0, Some(false));
        out.push(sq);
        let rest: Vec<usize> = (0..total - 4).map(|s| gray((p + 3 + s) % total)).collect();
        pair_path(&rest, m, &mut out, Some(false));
    }
    out
}

/// Lead and gates of the fan chain covering `region`, in template
/// coordinates. Regions that fix fewer than `D` facets repeat their last
/// gate so every chain has `D-1` gates.
pub fn region_fan(region: &FanRegion) -> (Affine, Vec<Affine>) {
    let d = region.len() - 1;
    let facets = template_facets(d);
    let lead_idx = region
        .iter()
        .position(|s| *s == Some(true))
        .or_else(|| region.iter().position(|s| *s == Some(false)))
        .expect("region fixes at least one facet");
    let lead = if region[lead_idx] == Some(true) {
        facets[lead_idx].clone()
    } else {
        facets[lead_idx].neg()
    };
    let mut gates: Vec<Affine> = region
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != lead_idx)
        .filter_map(|(i, s)| match s {
            Some(true) => Some(facets[i].neg()),
            Some(false) => Some(facets[i].clone()),
            None => None,
        })
        .collect();
    while gates.len() < d - 1 {
        let last = gates.last().cloned().unwrap_or_else(|| lead.neg());
        gates.push(last);
    }
    (lead, gates)
}

/// The `D+1` perturbed copies `g_1 = h, g_k = h - η e_k` of a lead `h`,
/// where `e_k` runs over the coordinates other than the lead's dominant
/// one, followed by the constant.
fn perturbed_basis(lead: &Affine, eta: f64) -> Vec<Affine> {
    let d = lead.p.len();
    let jstar = (0..d)
        .max_by(|&a, &b| lead.p[a].abs().total_cmp(&lead.p[b].abs()).then(b.cmp(&a)))
        .expect("d > 0");
    let mut out = vec![lead.clone()];
    for k in (0..d).filter(|&k| k != jstar) {
        out.push(lead.sub_scaled(&unit(d, k), eta));
    }
    out.push(lead.sub_scaled(&one(d), eta));
    out
}

fn payload_in_template(piece: &LinearPiece, inv: &AffineMap) -> Affine {
    // f(x) = a·x + b with x = V u + v₀
    let d = piece.dim();
    let mut p = vec![0.0; d];
    for (j, pj) in p.iter_mut().enumerate() {
        for i in 0..d {
            *pj += piece.a[i] * inv.a[(i, j)];
        }
    }
    let r = piece.b + (0..d).map(|i| piece.a[i] * inv.c[i]).sum::<f64>();
    Affine::new(p, r)
}

/// A block together with the basis solves used to build it.
#[derive(Debug, Clone)]
pub struct PieceNet {
    pub network: Network,
    pub solves: Vec<BasisSolve>,
    /// Estimated f64 rounding error of the block output on its simplex.
    pub noise: f64,
}

impl PieceNet {
    pub fn max_residual(&self) -> f64 {
        self.solves.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// Largest magnitude entering a template coordinate for `x ∈ [-B, B]^D`.
fn coord_scale(t: &AffineMap, b: f64) -> f64 {
    (0..t.dim())
        .map(|i| (0..t.dim()).map(|j| t.a[(i, j)].abs()).sum::<f64>() * b + t.c[i].abs())
        .fold(1.0, f64::max)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn check_piece(piece: &LinearPiece) -> Result<usize> {
    let d = piece.dim();
    if !(2..=MAX_DIM).contains(&d) {
        return Err(Error::Unsupported(format!("piece dimension {d} (supported: 2..={MAX_DIM})")));
    }
    Ok(d)
}

/// `N₁ = σ(f̃) - σ(-f̃) + Σ_regions Σ_k ω_k F^(k)`, with width
/// `D(D+1)(2^D-1)+2` and depth `D+1`.
pub fn build_wide_piece_nd(piece: &LinearPiece, params: &TransformParams) -> Result<PieceNet> {
    let d = check_piece(piece)?;
    let (t, inv) = piece.simplex.normalize()?;
    let f = payload_in_template(piece, &inv);
    let mut net = Network::new(d);
    let fx = pull_back(&f, &t);
    let pos = net.push(Activation::Relu, fx.r, Network::affine_in(&fx.p));
    let neg = net.push(Activation::Relu, -fx.r, Network::affine_in(&fx.neg().p));
    let mut terms = vec![(pos, 1.0), (neg, -1.0)];
    let mut solves = Vec::new();
    let rhs: Vec<f64> = coeffs(&f).into_iter().map(|v| -v).collect();
    let mut weight = 2.0;
    for region in fan_regions(d) {
        let (lead, gates) = region_fan(&region);
        let basis = perturbed_basis(&lead, params.eta);
        let sol = BasisSolve::solve(columns(&basis), rhs.clone())?;
        let gx: Vec<Affine> = gates.iter().map(|g| pull_back(g, &t)).collect();
        for (g, &w) in basis.iter().zip(&sol.solution) {
            let id = push_fan(&mut net, &pull_back(g, &t), &gx, params.mu);
            terms.push((id, w));
        }
        weight += l1(&sol.solution);
        solves.push(sol);
    }
    net.set_output(terms, 0.0);
    let noise = 4.0 * (d + 2) as f64 * f64::EPSILON * weight * coord_scale(&t, params.b) * (1.0 + l1(&coeffs(&f)));
    Ok(PieceNet { network: net, solves, noise })
}

/// `N₂ = Σ_i ρ_i N₂^i`, each `N₂^i = σ(Σ_k γ_k F^(k))` reproducing a
/// slightly tilted copy of `ℓ_{D+1}` on the simplex; width `D²(D+1)`,
/// depth `D+2`.
///
/// The constant `γ_{D+1}` of each system is carried by the lead of the
/// first fan, `u_1 + γ_{D+1}/γ_1`, so the block vanishes off the simplex.
pub fn build_deep_piece_nd(piece: &LinearPiece, params: &TransformParams) -> Result<PieceNet> {
    let d = check_piece(piece)?;
    let (t, inv) = piece.simplex.normalize()?;
    let f = payload_in_template(piece, &inv);
    let facets = template_facets(d);
    let last = &facets[d];
    // targets: ℓ_{D+1}, then ℓ_{D+1} - τ u_l
    let mut targets = vec![last.clone()];
    for l in 0..d {
        targets.push(last.sub_scaled(&unit(d, l), params.tau));
    }
    let mut leads = vec![unit(d, 0)];
    for k in 1..d {
        leads.push(unit(d, 0).sub_scaled(&unit(d, k), params.nu));
    }
    let gates: Vec<Affine> = (1..d).map(|j| unit(d, j).neg()).collect();
    let gx: Vec<Affine> = gates.iter().map(|g| pull_back(g, &t)).collect();
    let mut gamma_cols = leads.clone();
    gamma_cols.push(one(d));
    let gamma_matrix = columns(&gamma_cols);

    let mut net = Network::new(d);
    let mut solves = Vec::new();
    let mut tops = Vec::with_capacity(d + 1);
    let mut gamma_l1: f64 = 0.0;
    for target in &targets {
        let g = BasisSolve::solve(gamma_matrix.clone(), coeffs(target))?;
        let (gam, c) = (&g.solution[..d], g.solution[d]);
        let mut src = Vec::with_capacity(d);
        for (k, lead) in leads.iter().enumerate() {
            let lead = if k == 0 {
                Affine::new(lead.p.clone(), lead.r + c / gam[0])
            } else {
                lead.clone()
            };
            let id = push_fan(&mut net, &pull_back(&lead, &t), &gx, params.mu);
            src.push((Src::Neuron(id), gam[k]));
        }
        tops.push(net.push(Activation::Relu, 0.0, src));
        gamma_l1 = gamma_l1.max(l1(&g.solution));
        solves.push(g);
    }
    let rho = BasisSolve::solve(columns(&targets), coeffs(&f))?;
    net.set_output(tops.iter().copied().zip(rho.solution.iter().copied()).collect(), 0.0);
    let noise = 4.0 * (d + 2) as f64 * f64::EPSILON * l1(&rho.solution) * gamma_l1 * coord_scale(&t, params.b);
    solves.push(rho);
    Ok(PieceNet { network: net, solves, noise })
}

fn require_2d(piece: &LinearPiece) -> Result<()> {
    if piece.dim() != 2 {
        return Err(Error::Input(format!("planar builder got a {}-dimensional piece", piece.dim())));
    }
    Ok(())
}

/// Planar `N₁`: width 20, depth 3.
pub fn build_wide_piece_2d(piece: &LinearPiece, params: &TransformParams) -> Result<PieceNet> {
    require_2d(piece)?;
    build_wide_piece_nd(piece, params)
}

/// Planar `N₂`: width 12, depth 4.
pub fn build_deep_piece_2d(piece: &LinearPiece, params: &TransformParams) -> Result<PieceNet> {
    require_2d(piece)?;
    build_deep_piece_nd(piece, params)
}

pub fn build_piece(mode: Mode, piece: &LinearPiece, params: &TransformParams) -> Result<PieceNet> {
    match mode {
        Mode::Wide => build_wide_piece_nd(piece, params),
        Mode::Deep => build_deep_piece_nd(piece, params),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub mode: Mode,
    pub params: TransformParams,
    pub metrics: StructureMetrics,
    pub piece_residuals: Vec<f64>,
    pub budget: f64,
    /// Largest per-block rounding estimate; value comparisons need a
    /// tolerance above it.
    pub noise_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_max_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TransformOptions {
    #[doc = "Half-width of the domain box."]
    pub b: f64,
    pub mu: Option<f64>,
    pub region_samples: usize,
    pub seed: u64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions {
            b: 1.0,
            mu: None,
            region_samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transformed {
    pub network: Network,
    pub report: TransformReport,
}

fn map_pieces<T: Send, F>(pieces: &[LinearPiece], f: F) -> Vec<T>
where
    F: Fn(&LinearPiece) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pieces.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pieces.iter().map(f).collect()
    }
}

/// Rebuilds the function carried by `cover` as a wide sum or a deep stack
/// of per-simplex blocks, allotting `delta / M` to each block.
pub fn transform_cover(cover: &SimplicialCover, mode: Mode, delta: f64, opts: &TransformOptions) -> Result<Transformed> {
    let d = cover.d;
    let m = cover.m();
    if m == 0 {
        let network = Network::constant(d.max(1), 0.0);
        let metrics = network.structure_metrics();
        return Ok(Transformed {
            network,
            report: TransformReport {
                m,
                mode,
                params: TransformParams::explicit(0.0, 0.0, 0.0, 0.0, opts.b),
                metrics,
                piece_residuals: vec![],
                budget: 0.0,
                noise_floor: 0.0,
                exact_max_error: None,
            },
        });
    }
    let share = delta / m as f64;
    let params = match opts.mu {
        Some(mu) => {
            let mut p = params_from_bound(mode, d, opts.b, share);
            p.mu = mu;
            if piece_budget(mode, d, &p) * m as f64 >= delta {
                log::warn!("mu = {mu} puts the analytic budget above delta = {delta}");
            }
            p
        }
        None => choose_params(mode, d, opts.b, share)?,
    };
    let built: Vec<Result<PieceNet>> = map_pieces(&cover.pieces, |p| build_piece(mode, p, &params));
    let mut nets = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    let mut noise: f64 = 0.0;
    for b in built {
        let b = b?;
        residuals.push(b.max_residual());
        noise = noise.max(b.noise);
        nets.push(b.network);
    }
    let network = match mode {
        Mode::Wide => compose_sum(&nets, &vec![1.0; m], 0.0)?,
        Mode::Deep => compose_stack(&nets)?,
    };
    let metrics = network.structure_metrics();
    Ok(Transformed {
        network,
        report: TransformReport {
            m,
            mode,
            params,
            metrics,
            piece_residuals: residuals,
            noise_floor: noise,
            budget: piece_budget(mode, d, &params) * m as f64,
            exact_max_error: None,
        },
    })
}

/// Planar simplicial cover of a network on `[-B, B]²`.
pub fn cover_of(net: &Network, opts: &TransformOptions) -> Result<SimplicialCover> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let regions = enumerate_regions_2d(net, opts.b, opts.region_samples, &mut rng)?;
    Ok(cover_from_regions(&regions))
}

/// Wide or deep rewrite of `net` on `[-B, B]^D`.
///
/// Univariate networks are rebuilt exactly; planar networks go through
/// region enumeration and triangulation. Higher dimensions need an explicit
/// cover (see [`transform_cover`]).
pub fn transform(net: &Network, mode: Mode, delta: f64, opts: &TransformOptions) -> Result<Transformed> {
    match net.input_dim() {
        1 => {
            let f = pwl1d::extract_pwl(net, opts.b)?;
            transform_pwl(&f, mode, Some(net))
        }
        2 => {
            let cover = cover_of(net, opts)?;
            log::info!("cover has {} simplices", cover.m());
            transform_cover(&cover, mode, delta, opts)
        }
        d => Err(Error::Unsupported(format!(
            "input_dim {d} needs a simplicial cover document"
        ))),
    }
}

/// Exact univariate rewrite; `source` (if given) is compared on a grid and
/// at every breakpoint.
pub fn transform_pwl(f: &pwl1d::PwlFunction1D, mode: Mode, source: Option<&Network>) -> Result<Transformed> {
    let network = match mode {
        Mode::Wide => pwl1d::build_wide(f)?,
        Mode::Deep => pwl1d::build_deep(f)?,
    };
    let err = match source {
        Some(src) => crate::verify::exact_compare_1d(src, &network, f.b, 10_000)?,
        None => {
            let mut e: f64 = 0.0;
            for i in 0..=10_000 {
                let x = -f.b + 2.0 * f.b * i as f64 / 10_000.0;
                e = e.max((network.evaluate(&[x])? - f.eval(x)).abs());
            }
            for &x in &f.breakpoints {
                e = e.max((network.evaluate(&[x])? - f.eval(x)).abs());
            }
            e
        }
    };
    let metrics = network.structure_metrics();
    Ok(Transformed {
        network,
        report: TransformReport {
            m: f.pieces(),
            mode,
            params: TransformParams {
                delta: 0.0,
                ..TransformParams::explicit(0.0, 0.0, 0.0, 0.0, f.b)
            },
            metrics,
            piece_residuals: vec![],
            budget: 0.0,
            noise_floor: 0.0,
            exact_max_error: Some(err),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Simplex;

    fn template_piece(a: Vec<f64>, b: f64) -> LinearPiece {
        let d = a.len();
        LinearPiece::new(Simplex::template(d), a, b).unwrap()
    }

    #[test]
    fn half_bound_rule() {
        let delta = 30.0 * 2f64.sqrt() * 0.002;
        let p = choose_params(Mode::Wide, 2, 1.0, delta).unwrap();
        assert!((p.eta - 0.001).abs() < 1e-15);
        assert!((1.0 / p.mu - 0.001).abs() < 1e-15);
        let q = choose_params(Mode::Deep, 2, 1.0, 1.0).unwrap();
        let bound = 1.0 / (22.0 * 2f64.sqrt());
        assert!((q.nu - bound / 2.0).abs() < 1e-15);
        assert!(piece_budget(Mode::Deep, 2, &q) < 1.0);
        assert!(matches!(choose_params(Mode::Wide, 2, 1.0, 1e-30), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn omega_example() {
        // a = (1, 1), b = 1, η = 0.1 on (+,∨,−)
        let (lead, _) = region_fan(&vec![Some(true), None, Some(false)]);
        let basis = perturbed_basis(&lead, 0.1);
        let s = BasisSolve::solve(columns(&basis), vec![-1.0, -1.0, -1.0]).unwrap();
        assert_eq!(
            s.matrix,
            vec![vec![1.0, 1.0, 1.0], vec![0.0, -0.1, 0.0], vec![0.0, 0.0, -0.1]]
        );
        let want = [-21.0, 10.0, 10.0];
        for (x, w) in s.solution.iter().zip(want) {
            assert!((x - w).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_example() {
        // F = x₁, F' = x₁ - 0.1 x₂, constant; target -x₁ - x₂ + 1
        let mut cols = vec![unit(2, 0), unit(2, 0).sub_scaled(&unit(2, 1), 0.1)];
        cols.push(one(2));
        let s = BasisSolve::solve(columns(&cols), vec![-1.0, -1.0, 1.0]).unwrap();
        let want = [-11.0, 10.0, 1.0];
        for (x, w) in s.solution.iter().zip(want) {
            assert!((x - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_system_residual() {
        let tau = 0.1;
        let m = vec![
            vec![-1.0, -1.0 - tau, -1.0],
            vec![-1.0, -1.0, -1.0 - tau],
            vec![1.0, 1.0, 1.0],
        ];
        let s = BasisSolve::solve(m.clone(), vec![0.0, 0.0, 1.0]).unwrap();
        for r in 0..3 {
            let lhs: f64 = (0..3).map(|c| m[r][c] * s.solution[c]).sum();
            assert!((lhs - [0.0, 0.0, 1.0][r]).abs() < 1e-10);
        }
    }

    fn covers_exactly_once(d: usize) {
        let regions = fan_regions(d);
        assert_eq!(regions.len(), (1 << d) - 1);
        let n = d + 1;
        for code in 0..(1usize << n) {
            let signs: Vec<bool> = (0..n).map(|b| code >> b & 1 == 0).collect();
            let hits = regions
                .iter()
                .filter(|r| r.iter().zip(&signs).all(|(s, x)| s.is_none_or(|v| v == *x)))
                .count();
            let all_plus = code == 0;
            let all_minus = code == (1 << n) - 1;
            if all_plus {
                assert_eq!(hits, 0, "D={d} covers the simplex");
            } else if !all_minus {
                assert_eq!(hits, 1, "D={d} pattern {code:b}");
            }
        }
        for r in &regions {
            let fixed = r.iter().filter(|s| s.is_some()).count();
            assert!(fixed == d || fixed == d - 1);
        }
    }

    #[test]
    fn fan_regions_partition() {
        for d in 2..=8 {
            covers_exactly_once(d);
        }
    }

    #[test]
    fn structural_goldens() {
        let p = TransformParams::explicit(1e4, 1e-4, 1e-4, 1e-4, 1.0);
        let cases = [(2, Mode::Wide, 20, 3), (2, Mode::Deep, 12, 4), (3, Mode::Wide, 86, 4), (3, Mode::Deep, 36, 5)];
        for (d, mode, w, dep) in cases {
            let piece = template_piece(vec![1.0; d], 0.5);
            let m = build_piece(mode, &piece, &p).unwrap().network.structure_metrics();
            assert_eq!((m.width, m.depth), (w, dep), "D={d} {mode:?}");
        }
    }

    #[test]
    fn template_piece_values() {
        let p = TransformParams::explicit(1e4, 1e-4, 1e-4, 1e-4, 1.0);
        let piece = template_piece(vec![1.0, 0.0], 0.0);
        let w = build_wide_piece_2d(&piece, &p).unwrap().network;
        assert!((w.evaluate(&[0.3, 0.3]).unwrap() - 0.3).abs() < 1e-9);
        assert!(w.evaluate(&[-0.5, 0.5]).unwrap().abs() < 1e-9);
        let dn = build_deep_piece_2d(&piece, &p).unwrap().network;
        assert!((dn.evaluate(&[0.3, 0.3]).unwrap() - 0.3).abs() < 1e-6);
        assert!(dn.evaluate(&[0.8, 0.8]).unwrap().abs() < 1e-6);
        assert!(dn.evaluate(&[-0.5, 0.5]).unwrap().abs() < 1e-6);
        assert!(dn.evaluate(&[0.5, -0.5]).unwrap().abs() < 1e-6);
    }

    #[test]
    fn zero_payload_is_zero() {
        let p = TransformParams::explicit(1e4, 1e-4, 1e-4, 1e-4, 1.0);
        let piece = template_piece(vec![0.0, 0.0], 0.0);
        let w = build_wide_piece_2d(&piece, &p).unwrap().network;
        for x in [[0.2, 0.2], [-3.0, 1.0], [0.0, 0.0], [5.0, -5.0]] {
            assert_eq!(w.evaluate(&x).unwrap(), 0.0);
        }
    }
}
