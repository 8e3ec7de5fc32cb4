//! Simplices, affine normalization, linear-region enumeration in the plane
//! and centroid triangulation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Activation, Network, Src};

/// Smallest admissible `|det V|`.
pub const DET_EPS: f64 = 1e-10;

/// Cells smaller than this fraction of the box are dropped.
pub const MIN_CELL_FRACTION: f64 = 1e-8;

/// Affine map `p ↦ A p + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        AffineMap {
            a: DMatrix::identity(d, d),
            c: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let v = &self.a * DVector::from_column_slice(p) + &self.c;
        v.iter().copied().collect()
    }

    /// Row `i` as an affine functional `(w, r)` with `w·p + r`.
    pub fn row(&self, i: usize) -> (Vec<f64>, f64) {
        (self.a.row(i).iter().copied().collect(), self.c[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    pub vertices: Vec<Vec<f64>>,
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let s = Simplex { vertices };
        s.normalize()?;
        Ok(s)
    }

    /// The standard simplex `conv{0, e_1, …, e_D}`.
    pub fn template(d: usize) -> Self {
        let mut vertices = vec![vec![0.0; d]];
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            vertices.push(e);
        }
        Simplex { vertices }
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    fn edge_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d == 0 || self.vertices.iter().any(|v| v.len() != d) {
            return Err(Error::Input(format!(
                "a simplex in R^{d} needs {} vertices of length {d}",
                d + 1
            )));
        }
        let v0 = &self.vertices[0];
        Ok(DMatrix::from_fn(d, d, |r, c| self.vertices[c + 1][r] - v0[r]))
    }

    /// `T(p) = V⁻¹(p - v₀)` and its inverse `p = V u + v₀`.
    pub fn normalize(&self) -> Result<(AffineMap, AffineMap)> {
        let v = self.edge_matrix()?;
        let det = v.determinant();
        if !(det.abs() > DET_EPS) {
            return Err(Error::DegenerateSimplex { det });
        }
        let vinv = v.clone().try_inverse().ok_or(Error::DegenerateSimplex { det })?;
        let v0 = DVector::from_column_slice(&self.vertices[0]);
        let c = -(&vinv * &v0);
        Ok((AffineMap { a: vinv, c }, AffineMap { a: v, c: v0 }))
    }

    /// D-volume.
    pub fn volume(&self) -> f64 {
        let d = self.dim();
        let det = self.edge_matrix().map(|m| m.determinant()).unwrap_or(0.0);
        det.abs() / (1..=d).map(|k| k as f64).product::<f64>()
    }

    /// The `D+1` barycentric functionals `ℓ_1..ℓ_{D+1}` as `(w, r)` in the
    /// original coordinates; `ℓ_i(v_i) = 1` for `i ≤ D`, `ℓ_{D+1}(v₀) = 1`.
    pub fn facet_forms(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        let (t, _) = self.normalize()?;
        let d = self.dim();
        let mut out: Vec<(Vec<f64>, f64)> = (0..d).map(|i| t.row(i)).collect();
        let mut w = vec![0.0; d];
        let mut r = 1.0;
        for (wi, ri) in &out {
            for k in 0..d {
                w[k] -= wi[k];
            }
            r -= ri;
        }
        out.push((w, r));
        Ok(out)
    }

    /// Closed membership with tolerance `tol` on the barycentric forms.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        match self.facet_forms() {
            Ok(forms) => forms.iter().all(|(w, r)| dot(w, p) + r >= -tol),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPiece {
    pub simplex: Simplex,
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearPiece {
    pub fn new(simplex: Simplex, a: Vec<f64>, b: f64) -> Result<Self> {
        if a.len() != simplex.dim() || !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("piece payload must be finite with one slope per axis".into()));
        }
        Ok(LinearPiece { simplex, a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        dot(&self.a, p) + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PieceDoc {
    vertices: Vec<Vec<f64>>,
    a: Vec<f64>,
    b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoverDoc {
    #[serde(rename = "D")]
    d: usize,
    pieces: Vec<PieceDoc>,
}

/// A set of simplices with interior-disjoint supports, each carrying the
/// affine restriction of a source function.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialCover {
    pub d: usize,
    pub pieces: Vec<LinearPiece>,
}

impl SimplicialCover {
    pub fn m(&self) -> usize {
        self.pieces.len()
    }

    pub fn to_json(&self) -> String {
        let doc = CoverDoc {
            d: self.d,
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceDoc {
                    vertices: p.simplex.vertices.clone(),
                    a: p.a.clone(),
                    b: p.b,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("cover serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CoverDoc = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        let mut pieces = Vec::with_capacity(doc.pieces.len());
        for (i, p) in doc.pieces.into_iter().enumerate() {
            let s = Simplex::new(p.vertices).map_err(|e| Error::parse(format!("pieces[{i}].vertices"), e.to_string()))?;
            if s.dim() != doc.d {
                return Err(Error::parse(format!("pieces[{i}]"), format!("dimension {} != D {}", s.dim(), doc.d)));
            }
            pieces.push(LinearPiece::new(s, p.a, p.b).map_err(|e| Error::parse(format!("pieces[{i}]"), e.to_string()))?);
        }
        Ok(SimplicialCover { d: doc.d, pieces })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypercube {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Hypercube {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Input("hypercube needs lo < hi componentwise".into()));
        }
        Ok(Hypercube { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Gap along the axis that separates the two boxes best; negative when
    /// they overlap.
    pub fn gap(&self, other: &Hypercube) -> f64 {
        (0..self.dim())
            .map(|k| (other.lo[k] - self.hi[k]).max(self.lo[k] - other.hi[k]))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convex polygon as a counter-clockwise vertex list.
pub type Polygon = Vec<[f64; 2]>;

/// Shoelace area (positive for counter-clockwise order).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

/// Keeps the part of `poly` where `w·p + r ≥ 0`.
pub fn clip_halfplane(poly: &[[f64; 2]], w: [f64; 2], r: f64) -> Polygon {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    if n == 0 {
        return out;
    }
    let val = |p: [f64; 2]| w[0] * p[0] + w[1] * p[1] + r;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (vp, vq) = (val(p), val(q));
        if vp >= 0.0 {
            out.push(p);
        }
        if (vp >= 0.0) != (vq >= 0.0) {
            let t = vp / (vp - vq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    tidy(out)
}

/// Drops repeated and collinear vertices.
fn tidy(mut poly: Polygon) -> Polygon {
    let scale = poly
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    poly.dedup_by(|a, b| (a[0] - b[0]).abs() <= eps && (a[1] - b[1]).abs() <= eps);
    while poly.len() > 1 {
        let (f, l) = (poly[0], poly[poly.len() - 1]);
        if (f[0] - l[0]).abs() <= eps && (f[1] - l[1]).abs() <= eps {
            poly.pop();
        } else {
            break;
        }
    }
    let mut changed = true;
    while changed && poly.len() >= 3 {
        changed = false;
        let n = poly.len();
        for i in 0..n {
            let (a, b, c) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
            let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if cross.abs() <= eps * eps {
                poly.remove(i);
                changed = true;
                break;
            }
        }
    }
    poly
}

/// One activation-pattern cell: the net equals `a·x + b` on `polygon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub polygon: Polygon,
    pub a: [f64; 2],
    pub b: f64,
    pub pattern: Vec<bool>,
}

/// Activation pattern at `x`: one flag per non-identity unit.
pub fn activation_pattern(net: &Network, x: &[f64]) -> Vec<bool> {
    let pre = net.preactivations(x);
    net.neurons()
        .iter()
        .zip(pre)
        .filter(|(n, _)| n.activation != Activation::Identity)
        .map(|(_, p)| p >= 0.0)
        .collect()
}

type Affine2 = ([f64; 2], f64);

/// Affine preactivations `(w, r)` of every unit and the affine output under
/// a fixed pattern.
fn affine_under(net: &Network, pattern: &[bool]) -> (Vec<Affine2>, [f64; 2], f64) {
    let mut pre = Vec::with_capacity(net.neurons().len());
    let mut post: Vec<([f64; 2], f64)> = Vec::with_capacity(net.neurons().len());
    let mut k = 0;
    for n in net.neurons() {
        let (mut w, mut r) = ([0.0, 0.0], n.bias);
        for &(s, v) in &n.incoming {
            match s {
                Src::Input(i) => w[i] += v,
                Src::Neuron(j) => {
                    w[0] += v * post[j].0[0];
                    w[1] += v * post[j].0[1];
                    r += v * post[j].1;
                }
            }
        }
        pre.push((w, r));
        let out = match n.activation {
            Activation::Identity => (w, r),
            Activation::Relu => {
                let on = pattern[k];
                k += 1;
                if on {
                    (w, r)
                } else {
                    ([0.0, 0.0], 0.0)
                }
            }
            Activation::Step => {
                let on = pattern[k];
                k += 1;
                ([0.0, 0.0], if on { 1.0 } else { 0.0 })
            }
        };
        post.push(out);
    }
    let mut a = [0.0, 0.0];
    let mut b = net.output_bias();
    for &(id, v) in net.output_terms() {
        a[0] += v * post[id].0[0];
        a[1] += v * post[id].0[1];
        b += v * post[id].1;
    }
    (pre, a, b)
}

/// Realizes the cell of `pattern` inside `[-B, B]²`.
pub fn pattern_cell(net: &Network, pattern: &[bool], bx: f64) -> Region {
    let (pre, a, b) = affine_under(net, pattern);
    let mut poly: Polygon = vec![[-bx, -bx], [bx, -bx], [bx, bx], [-bx, bx]];
    let mut k = 0;
    for (n, (w, r)) in net.neurons().iter().zip(pre) {
        if n.activation == Activation::Identity {
            continue;
        }
        let on = pattern[k];
        k += 1;
        let (w, r) = if on { (w, r) } else { ([-w[0], -w[1]], -r) };
        if w == [0.0, 0.0] {
            if r < 0.0 {
                poly.clear();
            }
            continue;
        }
        poly = clip_halfplane(&poly, w, r);
        if poly.len() < 3 {
            poly.clear();
            break;
        }
    }
    Region {
        polygon: poly,
        a,
        b,
        pattern: pattern.to_vec(),
    }
}

/// Linear regions of a planar network inside `[-B, B]²`, discovered from
/// `samples` uniform points drawn from `rng`.
pub fn enumerate_regions_2d<R: Rng + ?Sized>(
    net: &Network,
    bx: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<Region>> {
    if net.input_dim() != 2 {
        return Err(Error::Unsupported(format!(
            "region enumeration is planar only, got input_dim {}",
            net.input_dim()
        )));
    }
    if !(bx > 0.0) {
        return Err(Error::Input(format!("B must be positive, got {bx}")));
    }
    let mut seen: HashMap<Vec<bool>, ()> = HashMap::new();
    let mut order = Vec::new();
    for _ in 0..samples {
        let x = [rng.random_range(-bx..bx), rng.random_range(-bx..bx)];
        let p = activation_pattern(net, &x);
        if seen.insert(p.clone(), ()).is_none() {
            order.push(p);
        }
    }
    let min_area = MIN_CELL_FRACTION * (2.0 * bx) * (2.0 * bx);
    let mut out = Vec::with_capacity(order.len());
    for p in order {
        let cell = pattern_cell(net, &p, bx);
        let area = polygon_area(&cell.polygon);
        if area < min_area {
            log::info!("dropping cell of area {area:e}");
            continue;
        }
        out.push(cell);
    }
    Ok(out)
}

/// Splits a convex polygon into triangles carrying the same payload.
///
/// Triangles are returned as they are; larger polygons are fanned from the
/// vertex centroid.
pub fn triangulate(poly: &[[f64; 2]], a: [f64; 2], b: f64) -> Vec<LinearPiece> {
    let poly = tidy(poly.to_vec());
    let tri = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> Option<LinearPiece> {
        match Simplex::new(vec![p.to_vec(), q.to_vec(), r.to_vec()]) {
            Ok(s) => Some(LinearPiece {
                simplex: s,
                a: a.to_vec(),
                b,
            }),
            Err(e) => {
                log::info!("skipping sliver triangle: {e}");
                None
            }
        }
    };
    match poly.len() {
        0..=2 => {
            log::info!("polygon with {} vertices yields no triangles", poly.len());
            Vec::new()
        }
        3 => tri(poly[0], poly[1], poly[2]).into_iter().collect(),
        n => {
            let c = [
                poly.iter().map(|p| p[0]).sum::<f64>() / n as f64,
                poly.iter().map(|p| p[1]).sum::<f64>() / n as f64,
            ];
            (0..n).filter_map(|i| tri(c, poly[i], poly[(i + 1) % n])).collect()
        }
    }
}

/// Triangulates every region of a planar network.
pub fn cover_from_regions(regions: &[Region]) -> SimplicialCover {
    let pieces = regions
        .iter()
        .flat_map(|r| triangulate(&r.polygon, r.a, r.b))
        .collect();
    SimplicialCover { d: 2, pieces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn template_normalizes_to_identity() {
        let (t, inv) = Simplex::template(3).normalize().unwrap();
        assert_eq!(t, AffineMap::identity(3));
        assert_eq!(inv, AffineMap::identity(3));
    }

    #[test]
    fn normalize_axis_aligned() {
        let s = Simplex::new(vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let (t, inv) = s.normalize().unwrap();
        assert_eq!(t.apply(&[1.0, 3.0]), vec![0.0, 1.0]);
        assert_eq!(t.apply(&[2.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(t.apply(&[3.0, 5.0]), vec![2.0, 2.0]);
        assert_eq!(inv.apply(&[0.0, 1.0]), vec![1.0, 3.0]);
    }

    #[test]
    fn collinear_is_degenerate() {
        let e = Simplex::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert!(matches!(e, Err(Error::DegenerateSimplex { .. })));
    }

    #[test]
    fn facet_forms_are_barycentric() {
        let s = Simplex::new(vec![vec![0.5, -1.0], vec![2.0, 0.0], vec![-0.3, 1.7]]).unwrap();
        let f = s.facet_forms().unwrap();
        let at = |p: &[f64]| f.iter().map(|(w, r)| dot(w, p) + r).collect::<Vec<_>>();
        let close = |u: Vec<f64>, v: [f64; 3]| u.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-12);
        assert!(close(at(&s.vertices[0]), [0.0, 0.0, 1.0]));
        assert!(close(at(&s.vertices[1]), [1.0, 0.0, 0.0]));
        assert!(close(at(&s.vertices[2]), [0.0, 1.0, 0.0]));
    }

    #[test]
    fn triangle_passes_through() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let out = triangulate(&t, [1.0, 0.0], 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].simplex.vertices[1], vec![1.0, 0.0]);
    }

    #[test]
    fn square_gives_four_triangles() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let out = triangulate(&sq, [0.0, 0.0], 0.0);
        assert_eq!(out.len(), 4);
        let total: f64 = out.iter().map(|p| p.simplex.volume()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hexagon_gives_equal_triangles() {
        let hex: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let out = triangulate(&hex, [0.0, 0.0], 0.0);
        assert_eq!(out.len(), 6);
        let areas: Vec<f64> = out.iter().map(|p| p.simplex.volume()).collect();
        for a in &areas {
            assert!((a - areas[0]).abs() < 1e-12);
        }
        assert!((areas.iter().sum::<f64>() - polygon_area(&hex)).abs() < 1e-12);
    }

    #[test]
    fn half_plane_net_has_two_regions() {
        let mut n = Network::new(2);
        let u = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), 1.0)]);
        n.set_output(vec![(u, 1.0)], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut regs = enumerate_regions_2d(&n, 1.0, 1000, &mut rng).unwrap();
        regs.sort_by(|p, q| p.a[0].total_cmp(&q.a[0]));
        assert_eq!(regs.len(), 2);
        assert_eq!((regs[0].a, regs[0].b), ([0.0, 0.0], 0.0));
        assert_eq!((regs[1].a, regs[1].b), ([1.0, 0.0], 0.0));
        assert!((polygon_area(&regs[1].polygon) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_half_planes_give_quadrants() {
        let mut n = Network::new(2);
        let u = n.push(Activation::Relu, 0.0, vec![(Src::Input(0), 1.0)]);
        let v = n.push(Activation::Relu, 0.0, vec![(Src::Input(1), 1.0)]);
        n.set_output(vec![(u, 1.0), (v, 1.0)], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let regs = enumerate_regions_2d(&n, 1.0, 1000, &mut rng).unwrap();
        assert_eq!(regs.len(), 4);
        for r in &regs {
            assert!((polygon_area(&r.polygon) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_planar_is_unsupported() {
        let n = Network::constant(3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(enumerate_regions_2d(&n, 1.0, 10, &mut rng), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cover_doc_round_trip() {
        let s = Simplex::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = SimplicialCover {
            d: 2,
            pieces: vec![LinearPiece::new(s, vec![0.1, -0.2], 0.3).unwrap()],
        };
        assert_eq!(SimplicialCover::from_json(&c.to_json()).unwrap(), c);
    }
}
