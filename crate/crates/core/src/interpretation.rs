//! Matrix-side values on fractured elements, for display only.
//!
//! Each fractured element is cut by its fracture segments into convex
//! subelements. Subelements take values from neighboring matrix elements in
//! the same connected subdomain, spreading outward one layer per sweep.

use crate::error::{Error, Result};
use crate::fracture::IntersectionData;
use crate::geometry::{clip_segment_convex, point_on_polygon_boundary, polygon_area, split_convex, Point};
use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct SubElement {
    pub element: usize,
    pub polygon: Vec<Point>,
    /// Connected subdomain of the matrix `Omega \ Gamma`.
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub subelements: Vec<SubElement>,
    /// Subelement ids per element; empty for matrix elements.
    pub of_element: Vec<Vec<usize>>,
    /// Subdomain label of every matrix element.
    pub matrix_label: Vec<Option<usize>>,
    pub n_subdomains: usize,
    /// Neighbors across mesh faces, as node ids: element ids for matrix
    /// elements, `n_elements + k` for subelement `k`.
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretedField {
    /// Raw value on matrix elements, trace value on fractured ones.
    pub element: Vec<f64>,
    pub subelement: Vec<f64>,
}

/// Cut the square of element `e` into pieces separated by its fracture segments.
pub fn split_element(mesh: &Mesh, x: &IntersectionData, e: usize) -> Vec<Vec<Point>> {
    let rect = mesh.element(e).rect;
    let tol = 1e-10 * rect.diameter();
    // pieces of one straight input fracture are merged so that a fracture
    // broken at a junction still runs wall to wall
    let mut chords: Vec<(usize, Point, Point)> = Vec::new();
    for s in &x.segments[e] {
        let origin = x.network.edges[s.edge].origin;
        match chords.iter_mut().find(|c| c.0 == origin) {
            Some(c) => {
                let d = c.2 - c.1;
                let t = |p: Point| (p - c.1).dot(d);
                let ends = [c.1, c.2, s.a, s.b];
                let lo = ends.iter().copied().min_by(|p, q| t(*p).total_cmp(&t(*q))).unwrap();
                let hi = ends.iter().copied().max_by(|p, q| t(*p).total_cmp(&t(*q))).unwrap();
                c.1 = lo;
                c.2 = hi;
            }
            None => chords.push((origin, s.a, s.b)),
        }
    }
    let mut pieces = vec![rect.to_polygon()];
    loop {
        let mut changed = false;
        'scan: for k in 0..pieces.len() {
            for &(_, a, b) in &chords {
                let Some((t0, t1)) = clip_segment_convex(a, b, &pieces[k]) else {
                    continue;
                };
                if (t1 - t0) * a.distance(b) <= tol {
                    continue;
                }
                let p0 = a.lerp(b, t0);
                let p1 = a.lerp(b, t1);
                // only a segment running wall to wall separates the piece
                if !point_on_polygon_boundary(p0, &pieces[k], 1e3 * tol) || !point_on_polygon_boundary(p1, &pieces[k], 1e3 * tol) {
                    continue;
                }
                if let Some((l, r)) = split_convex(&pieces[k], a, b, tol) {
                    pieces[k] = l;
                    pieces.push(r);
                    changed = true;
                    break 'scan;
                }
            }
        }
        if !changed {
            return pieces;
        }
    }
}

/// Parameter interval of face `f` covered by the boundary of a convex polygon.
fn face_interval(a: Point, b: Point, poly: &[Point], tol: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let len2 = d.dot(d);
    let n = poly.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let on = |r: Point| d.cross(r - a).abs() / len2.sqrt() <= tol;
        if on(p) && on(q) && p.distance(q) > tol {
            for r in [p, q] {
                let t = (r - a).dot(d) / len2;
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
    }
    let lo = lo.max(0.0);
    let hi = hi.min(1.0);
    (hi - lo > tol / len2.sqrt()).then_some((lo, hi))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

pub fn partition(mesh: &Mesh, x: &IntersectionData) -> Partition {
    let ne = mesh.n_elements();
    let mut subelements = Vec::new();
    let mut of_element = vec![Vec::new(); ne];
    for e in x.fractured_elements() {
        for polygon in split_element(mesh, x, e) {
            of_element[e].push(subelements.len());
            subelements.push(SubElement {
                element: e,
                polygon,
                label: 0,
            });
        }
    }

    let n_nodes = ne + subelements.len();
    let tol = 1e-10 * mesh.domain().diameter();
    // pieces of an element touching face f, with their face intervals
    let touching = |e: usize, a: Point, b: Point| -> Vec<(usize, (f64, f64))> {
        if of_element[e].is_empty() {
            vec![(e, (0.0, 1.0))]
        } else {
            of_element[e]
                .iter()
                .filter_map(|&k| face_interval(a, b, &subelements[k].polygon, tol).map(|iv| (ne + k, iv)))
                .collect()
        }
    };
    let mut adjacency = vec![Vec::new(); n_nodes];
    let mut uf = UnionFind((0..n_nodes).collect());
    for face in mesh.faces() {
        let Some(plus) = face.plus else { continue };
        let left = touching(face.minus, face.a, face.b);
        let right = touching(plus, face.a, face.b);
        let flen = face.length();
        for &(u, (a0, a1)) in &left {
            for &(v, (b0, b1)) in &right {
                if (a1.min(b1) - a0.max(b0)) * flen > tol {
                    adjacency[u].push(v);
                    adjacency[v].push(u);
                    uf.union(u, v);
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    // number subdomains by their smallest node id
    let mut label_of_root = vec![usize::MAX; n_nodes];
    let mut n_subdomains = 0;
    let mut label = vec![usize::MAX; n_nodes];
    for u in 0..n_nodes {
        if u < ne && !of_element[u].is_empty() {
            continue;
        }
        let r = uf.find(u);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = n_subdomains;
            n_subdomains += 1;
        }
        label[u] = label_of_root[r];
    }
    for (k, s) in subelements.iter_mut().enumerate() {
        s.label = label[ne + k];
    }
    let matrix_label = (0..ne).map(|e| of_element[e].is_empty().then_some(label[e])).collect();
    Partition {
        subelements,
        of_element,
        matrix_label,
        n_subdomains,
        adjacency,
    }
}

pub fn interpret(c: &[f64], part: &Partition) -> Result<InterpretedField> {
    let ne = part.of_element.len();
    if c.len() != ne {
        return Err(Error::invalid(format!("{} values for {ne} elements", c.len())));
    }
    let mut sub: Vec<Option<f64>> = vec![None; part.subelements.len()];
    let value = |u: usize, sub: &[Option<f64>]| if u < ne { c[u] } else { sub[u - ne].unwrap() };
    let mut donors: Vec<usize> = (0..ne).filter(|&e| part.of_element[e].is_empty()).collect();
    let mut remaining = sub.len();
    while remaining > 0 && !donors.is_empty() {
        let mut next = Vec::new();
        for &u in &donors {
            for &v in &part.adjacency[u] {
                if v >= ne && sub[v - ne].is_none() {
                    sub[v - ne] = Some(value(u, &sub));
                    remaining -= 1;
                    next.push(v);
                }
            }
        }
        donors = next;
    }
    if remaining > 0 {
        let missing = sub
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| (part.subelements[k].element, k))
            .collect();
        return Err(Error::Interpretation(missing));
    }
    Ok(InterpretedField {
        element: c.to_vec(),
        subelement: sub.into_iter().map(Option::unwrap).collect(),
    })
}

impl Partition {
    pub fn area_defect(&self, mesh: &Mesh) -> f64 {
        let mut worst: f64 = 0.0;
        for (e, ks) in self.of_element.iter().enumerate() {
            if ks.is_empty() {
                continue;
            }
            let a: f64 = ks.iter().map(|&k| polygon_area(&self.subelements[k].polygon)).sum();
            let ae = mesh.element(e).area();
            worst = worst.max((a - ae).abs() / ae);
        }
        worst
    }
}
