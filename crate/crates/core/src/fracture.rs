//! Fracture networks as graphs of straight segments, their intersection with
//! a mesh, and fracture-driven local refinement.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_segment, point_segment_distance, segment_intersection, Point, Rect};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeProps {
    pub aperture: f64,
    pub permeability: f64,
    pub porosity: f64,
}

impl EdgeProps {
    /// Effective permeability `k = w * kappa`.
    pub fn effective_permeability(&self) -> f64 {
        self.aperture * self.permeability
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aperture > 0.0 && self.permeability > 0.0 && self.porosity > 0.0 && self.porosity <= 1.0) {
            return Err(Error::Material(format!(
                "fracture properties must satisfy w > 0, kappa > 0, 0 < phi <= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractureEdge {
    /// Endpoint node indices, lower index first.
    pub nodes: [usize; 2],
    pub props: EdgeProps,
    /// Input row this edge was split from.
    pub origin: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FractureNetwork {
    pub nodes: Vec<Point>,
    pub edges: Vec<FractureEdge>,
    node_edges: Vec<Vec<usize>>,
}

/// One straight input fracture before graph construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentInput {
    pub a: Point,
    pub b: Point,
    pub props: EdgeProps,
}

impl FractureNetwork {
    /// Build the graph: snap endpoints, split at crossings and T-junctions,
    /// orient every edge from its lower to its higher node index.
    pub fn from_segments(segments: &[SegmentInput], domain: &Rect) -> Result<FractureNetwork> {
        let tol = 1e-9 * domain.diameter();
        for (r, s) in segments.iter().enumerate() {
            s.props.validate()?;
            for p in [s.a, s.b] {
                if !domain.contains(p, tol) {
                    return Err(Error::data(format!("fracture {r}: endpoint ({}, {}) outside the domain", p.x, p.y)));
                }
            }
            if s.a.distance(s.b) <= tol {
                return Err(Error::data(format!("fracture {r}: zero-length segment")));
            }
        }

        // split parameters per input segment
        let mut cuts: Vec<Vec<f64>> = segments.iter().map(|_| vec![0.0, 1.0]).collect();
        for i in 0..segments.len() {
            for k in (i + 1)..segments.len() {
                let (s, t) = (&segments[i], &segments[k]);
                if let Some((u, v)) = segment_intersection(s.a, s.b, t.a, t.b, tol) {
                    cuts[i].push(u);
                    cuts[k].push(v);
                }
                // collinear overlaps and T-junctions of (near-)parallel segments
                for (me, other, idx) in [(s, t, i), (t, s, k)] {
                    for p in [other.a, other.b] {
                        if point_segment_distance(p, me.a, me.b) <= tol {
                            let d = me.b - me.a;
                            cuts[idx].push(((p - me.a).dot(d) / d.dot(d)).clamp(0.0, 1.0));
                        }
                    }
                }
            }
        }

        let mut nodes: Vec<Point> = Vec::new();
        let snap = |p: Point, nodes: &mut Vec<Point>| -> usize {
            if let Some(n) = nodes.iter().position(|q| q.distance(p) <= tol) {
                n
            } else {
                nodes.push(p);
                nodes.len() - 1
            }
        };
        let mut edges: Vec<FractureEdge> = Vec::new();
        let mut seen: BTreeSet<[usize; 2]> = BTreeSet::new();
        for (r, s) in segments.iter().enumerate() {
            let c = &mut cuts[r];
            c.sort_by(f64::total_cmp);
            let ids: Vec<usize> = c.iter().map(|&t| snap(s.a.lerp(s.b, t), &mut nodes)).collect();
            for w in ids.windows(2) {
                if w[0] == w[1] {
                    continue;
                }
                let key = [w[0].min(w[1]), w[0].max(w[1])];
                if seen.insert(key) {
                    edges.push(FractureEdge {
                        nodes: key,
                        props: s.props,
                        origin: r,
                    });
                }
            }
        }
        Ok(FractureNetwork::from_parts(nodes, edges))
    }

    fn from_parts(nodes: Vec<Point>, edges: Vec<FractureEdge>) -> FractureNetwork {
        let mut node_edges = vec![Vec::new(); nodes.len()];
        for (j, e) in edges.iter().enumerate() {
            node_edges[e.nodes[0]].push(j);
            node_edges[e.nodes[1]].push(j);
        }
        FractureNetwork { nodes, edges, node_edges }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn endpoints(&self, j: usize) -> (Point, Point) {
        let [a, b] = self.edges[j].nodes;
        (self.nodes[a], self.nodes[b])
    }

    pub fn length(&self, j: usize) -> f64 {
        let (a, b) = self.endpoints(j);
        a.distance(b)
    }

    /// Unit tangent of edge `j`, pointing from its lower to its higher node.
    pub fn tangent(&self, j: usize) -> Point {
        let (a, b) = self.endpoints(j);
        (b - a).normalized()
    }

    pub fn total_length(&self) -> f64 {
        (0..self.n_edges()).map(|j| self.length(j)).sum()
    }

    /// Edges meeting at node `i`.
    pub fn node_edges(&self, i: usize) -> &[usize] {
        &self.node_edges[i]
    }

    pub fn share_node(&self, j: usize, k: usize) -> bool {
        let (a, b) = (self.edges[j].nodes, self.edges[k].nodes);
        a.iter().any(|n| b.contains(n))
    }

    /// Edges whose closed segment meets the closed rectangle.
    pub fn edges_touching(&self, rect: &Rect, tol: f64) -> Vec<usize> {
        let r = rect.expanded(tol);
        (0..self.n_edges())
            .filter(|&j| {
                let (a, b) = self.endpoints(j);
                clip_segment(a, b, &r).is_some()
            })
            .collect()
    }

    /// Copy with moved node positions.
    fn with_nodes(&self, nodes: Vec<Point>) -> FractureNetwork {
        FractureNetwork {
            nodes,
            edges: self.edges.clone(),
            node_edges: self.node_edges.clone(),
        }
    }
}

/// Read a fracture table with columns `START_X, START_Y, END_X, END_Y` and
/// optional `APERTURE, PERMEABILITY, POROSITY`.
pub fn load_network(path: &Path, defaults: EdgeProps, domain: &Rect) -> Result<FractureNetwork> {
    let segments = read_segments(path, defaults)?;
    FractureNetwork::from_segments(&segments, domain)
}

pub fn read_segments(path: &Path, defaults: EdgeProps) -> Result<Vec<SegmentInput>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_uppercase()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ingest = |line: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };
    let required = ["START_X", "START_Y", "END_X", "END_Y"].map(|n| col(n).ok_or_else(|| ingest(1, format!("missing column {n}"))));
    let [sx, sy, ex, ey] = required;
    let (sx, sy, ex, ey) = (sx?, sy?, ex?, ey?);
    let (ca, cp, cf) = (col("APERTURE"), col("PERMEABILITY"), col("POROSITY"));
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            let v: f64 = s.parse().map_err(|_| ingest(line, format!("cannot parse '{s}' as a number")))?;
            if !v.is_finite() {
                return Err(ingest(line, format!("non-finite value '{s}'")));
            }
            Ok(v)
        };
        let opt = |c: Option<usize>, d: f64| -> Result<f64> {
            match c {
                Some(c) if !rec.get(c).unwrap_or("").is_empty() => num(c),
                _ => Ok(d),
            }
        };
        out.push(SegmentInput {
            a: Point::new(num(sx)?, num(sy)?),
            b: Point::new(num(ex)?, num(ey)?),
            props: EdgeProps {
                aperture: opt(ca, defaults.aperture)?,
                permeability: opt(cp, defaults.permeability)?,
                porosity: opt(cf, defaults.porosity)?,
            },
        });
    }
    Ok(out)
}

/// Part of an edge inside one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedSegment {
    pub edge: usize,
    pub a: Point,
    pub b: Point,
    pub t0: f64,
    pub t1: f64,
}

impl ClippedSegment {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// A point where an edge passes through a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCrossing {
    pub edge: usize,
    pub point: Point,
    /// Edge tangent oriented so that `tangent . n_F > 0`.
    pub tangent: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceClass {
    Boundary,
    /// Both neighbors are matrix elements.
    Matrix,
    /// Exactly one neighbor is fractured.
    Mixed,
    /// Both neighbors fractured and the face is crossed by a fracture.
    Fracture,
    /// Both neighbors fractured but the face is not crossed.
    FracturedUncrossed,
}

#[derive(Debug, Clone)]
pub struct IntersectionData {
    /// The network actually used, after any coincidence perturbation.
    pub network: FractureNetwork,
    pub segments: Vec<Vec<ClippedSegment>>,
    pub fractured: Vec<bool>,
    pub crossings: Vec<Vec<FaceCrossing>>,
    pub face_class: Vec<FaceClass>,
    /// Subdomain label of each matrix element (`None` for fractured ones).
    pub labels: Vec<Option<usize>>,
    pub n_subdomains: usize,
    pub perturbed: bool,
}

impl IntersectionData {
    pub fn is_fractured(&self, e: usize) -> bool {
        self.fractured[e]
    }

    pub fn fractured_elements(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.fractured.len()).filter(move |&e| self.fractured[e])
    }

    pub fn fracture_length(&self, e: usize) -> f64 {
        self.segments[e].iter().map(ClippedSegment::length).sum()
    }

    /// `sum w * phi * |segment|` over the clipped segments of `e`.
    pub fn fracture_pore_volume(&self, e: usize) -> f64 {
        self.segments[e]
            .iter()
            .map(|s| {
                let p = &self.network.edges[s.edge].props;
                p.aperture * p.porosity * s.length()
            })
            .sum()
    }

    pub fn count_faces(&self, class: FaceClass) -> usize {
        self.face_class.iter().filter(|&&c| c == class).count()
    }
}

/// Move axis-parallel edges lying on mesh lines off them by `eps`
/// (horizontal edges in +y, vertical edges in +x).
fn perturb_coincident(mesh: &Mesh, net: &FractureNetwork) -> Option<FractureNetwork> {
    let h = mesh.h_min();
    let tol = 1e-9 * h;
    let eps = 1e-6 * h;
    let mut nodes = net.nodes.clone();
    let mut changed = false;
    for _round in 0..3 {
        let mut shift = vec![Point::default(); nodes.len()];
        let mut any = false;
        for (j, e) in net.edges.iter().enumerate() {
            let (a, b) = (nodes[e.nodes[0]], nodes[e.nodes[1]]);
            let horizontal = (a.y - b.y).abs() <= tol;
            let vertical = (a.x - b.x).abs() <= tol;
            if !horizontal && !vertical {
                continue;
            }
            let hit = mesh.faces().iter().any(|f| {
                if horizontal && f.is_horizontal() {
                    let (lo, hi) = (a.x.min(b.x), a.x.max(b.x));
                    (f.a.y - a.y).abs() <= tol && f.a.x.min(f.b.x) < hi - tol && f.a.x.max(f.b.x) > lo + tol
                } else if vertical && !f.is_horizontal() {
                    let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
                    (f.a.x - a.x).abs() <= tol && f.a.y.min(f.b.y) < hi - tol && f.a.y.max(f.b.y) > lo + tol
                } else {
                    false
                }
            });
            if hit {
                log::warn!("fracture edge {j} coincides with mesh faces; shifting it by {eps:.3e}");
                for &n in &e.nodes {
                    if horizontal {
                        shift[n].y = eps;
                    } else {
                        shift[n].x = eps;
                    }
                }
                any = true;
            }
        }
        if !any {
            break;
        }
        changed = true;
        let d = mesh.domain();
        for (p, s) in nodes.iter_mut().zip(&shift) {
            *p = *p + *s;
            // keep nodes inside the closed domain
            p.x = p.x.min(d.max.x);
            p.y = p.y.min(d.max.y);
        }
    }
    changed.then(|| net.with_nodes(nodes))
}

/// Candidate elements whose box overlaps the bounding box of segment `a b`.
fn candidates(mesh: &Mesh, a: Point, b: Point, tol: f64) -> Vec<usize> {
    let bb = Rect::new(a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y)).expanded(tol);
    mesh.elements()
        .iter()
        .enumerate()
        .filter(|(_, el)| el.rect.overlaps(&bb))
        .map(|(e, _)| e)
        .collect()
}

fn face_containing(mesh: &Mesh, e: usize, p: Point, tol: f64) -> Option<usize> {
    mesh.element_faces(e).iter().map(|&(f, _)| f).find(|&f| {
        let fc = mesh.face(f);
        point_segment_distance(p, fc.a, fc.b) <= tol
    })
}

pub fn intersect(mesh: &Mesh, network: &FractureNetwork) -> IntersectionData {
    let perturbed_net = perturb_coincident(mesh, network);
    let perturbed = perturbed_net.is_some();
    let net = perturbed_net.unwrap_or_else(|| network.clone());
    let ne = mesh.n_elements();
    let tol = 1e-9 * mesh.h_min();
    let mut segments: Vec<Vec<ClippedSegment>> = vec![Vec::new(); ne];
    let mut crossings: Vec<Vec<FaceCrossing>> = vec![Vec::new(); mesh.n_faces()];

    for j in 0..net.n_edges() {
        let (a, b) = net.endpoints(j);
        let len = a.distance(b);
        let t = (b - a) * (1.0 / len);
        let mut pieces: Vec<(f64, f64, usize)> = Vec::new();
        for e in candidates(mesh, a, b, tol) {
            let rect = mesh.element(e).rect;
            if let Some((t0, t1)) = clip_segment(a, b, &rect) {
                if (t1 - t0) * len > 1e-9 * mesh.element(e).h() {
                    pieces.push((t0, t1, e));
                }
            }
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(t0, t1, e) in &pieces {
            segments[e].push(ClippedSegment {
                edge: j,
                a: a.lerp(b, t0),
                b: a.lerp(b, t1),
                t0,
                t1,
            });
        }
        // transitions between consecutive pieces lie on shared faces
        for w in pieces.windows(2) {
            let (prev, next) = (w[0], w[1]);
            let p = a.lerp(b, prev.1);
            let face = mesh.element_faces(prev.2).iter().map(|&(f, _)| f).find(|&f| {
                let fc = mesh.face(f);
                fc.other(prev.2) == Some(next.2) && point_segment_distance(p, fc.a, fc.b) <= tol
            });
            match face {
                Some(f) => {
                    let n = mesh.face(f).normal;
                    let s = if t.dot(n) >= 0.0 { 1.0 } else { -1.0 };
                    crossings[f].push(FaceCrossing {
                        edge: j,
                        point: p,
                        tangent: t * s,
                    });
                }
                None => log::warn!(
                    "fracture edge {j} passes between elements {} and {} through a vertex",
                    prev.2,
                    next.2
                ),
            }
        }
        // endpoints on faces
        for (tt, node) in [(0.0, net.edges[j].nodes[0]), (1.0, net.edges[j].nodes[1])] {
            let piece = if tt == 0.0 { pieces.first() } else { pieces.last() };
            let Some(&(_, _, e)) = piece else { continue };
            let p = a.lerp(b, tt);
            if let Some(f) = face_containing(mesh, e, p, tol) {
                let fc = mesh.face(f);
                if fc.is_boundary() {
                    let s = if t.dot(fc.normal) >= 0.0 { 1.0 } else { -1.0 };
                    crossings[f].push(FaceCrossing {
                        edge: j,
                        point: p,
                        tangent: t * s,
                    });
                } else if net.node_edges(node).len() > 1 {
                    log::warn!("fracture node {node} lies on an interior mesh face");
                }
            }
        }
    }

    let fractured: Vec<bool> = segments.iter().map(|s| !s.is_empty()).collect();
    let face_class: Vec<FaceClass> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(f, fc)| match fc.plus {
            None => FaceClass::Boundary,
            Some(p) => match (fractured[fc.minus], fractured[p]) {
                (false, false) => FaceClass::Matrix,
                (true, true) if !crossings[f].is_empty() => FaceClass::Fracture,
                (true, true) => FaceClass::FracturedUncrossed,
                _ => FaceClass::Mixed,
            },
        })
        .collect();

    // flood fill matrix elements through matrix-matrix faces
    let mut labels: Vec<Option<usize>> = vec![None; ne];
    let mut n_subdomains = 0;
    let mut stack = Vec::new();
    for start in 0..ne {
        if fractured[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(n_subdomains);
        stack.push(start);
        while let Some(e) = stack.pop() {
            for &(f, _) in mesh.element_faces(e) {
                if face_class[f] != FaceClass::Matrix {
                    continue;
                }
                let o = mesh.face(f).other(e).unwrap();
                if labels[o].is_none() {
                    labels[o] = Some(n_subdomains);
                    stack.push(o);
                }
            }
        }
        n_subdomains += 1;
    }

    IntersectionData {
        network: net,
        segments,
        fractured,
        crossings,
        face_class,
        labels,
        n_subdomains,
        perturbed,
    }
}

/// Elements whose closure meets the network.
pub fn touched_elements(mesh: &Mesh, network: &FractureNetwork) -> Vec<usize> {
    let tol = 1e-9 * mesh.h_min();
    let mut flags = BTreeSet::new();
    for j in 0..network.n_edges() {
        let (a, b) = network.endpoints(j);
        for e in candidates(mesh, a, b, tol) {
            if clip_segment(a, b, &mesh.element(e).rect.expanded(tol)).is_some() {
                flags.insert(e);
            }
        }
    }
    flags.into_iter().collect()
}

/// `rounds` rounds of refining every element whose closure meets the network.
pub fn refine_around_fractures(mesh: &Mesh, network: &FractureNetwork, rounds: usize) -> Result<Mesh> {
    let mut m = mesh.clone();
    for _ in 0..rounds {
        let flags = touched_elements(&m, network);
        if flags.is_empty() {
            break;
        }
        m = m.refine(&flags)?;
    }
    Ok(m)
}

/// Pairs of edges that meet the patch but are not joined by a chain of edges
/// that all meet the patch.
fn disconnected_pairs(network: &FractureNetwork, edges: &[usize]) -> Vec<(usize, usize)> {
    if edges.len() < 2 {
        return Vec::new();
    }
    // union-find over the local edge set
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for x in 0..edges.len() {
        for y in (x + 1)..edges.len() {
            if network.share_node(edges[x], edges[y]) {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                parent[rx] = ry;
            }
        }
    }
    let mut out = Vec::new();
    for x in 0..edges.len() {
        for y in (x + 1)..edges.len() {
            if find(&mut parent, x) != find(&mut parent, y) {
                out.push((edges[x].min(edges[y]), edges[x].max(edges[y])));
            }
        }
    }
    out
}

/// Refine until no element's vertex patch meets two unconnected fractures.
pub fn resolve_close_fractures(mesh: &Mesh, network: &FractureNetwork, max_level: u8) -> Result<Mesh> {
    let mut m = mesh.clone();
    loop {
        let tol = 1e-9 * m.h_min();
        let touching: Vec<Vec<usize>> = {
            let mut t = vec![Vec::new(); m.n_elements()];
            for j in 0..network.n_edges() {
                let (a, b) = network.endpoints(j);
                for e in candidates(&m, a, b, tol) {
                    if clip_segment(a, b, &m.element(e).rect.expanded(tol)).is_some() {
                        t[e].push(j);
                    }
                }
            }
            t
        };
        let mut flags = Vec::new();
        let mut stuck: BTreeSet<(usize, usize)> = BTreeSet::new();
        for e in 0..m.n_elements() {
            let mut patch_edges = BTreeSet::new();
            for &v in &m.element(e).vertices {
                for &o in m.vertex_elements(v) {
                    patch_edges.extend(touching[o].iter().copied());
                }
            }
            if patch_edges.len() < 2 {
                continue;
            }
            let list: Vec<usize> = patch_edges.into_iter().collect();
            let pairs = disconnected_pairs(network, &list);
            if pairs.is_empty() {
                continue;
            }
            if m.element(e).level() >= max_level {
                stuck.extend(pairs);
            } else {
                flags.push(e);
            }
        }
        if !stuck.is_empty() {
            return Err(Error::ResolutionFailure {
                max_level,
                pairs: stuck.into_iter().collect(),
            });
        }
        if flags.is_empty() {
            return Ok(m);
        }
        m = m.refine(&flags)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PROPS: EdgeProps = EdgeProps {
        aperture: 1e-4,
        permeability: 1e4,
        porosity: 1.0,
    };

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> SegmentInput {
        SegmentInput {
            a: Point::new(x0, y0),
            b: Point::new(x1, y1),
            props: PROPS,
        }
    }

    fn benchmark1_segments() -> Vec<SegmentInput> {
        vec![
            seg(0.0, 0.5, 1.0, 0.5),
            seg(0.5, 0.0, 0.5, 1.0),
            seg(0.5, 0.75, 1.0, 0.75),
            seg(0.75, 0.5, 0.75, 1.0),
            seg(0.5, 0.625, 0.75, 0.625),
            seg(0.625, 0.5, 0.625, 0.75),
        ]
    }

    #[test]
    fn benchmark1_graph() {
        let net = FractureNetwork::from_segments(&benchmark1_segments(), &unit()).unwrap();
        assert_eq!((net.n_edges(), net.n_nodes()), (18, 15));
        assert!(net.edges.iter().all(|e| e.nodes[0] < e.nodes[1]));
        assert!((net.total_length() - 3.5).abs() < 1e-12);
        // the central crossing joins four edges
        let c = net.nodes.iter().position(|p| p.distance(Point::new(0.5, 0.5)) < 1e-12).unwrap();
        assert_eq!(net.node_edges(c).len(), 4);
    }

    #[test]
    fn empty_and_invalid_networks() {
        let net = FractureNetwork::from_segments(&[], &unit()).unwrap();
        assert!(net.is_empty());
        assert!(matches!(
            FractureNetwork::from_segments(&[seg(0.2, 0.2, 0.2, 0.2)], &unit()),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            FractureNetwork::from_segments(&[seg(0.2, 0.2, 1.2, 0.2)], &unit()),
            Err(Error::Data(_))
        ));
        let mut bad = seg(0.1, 0.1, 0.2, 0.2);
        bad.props.aperture = 0.0;
        assert!(matches!(FractureNetwork::from_segments(&[bad], &unit()), Err(Error::Material(_))));
    }

    #[test]
    fn snapping_merges_close_endpoints() {
        let net = FractureNetwork::from_segments(&[seg(0.1, 0.1, 0.5, 0.5), seg(0.5 + 1e-12, 0.5, 0.9, 0.2)], &unit()).unwrap();
        assert_eq!((net.n_edges(), net.n_nodes()), (2, 3));
        assert!(net.share_node(0, 1));
    }

    #[test]
    fn horizontal_fracture_on_3x3() {
        let mesh = Mesh::uniform(3, 3, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.0, 0.5, 1.0, 0.5)], &unit()).unwrap();
        let x = intersect(&mesh, &net);
        assert!(!x.perturbed);
        assert_eq!(x.fractured_elements().count(), 3);
        assert_eq!(x.count_faces(FaceClass::Fracture), 2);
        assert_eq!(x.count_faces(FaceClass::Mixed), 6);
        for e in x.fractured_elements() {
            assert!((x.fracture_length(e) - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(x.n_subdomains, 2);
        // boundary endpoints are recorded as crossings with outward tangents
        let b: Vec<_> = (0..mesh.n_faces())
            .filter(|&f| mesh.face(f).is_boundary() && !x.crossings[f].is_empty())
            .collect();
        assert_eq!(b.len(), 2);
        for f in b {
            assert!(x.crossings[f][0].tangent.dot(mesh.face(f).normal) > 0.0);
        }
    }

    #[test]
    fn diagonal_in_single_cell() {
        let mesh = Mesh::uniform(1, 1, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.0, 0.0, 1.0, 1.0)], &unit()).unwrap();
        let x = intersect(&mesh, &net);
        assert_eq!(x.segments[0].len(), 1);
        assert!((x.fracture_length(0) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coincident_fracture_is_shifted_up() {
        let mesh = Mesh::uniform(2, 2, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.0, 0.5, 1.0, 0.5)], &unit()).unwrap();
        let x = intersect(&mesh, &net);
        assert!(x.perturbed);
        let f: Vec<usize> = x.fractured_elements().collect();
        assert_eq!(f, vec![2, 3]);
        assert_eq!(x.count_faces(FaceClass::Fracture), 1);
    }

    #[test]
    fn refine_once_around_single_fracture() {
        let mesh = Mesh::uniform(4, 4, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.1, 0.3, 0.9, 0.35)], &unit()).unwrap();
        assert_eq!(refine_around_fractures(&mesh, &net, 0).unwrap().n_elements(), 16);
        let fine = refine_around_fractures(&mesh, &net, 1).unwrap();
        let x = intersect(&fine, &net);
        assert!(x.fractured_elements().all(|e| fine.element(e).level() == 1));
        // the fracture stays in row 1 of the 4x4 base: 4 cells refined
        assert_eq!(fine.n_elements(), 16 - 4 + 16);
    }

    #[test]
    fn close_parallel_fractures_are_separated() {
        let mesh = Mesh::uniform(4, 4, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.1, 0.3, 0.9, 0.3), seg(0.1, 0.6, 0.9, 0.6)], &unit()).unwrap();
        let r = resolve_close_fractures(&mesh, &net, 8).unwrap();
        assert!(r.n_elements() > mesh.n_elements());
        let again = resolve_close_fractures(&r, &net, 8).unwrap();
        assert_eq!(again.n_elements(), r.n_elements());
    }

    #[test]
    fn resolution_noop_cases() {
        let mesh = Mesh::uniform(4, 4, unit()).unwrap();
        let single = FractureNetwork::from_segments(&[seg(0.1, 0.3, 0.9, 0.3)], &unit()).unwrap();
        assert_eq!(resolve_close_fractures(&mesh, &single, 8).unwrap().n_elements(), 16);
        let joined = FractureNetwork::from_segments(&[seg(0.1, 0.3, 0.5, 0.3), seg(0.5, 0.3, 0.6, 0.9)], &unit()).unwrap();
        assert_eq!(resolve_close_fractures(&mesh, &joined, 8).unwrap().n_elements(), 16);
    }

    #[test]
    fn resolution_failure_names_pairs() {
        let mesh = Mesh::uniform(4, 4, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[seg(0.1, 0.3, 0.9, 0.3), seg(0.1, 0.31, 0.9, 0.31)], &unit()).unwrap();
        match resolve_close_fractures(&mesh, &net, 2) {
            Err(Error::ResolutionFailure { max_level, pairs }) => {
                assert_eq!(max_level, 2);
                assert_eq!(pairs, vec![(0, 1)]);
            }
            other => panic!("expected resolution failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(
            &path,
            "START_X,START_Y,END_X,END_Y,APERTURE\n0.1,0.2,0.8,0.2,0.01\n0.5,0.0,0.5,1.0,\n",
        )
        .unwrap();
        let net = load_network(&path, PROPS, &unit()).unwrap();
        assert_eq!(net.n_edges(), 4);
        assert!(net.edges.iter().any(|e| e.props.aperture == 0.01));
        assert!(net.edges.iter().any(|e| e.props.aperture == PROPS.aperture));
        std::fs::write(&path, "START_X,START_Y,END_X,END_Y\n0.1,0.2,zz,0.2\n").unwrap();
        match load_network(&path, PROPS, &unit()) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn clipped_lengths_partition_each_edge(
            n in 1usize..7,
            refine_at in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..6),
            raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..5),
        ) {
            let mut mesh = Mesh::uniform(n, n, unit()).unwrap();
            for (u, v) in refine_at {
                let e = mesh.locate(Point::new(u, v)).unwrap();
                mesh = mesh.refine(&[e]).unwrap();
            }
            let segs: Vec<SegmentInput> = raw.iter()
                .filter(|s| (s.0 - s.2).hypot(s.1 - s.3) > 1e-3)
                .map(|s| seg(s.0, s.1, s.2, s.3))
                .collect();
            prop_assume!(!segs.is_empty());
            let net = FractureNetwork::from_segments(&segs, &unit()).unwrap();
            let x = intersect(&mesh, &net);
            let mut per_edge = vec![0.0; x.network.n_edges()];
            for s in x.segments.iter().flatten() {
                per_edge[s.edge] += s.length();
            }
            for (j, l) in per_edge.iter().enumerate() {
                let exact = x.network.length(j);
                prop_assert!((l - exact).abs() <= 1e-10 * exact + 1e-9 * mesh.h_max(), "edge {}: {} vs {}", j, l, exact);
            }
            for (f, c) in x.face_class.iter().enumerate() {
                let fc = mesh.face(f);
                if *c == FaceClass::Mixed {
                    let p = fc.plus.unwrap();
                    prop_assert!(x.fractured[fc.minus] != x.fractured[p]);
                }
            }
        }
    }
}
