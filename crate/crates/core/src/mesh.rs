//! Quadtree meshes of axis-aligned rectangles over a rectilinear base grid.
//!
//! Cells are addressed by `(level, i, j)` keys, vertices by integer lattice
//! coordinates at the finest representable level, so refinement, neighbor
//! lookup and provenance are pure key arithmetic. Faces are stored at the
//! finest level: a coarse side carrying a hanging node appears as two faces.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Finest lattice level for vertex coordinates.
pub const LATTICE_LEVEL: u8 = 24;
const LATTICE: u64 = 1 << LATTICE_LEVEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> Point {
        match self {
            Side::Bottom => Point::new(0.0, -1.0),
            Side::Right => Point::new(1.0, 0.0),
            Side::Top => Point::new(0.0, 1.0),
            Side::Left => Point::new(-1.0, 0.0),
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Side::Bottom | Side::Top)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

impl CellKey {
    pub fn parent(self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey {
            level: self.level - 1,
            i: self.i / 2,
            j: self.j / 2,
        })
    }

    pub fn ancestor(self, level: u8) -> Option<CellKey> {
        (level <= self.level).then(|| {
            let s = self.level - level;
            CellKey {
                level,
                i: self.i >> s,
                j: self.j >> s,
            }
        })
    }

    /// Children in z-order: SW, SE, NW, NE.
    pub fn children(self) -> [CellKey; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            CellKey { level: l, i, j },
            CellKey { level: l, i: i + 1, j },
            CellKey { level: l, i, j: j + 1 },
            CellKey {
                level: l,
                i: i + 1,
                j: j + 1,
            },
        ]
    }

    fn lattice_span(self) -> (u64, u64, u64, u64) {
        let s = LATTICE_LEVEL - self.level;
        let x0 = (self.i as u64) << s;
        let y0 = (self.j as u64) << s;
        (x0, x0 + (1 << s), y0, y0 + (1 << s))
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    pub key: CellKey,
    /// Corner vertices counterclockwise from the lower left.
    pub vertices: [usize; 4],
    pub rect: Rect,
}

impl Element {
    pub fn level(&self) -> u8 {
        self.key.level
    }

    pub fn area(&self) -> f64 {
        self.rect.area()
    }

    pub fn center(&self) -> Point {
        self.rect.center()
    }

    /// Element size `h_K`: the longer side.
    pub fn h(&self) -> f64 {
        self.rect.width().max(self.rect.height())
    }

    /// Q1 shape function values at a point, in corner order.
    pub fn shape(&self, p: Point) -> [f64; 4] {
        let xi = (p.x - self.rect.min.x) / self.rect.width();
        let eta = (p.y - self.rect.min.y) / self.rect.height();
        [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
    }

    /// Q1 shape function gradients at a point, in corner order.
    pub fn shape_grad(&self, p: Point) -> [Point; 4] {
        let (hx, hy) = (self.rect.width(), self.rect.height());
        let xi = (p.x - self.rect.min.x) / hx;
        let eta = (p.y - self.rect.min.y) / hy;
        [
            Point::new(-(1.0 - eta) / hx, -(1.0 - xi) / hy),
            Point::new((1.0 - eta) / hx, -xi / hy),
            Point::new(eta / hx, xi / hy),
            Point::new(-eta / hx, (1.0 - xi) / hy),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    pub a: Point,
    pub b: Point,
    /// Unit normal: outward on the boundary, from `minus` towards `plus` inside.
    pub normal: Point,
    pub minus: usize,
    pub plus: Option<usize>,
    pub side: Option<Side>,
}

impl Face {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Point {
        self.a.lerp(self.b, 0.5)
    }

    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }

    pub fn is_horizontal(&self) -> bool {
        self.normal.x == 0.0
    }

    pub fn other(&self, k: usize) -> Option<usize> {
        if k == self.minus {
            self.plus
        } else {
            Some(self.minus)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HangingConstraint {
    pub vertex: usize,
    pub parents: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    xs: Vec<f64>,
    ys: Vec<f64>,
    domain: Rect,
    vertices: Vec<Point>,
    elements: Vec<Element>,
    faces: Vec<Face>,
    element_faces: Vec<Vec<(usize, f64)>>,
    hanging: Vec<HangingConstraint>,
    hanging_of: HashMap<usize, [usize; 2]>,
    by_key: HashMap<CellKey, usize>,
    vertex_elements: Vec<Vec<usize>>,
}

fn check_axis(v: &[f64], name: &str) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::invalid(format!("{name}: at least one cell required")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "{name}: coordinates must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl Mesh {
    pub fn uniform(nx: usize, ny: usize, domain: Rect) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("mesh counts must be positive, got {nx}x{ny}")));
        }
        if !(domain.width() > 0.0 && domain.height() > 0.0) {
            return Err(Error::invalid("degenerate domain rectangle"));
        }
        let xs = (0..=nx)
            .map(|k| {
                if k == nx {
                    domain.max.x
                } else {
                    domain.min.x + domain.width() * k as f64 / nx as f64
                }
            })
            .collect();
        let ys = (0..=ny)
            .map(|k| {
                if k == ny {
                    domain.max.y
                } else {
                    domain.min.y + domain.height() * k as f64 / ny as f64
                }
            })
            .collect();
        Mesh::rectilinear(xs, ys)
    }

    /// Tensor-product base grid with the given breakpoints.
    pub fn rectilinear(xs: Vec<f64>, ys: Vec<f64>) -> Result<Mesh> {
        check_axis(&xs, "x breakpoints")?;
        check_axis(&ys, "y breakpoints")?;
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        if nx as u64 >= (1 << 31) || ny as u64 >= (1 << 31) {
            return Err(Error::invalid("base grid too large"));
        }
        let mut leaves = HashSet::with_capacity(nx * ny);
        for j in 0..ny as u32 {
            for i in 0..nx as u32 {
                leaves.insert(CellKey { level: 0, i, j });
            }
        }
        Ok(Mesh::from_leaves(xs, ys, leaves))
    }

    fn nx(&self) -> usize {
        self.xs.len() - 1
    }

    fn ny(&self) -> usize {
        self.ys.len() - 1
    }

    fn coord(axis: &[f64], lat: u64) -> f64 {
        let n = axis.len() - 1;
        let b = (lat >> LATTICE_LEVEL) as usize;
        if b >= n {
            return axis[n];
        }
        let off = (lat & (LATTICE - 1)) as f64 / LATTICE as f64;
        if off == 0.0 {
            axis[b]
        } else {
            axis[b] + (axis[b + 1] - axis[b]) * off
        }
    }

    fn in_bounds(nx: usize, ny: usize, k: CellKey) -> bool {
        ((k.i as u64) >> k.level) < nx as u64 && ((k.j as u64) >> k.level) < ny as u64
    }

    fn order_key(k: CellKey) -> (u64, u64, u64) {
        let (x0, _, y0, _) = k.lattice_span();
        let (bi, bj) = (x0 >> LATTICE_LEVEL, y0 >> LATTICE_LEVEL);
        let (lx, ly) = (x0 & (LATTICE - 1), y0 & (LATTICE - 1));
        let mut z = 0u64;
        for b in 0..LATTICE_LEVEL as u64 {
            z |= ((lx >> b) & 1) << (2 * b);
            z |= ((ly >> b) & 1) << (2 * b + 1);
        }
        (bj, bi, z)
    }

    fn neighbor_key(k: CellKey, side: Side) -> Option<CellKey> {
        let (i, j) = (k.i as i64, k.j as i64);
        let (ni, nj) = match side {
            Side::Bottom => (i, j - 1),
            Side::Right => (i + 1, j),
            Side::Top => (i, j + 1),
            Side::Left => (i - 1, j),
        };
        (ni >= 0 && nj >= 0).then_some(CellKey {
            level: k.level,
            i: ni as u32,
            j: nj as u32,
        })
    }

    /// The two children of `k` adjacent to its given side.
    fn children_on_side(k: CellKey, side: Side) -> [CellKey; 2] {
        let c = k.children();
        match side {
            Side::Bottom => [c[0], c[1]],
            Side::Right => [c[1], c[3]],
            Side::Top => [c[2], c[3]],
            Side::Left => [c[0], c[2]],
        }
    }

    fn from_leaves(xs: Vec<f64>, ys: Vec<f64>, leaves: HashSet<CellKey>) -> Mesh {
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        let mut keys: Vec<CellKey> = leaves.iter().copied().collect();
        keys.sort_unstable_by_key(|&k| Mesh::order_key(k));
        let by_key: HashMap<CellKey, usize> = keys.iter().enumerate().map(|(e, &k)| (k, e)).collect();

        let mut vertex_index: HashMap<(u64, u64), usize> = HashMap::with_capacity(keys.len() + nx + ny + 1);
        let mut vertices = Vec::new();
        let mut vertex_keys = Vec::new();
        let mut elements = Vec::with_capacity(keys.len());
        for &k in &keys {
            let (x0, x1, y0, y1) = k.lattice_span();
            let lat = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
            let mut vs = [0usize; 4];
            for (c, &l) in lat.iter().enumerate() {
                vs[c] = *vertex_index.entry(l).or_insert_with(|| {
                    vertices.push(Point::new(Mesh::coord(&xs, l.0), Mesh::coord(&ys, l.1)));
                    vertex_keys.push(l);
                    vertices.len() - 1
                });
            }
            let rect = Rect::new(
                Mesh::coord(&xs, x0),
                Mesh::coord(&xs, x1),
                Mesh::coord(&ys, y0),
                Mesh::coord(&ys, y1),
            );
            elements.push(Element {
                key: k,
                vertices: vs,
                rect,
            });
        }

        let mut faces = Vec::new();
        let mut element_faces = vec![Vec::with_capacity(4); elements.len()];
        let mut hanging = Vec::new();
        let mut hanging_of = HashMap::new();
        let mut vertex_elements = vec![Vec::new(); vertices.len()];
        for (e, el) in elements.iter().enumerate() {
            for &v in &el.vertices {
                vertex_elements[v].push(e);
            }
        }
        for (e, el) in elements.iter().enumerate() {
            let k = el.key;
            for side in Side::ALL {
                let (va, vb) = match side {
                    Side::Bottom => (0, 1),
                    Side::Right => (1, 2),
                    Side::Top => (3, 2),
                    Side::Left => (0, 3),
                };
                let (ia, ib) = (el.vertices[va], el.vertices[vb]);
                let n_out = side.outward_normal();
                let nk = Mesh::neighbor_key(k, side).filter(|&nk| Mesh::in_bounds(nx, ny, nk));
                let Some(nk) = nk else {
                    let f = faces.len();
                    faces.push(Face {
                        vertices: [ia, ib],
                        a: vertices[ia],
                        b: vertices[ib],
                        normal: n_out,
                        minus: e,
                        plus: None,
                        side: Some(side),
                    });
                    element_faces[e].push((f, 1.0));
                    continue;
                };
                let neighbor = if let Some(&o) = by_key.get(&nk) {
                    Some(o)
                } else {
                    nk.parent().and_then(|p| by_key.get(&p).copied())
                };
                match neighbor {
                    Some(o) if by_key.get(&nk) == Some(&o) && o < e => continue,
                    Some(o) => {
                        // same level with higher id, or coarser neighbor
                        let (minus, plus) = (e.min(o), e.max(o));
                        let normal = if minus == e { n_out } else { -n_out };
                        let f = faces.len();
                        faces.push(Face {
                            vertices: [ia, ib],
                            a: vertices[ia],
                            b: vertices[ib],
                            normal,
                            minus,
                            plus: Some(plus),
                            side: None,
                        });
                        let s = if minus == e { 1.0 } else { -1.0 };
                        element_faces[e].push((f, s));
                        element_faces[o].push((f, -s));
                    }
                    None => {
                        // finer neighbors: the side midpoint hangs on this side
                        let fine = Mesh::children_on_side(nk, side.opposite());
                        debug_assert!(fine.iter().all(|c| by_key.contains_key(c)), "2:1 balance violated");
                        let (la, lb) = (vertex_keys[ia], vertex_keys[ib]);
                        let mid = ((la.0 + lb.0) / 2, (la.1 + lb.1) / 2);
                        if let Some(&m) = vertex_index.get(&mid) {
                            if let std::collections::hash_map::Entry::Vacant(en) = hanging_of.entry(m) {
                                en.insert([ia, ib]);
                                hanging.push(HangingConstraint {
                                    vertex: m,
                                    parents: [ia, ib],
                                });
                                vertex_elements[m].push(e);
                            }
                        }
                    }
                }
            }
        }
        let domain = Rect::new(xs[0], xs[nx], ys[0], ys[ny]);
        Mesh {
            xs,
            ys,
            domain,
            vertices,
            elements,
            faces,
            element_faces,
            hanging,
            hanging_of,
            by_key,
            vertex_elements,
        }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn base_breakpoints(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &Element {
        &self.elements[e]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    /// Faces of an element with the sign `n_K . n_F`.
    pub fn element_faces(&self, e: usize) -> &[(usize, f64)] {
        &self.element_faces[e]
    }

    pub fn hanging(&self) -> &[HangingConstraint] {
        &self.hanging
    }

    pub fn hanging_parents(&self, v: usize) -> Option<[usize; 2]> {
        self.hanging_of.get(&v).copied()
    }

    pub fn is_hanging(&self, v: usize) -> bool {
        self.hanging_of.contains_key(&v)
    }

    /// Elements having `v` as a corner or (for hanging vertices) on a side.
    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    pub fn element_by_key(&self, k: CellKey) -> Option<usize> {
        self.by_key.get(&k).copied()
    }

    pub fn max_level(&self) -> u8 {
        self.elements.iter().map(|e| e.key.level).max().unwrap_or(0)
    }

    pub fn h_min(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.rect.width().min(e.rect.height()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.elements.iter().map(Element::h).fold(0.0, f64::max)
    }

    /// Face neighbors of an element, one entry per finest face.
    pub fn neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        self.element_faces[e].iter().filter_map(move |&(f, _)| self.faces[f].other(e))
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(Element::area).sum()
    }

    /// Element containing `p`; points on shared sides resolve to the element
    /// whose half-open box `[x0, x1) x [y0, y1)` contains them.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let (nx, ny) = (self.nx(), self.ny());
        let tol = 1e-12 * self.domain.diameter();
        if !self.domain.contains(p, tol) {
            return None;
        }
        let find = |axis: &[f64], v: f64, n: usize| -> usize {
            let k = axis.partition_point(|&a| a <= v);
            k.saturating_sub(1).min(n - 1)
        };
        let bi = find(&self.xs, p.x, nx);
        let bj = find(&self.ys, p.y, ny);
        let fx = ((p.x - self.xs[bi]) / (self.xs[bi + 1] - self.xs[bi])).clamp(0.0, 1.0 - f64::EPSILON);
        let fy = ((p.y - self.ys[bj]) / (self.ys[bj + 1] - self.ys[bj])).clamp(0.0, 1.0 - f64::EPSILON);
        for level in 0..=LATTICE_LEVEL {
            let s = (1u64 << level) as f64;
            let key = CellKey {
                level,
                i: ((bi as u64) << level) as u32 + (fx * s) as u32,
                j: ((bj as u64) << level) as u32 + (fy * s) as u32,
            };
            if let Some(&e) = self.by_key.get(&key) {
                return Some(e);
            }
        }
        None
    }

    /// Element of `coarse` that contains element `e` of this (nested, finer) mesh.
    pub fn ancestor_in(&self, e: usize, coarse: &Mesh) -> Option<usize> {
        let k = self.elements[e].key;
        (0..=k.level).rev().find_map(|l| coarse.element_by_key(k.ancestor(l)?))
    }

    /// Refine flagged elements into four children, cascading further
    /// refinement to keep face neighbors within one level of each other.
    pub fn refine(&self, flags: &[usize]) -> Result<Mesh> {
        if let Some(&bad) = flags.iter().find(|&&e| e >= self.elements.len()) {
            return Err(Error::invalid(format!(
                "refine: unknown element id {bad} (mesh has {})",
                self.elements.len()
            )));
        }
        if flags.is_empty() {
            return Ok(self.clone());
        }
        let base_bits = 64 - (self.nx().max(self.ny()) as u64).leading_zeros() as u8;
        let max_level = LATTICE_LEVEL.min(31 - base_bits);
        let (nx, ny) = (self.nx(), self.ny());
        let mut leaves: HashSet<CellKey> = self.by_key.keys().copied().collect();
        let mut queue: Vec<CellKey> = Vec::new();
        let split = |k: CellKey, leaves: &mut HashSet<CellKey>, queue: &mut Vec<CellKey>| -> Result<()> {
            if k.level >= max_level {
                return Err(Error::invalid(format!("refine: maximum level {max_level} reached")));
            }
            if leaves.remove(&k) {
                for c in k.children() {
                    leaves.insert(c);
                    queue.push(c);
                }
            }
            Ok(())
        };
        let mut sorted: Vec<usize> = flags.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for e in sorted {
            split(self.elements[e].key, &mut leaves, &mut queue)?;
        }
        while let Some(k) = queue.pop() {
            if !leaves.contains(&k) || k.level < 2 {
                continue;
            }
            for side in Side::ALL {
                let Some(nk) = Mesh::neighbor_key(k, side).filter(|&nk| Mesh::in_bounds(nx, ny, nk)) else {
                    continue;
                };
                // a leaf two or more levels coarser must be split
                let mut anc = nk.ancestor(k.level - 2);
                while let Some(a) = anc {
                    if leaves.contains(&a) {
                        split(a, &mut leaves, &mut queue)?;
                        break;
                    }
                    anc = a.parent();
                }
            }
        }
        Ok(Mesh::from_leaves(self.xs.clone(), self.ys.clone(), leaves))
    }

    /// One round of uniform refinement.
    pub fn refine_all(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.n_elements()).collect();
        self.refine(&all)
    }
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Right => Side::Left,
            Side::Top => Side::Bottom,
            Side::Left => Side::Right,
        }
    }
}
