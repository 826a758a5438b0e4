//! Embedded Q1 finite elements for the matrix-fracture pressure problem.
//!
//! Fractures enter the bilinear form as line integrals of the tangential
//! gradient along clipped segments; the mesh never follows the fractures.

use rayon::prelude::*;

use crate::boundary::{BoundaryFaces, Condition};
use crate::error::{Error, Result};
use crate::fracture::IntersectionData;
use crate::geometry::{Point, GAUSS2};
use crate::linalg::{self, CsrMatrix, SolveStats, SolverOptions, TripletBuilder};
use crate::mesh::Mesh;

/// Symmetric 2x2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor {
    pub fn isotropic(k: f64) -> Tensor {
        Tensor { xx: k, xy: 0.0, yy: k }
    }

    pub fn apply(&self, v: Point) -> Point {
        Point::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// `n . (K n)`.
    pub fn normal_component(&self, n: Point) -> f64 {
        n.dot(self.apply(n))
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.xx * self.yy - self.xy * self.xy > 0.0 && self.xx.is_finite() && self.yy.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct Materials {
    pub kappa: Vec<Tensor>,
    pub porosity: Vec<f64>,
    /// Matrix source density per element (volume rate per area).
    pub source: Vec<f64>,
    /// Fracture source density per network edge (volume rate per length).
    pub fracture_source: Vec<f64>,
}

impl Materials {
    pub fn uniform(mesh: &Mesh, n_edges: usize, kappa: Tensor, porosity: f64) -> Materials {
        Materials {
            kappa: vec![kappa; mesh.n_elements()],
            porosity: vec![porosity; mesh.n_elements()],
            source: vec![0.0; mesh.n_elements()],
            fracture_source: vec![0.0; n_edges],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.kappa.iter().position(|k| !k.is_spd()) {
            return Err(Error::Material(format!("permeability of element {e} is not positive definite")));
        }
        if let Some(e) = self.porosity.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Material(format!("porosity of element {e} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Assembled system with the hanging nodes condensed out.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    /// Degree of freedom of each vertex; `None` for hanging vertices.
    pub dof_of_vertex: Vec<Option<usize>>,
    /// Full condensed matrix including Dirichlet degrees of freedom.
    pub full: CsrMatrix,
    pub full_rhs: Vec<f64>,
    /// Prescribed values per degree of freedom.
    pub dirichlet: Vec<Option<f64>>,
    /// Matrix and right-hand side in the free degrees of freedom.
    pub reduced: CsrMatrix,
    pub reduced_rhs: Vec<f64>,
    pub free_dofs: Vec<usize>,
}

impl PressureSystem {
    pub fn n_dof(&self) -> usize {
        self.full.nrows
    }

    /// Sparsity density `nnz / N_dof^2` of the condensed matrix.
    pub fn nnz_density(&self) -> f64 {
        self.full.nnz() as f64 / (self.n_dof() as f64).powi(2)
    }
}

/// Global degrees of freedom and weights of an element's four corners.
fn corner_map(mesh: &Mesh, dof: &[Option<usize>], e: usize) -> [[(usize, f64); 2]; 4] {
    let mut out = [[(usize::MAX, 0.0); 2]; 4];
    for (c, &v) in mesh.element(e).vertices.iter().enumerate() {
        out[c] = match mesh.hanging_parents(v) {
            Some([p, q]) => [(dof[p].unwrap(), 0.5), (dof[q].unwrap(), 0.5)],
            None => [(dof[v].unwrap(), 1.0), (usize::MAX, 0.0)],
        };
    }
    out
}

struct Local {
    map: [[(usize, f64); 2]; 4],
    k: [[f64; 4]; 4],
    f: [f64; 4],
}

pub fn assemble(mesh: &Mesh, x: &IntersectionData, mat: &Materials, bc: &BoundaryFaces) -> Result<PressureSystem> {
    mat.validate()?;
    let net = &x.network;
    if let Some(j) = net.edges.iter().position(|e| !(e.props.effective_permeability() > 0.0)) {
        return Err(Error::Material(format!(
            "fracture edge {j} has non-positive effective permeability"
        )));
    }
    let mut dof_of_vertex = vec![None; mesh.n_vertices()];
    let mut n_dof = 0;
    for (v, d) in dof_of_vertex.iter_mut().enumerate() {
        if !mesh.is_hanging(v) {
            *d = Some(n_dof);
            n_dof += 1;
        }
    }

    let locals: Vec<Local> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let el = mesh.element(e);
            let r = el.rect;
            let kap = mat.kappa[e];
            let mut k = [[0.0; 4]; 4];
            let mut f = [0.0; 4];
            for &(gx, wx) in &GAUSS2 {
                for &(gy, wy) in &GAUSS2 {
                    let p = Point::new(r.min.x + gx * r.width(), r.min.y + gy * r.height());
                    let w = wx * wy * r.area();
                    let g = el.shape_grad(p);
                    let n = el.shape(p);
                    for a in 0..4 {
                        let kg = kap.apply(g[a]);
                        for b in 0..4 {
                            k[a][b] += w * kg.dot(g[b]);
                        }
                        f[a] += w * mat.source[e] * n[a];
                    }
                }
            }
            for s in &x.segments[e] {
                let props = &net.edges[s.edge].props;
                let kg = props.effective_permeability();
                let t = net.tangent(s.edge);
                let len = s.length();
                for &(g, wg) in &GAUSS2 {
                    let p = s.a.lerp(s.b, g);
                    let grad = el.shape_grad(p);
                    let n = el.shape(p);
                    let w = wg * len;
                    for a in 0..4 {
                        let ga = grad[a].dot(t);
                        for b in 0..4 {
                            k[a][b] += w * kg * ga * grad[b].dot(t);
                        }
                        f[a] += w * mat.fracture_source[s.edge] * n[a];
                    }
                }
            }
            Local {
                map: corner_map(mesh, &dof_of_vertex, e),
                k,
                f,
            }
        })
        .collect();

    let mut trip = TripletBuilder::new(n_dof, n_dof);
    let mut rhs = vec![0.0; n_dof];
    for l in &locals {
        for a in 0..4 {
            for &(ga, wa) in &l.map[a] {
                if wa == 0.0 {
                    continue;
                }
                rhs[ga] += wa * l.f[a];
                for b in 0..4 {
                    for &(gb, wb) in &l.map[b] {
                        if wb != 0.0 {
                            trip.push(ga, gb, wa * wb * l.k[a][b]);
                        }
                    }
                }
            }
        }
    }

    // Neumann faces: +(u_N, v) with u_N = -(u . n)
    for &f in &bc.neumann {
        let Some(Condition::Neumann(un)) = bc.condition(f) else { continue };
        if un == 0.0 {
            continue;
        }
        let face = mesh.face(f);
        let e = face.minus;
        let el = mesh.element(e);
        let map = corner_map(mesh, &dof_of_vertex, e);
        for &(g, wg) in &GAUSS2 {
            let p = face.a.lerp(face.b, g);
            let n = el.shape(p);
            for a in 0..4 {
                for &(ga, wa) in &map[a] {
                    if wa != 0.0 {
                        rhs[ga] -= wa * wg * face.length() * un * n[a];
                    }
                }
            }
        }
    }

    // point terms at graph nodes on Neumann segments
    let domain = mesh.domain();
    let tol = 1e-9 * domain.diameter();
    for (i, &p) in net.nodes.iter().enumerate() {
        let Some(un) = bc.layout.neumann_at(p, &domain, tol) else {
            continue;
        };
        if un == 0.0 {
            continue;
        }
        let w: f64 = net.node_edges(i).iter().map(|&j| net.edges[j].props.aperture).sum();
        let Some(e) = mesh.locate(p) else { continue };
        let el = mesh.element(e);
        let n = el.shape(p);
        let map = corner_map(mesh, &dof_of_vertex, e);
        for a in 0..4 {
            for &(ga, wa) in &map[a] {
                if wa != 0.0 {
                    rhs[ga] -= wa * w * un * n[a];
                }
            }
        }
    }

    let full = trip.build();
    let dv = bc.dirichlet_vertices(mesh);
    let mut dirichlet = vec![None; n_dof];
    for (v, d) in dof_of_vertex.iter().enumerate() {
        if let Some(d) = d {
            dirichlet[*d] = dv[v];
        }
    }
    let (reduced, reduced_rhs, free_dofs) = eliminate(&full, &rhs, &dirichlet);
    Ok(PressureSystem {
        dof_of_vertex,
        full,
        full_rhs: rhs,
        dirichlet,
        reduced,
        reduced_rhs,
        free_dofs,
    })
}

/// Symmetric elimination of prescribed degrees of freedom.
fn eliminate(a: &CsrMatrix, b: &[f64], fixed: &[Option<f64>]) -> (CsrMatrix, Vec<f64>, Vec<usize>) {
    let n = a.nrows;
    let mut new_index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if fixed[i].is_none() {
            new_index[i] = free.len();
            free.push(i);
        }
    }
    let mut t = TripletBuilder::new(free.len(), free.len());
    let mut rhs = vec![0.0; free.len()];
    for (r, &i) in free.iter().enumerate() {
        rhs[r] = b[i];
        for (j, v) in a.row(i) {
            match fixed[j] {
                Some(g) => rhs[r] -= v * g,
                None => t.push(r, new_index[j], v),
            }
        }
    }
    (t.build(), rhs, free)
}

#[derive(Debug, Clone)]
pub struct PressureField {
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl PressureField {
    fn corner_values(&self, mesh: &Mesh, e: usize) -> [f64; 4] {
        mesh.element(e).vertices.map(|v| self.values[v])
    }

    pub fn value_in(&self, mesh: &Mesh, e: usize, p: Point) -> f64 {
        let c = self.corner_values(mesh, e);
        let n = mesh.element(e).shape(p);
        (0..4).map(|a| c[a] * n[a]).sum()
    }

    pub fn gradient_in(&self, mesh: &Mesh, e: usize, p: Point) -> Point {
        let c = self.corner_values(mesh, e);
        let g = mesh.element(e).shape_grad(p);
        (0..4).fold(Point::default(), |acc, a| acc + g[a] * c[a])
    }

    pub fn value(&self, mesh: &Mesh, p: Point) -> Option<f64> {
        mesh.locate(p).map(|e| self.value_in(mesh, e, p))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

pub fn solve(mesh: &Mesh, sys: &PressureSystem, opts: SolverOptions) -> Result<PressureField> {
    let (y, stats) = if sys.free_dofs.is_empty() {
        (
            Vec::new(),
            SolveStats {
                iterations: 0,
                rel_residual: 0.0,
            },
        )
    } else {
        linalg::solve_spd(&sys.reduced, &sys.reduced_rhs, opts)?
    };
    let mut dof_values: Vec<f64> = sys.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
    for (r, &i) in sys.free_dofs.iter().enumerate() {
        dof_values[i] = y[r];
    }
    let mut values = vec![0.0; mesh.n_vertices()];
    for (v, d) in sys.dof_of_vertex.iter().enumerate() {
        if let Some(d) = d {
            values[v] = dof_values[*d];
        }
    }
    for h in mesh.hanging() {
        values[h.vertex] = 0.5 * (values[h.parents[0]] + values[h.parents[1]]);
    }
    Ok(PressureField { values, stats })
}

/// 2-norm condition estimate of the system actually solved.
pub fn estimate_condition(sys: &PressureSystem) -> Result<f64> {
    linalg::estimate_condition(&sys.reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{classify_boundary, Layout};
    use crate::fracture::{intersect, EdgeProps, FractureNetwork, SegmentInput};
    use crate::geometry::Rect;
    use crate::mesh::Side;
    use proptest::prelude::*;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    fn flow_layout() -> Layout {
        Layout::sides(
            &unit(),
            [
                (Side::Left, Condition::Neumann(-1.0)),
                (Side::Right, Condition::Dirichlet(1.0)),
                (Side::Bottom, Condition::Neumann(0.0)),
                (Side::Top, Condition::Neumann(0.0)),
            ],
        )
    }

    fn run(mesh: &Mesh, net: &FractureNetwork, layout: &Layout) -> (PressureSystem, PressureField) {
        let x = intersect(mesh, net);
        let mat = Materials::uniform(mesh, x.network.n_edges(), Tensor::isotropic(1.0), 1.0);
        let bc = classify_boundary(mesh, layout).unwrap();
        let sys = assemble(mesh, &x, &mat, &bc).unwrap();
        let p = solve(mesh, &sys, SolverOptions::default()).unwrap();
        (sys, p)
    }

    fn vertical(x0: f64) -> SegmentInput {
        SegmentInput {
            a: Point::new(x0, 0.0),
            b: Point::new(x0, 1.0),
            props: EdgeProps {
                aperture: 1e-4,
                permeability: 1e4,
                porosity: 1.0,
            },
        }
    }

    #[test]
    fn affine_solution_is_reproduced() {
        let mesh = Mesh::uniform(5, 4, unit()).unwrap().refine(&[3, 7]).unwrap();
        let (_, p) = run(&mesh, &FractureNetwork::default(), &flow_layout());
        for (v, q) in mesh.vertices().iter().enumerate() {
            assert!((p.values[v] - (2.0 - q.x)).abs() < 1e-9, "{} vs {}", p.values[v], 2.0 - q.x);
        }
    }

    #[test]
    fn fracture_normal_to_flow_does_not_change_affine_solution() {
        let mesh = Mesh::uniform(5, 5, unit()).unwrap();
        let net = FractureNetwork::from_segments(&[vertical(0.5)], &unit()).unwrap();
        let (_, p) = run(&mesh, &net, &flow_layout());
        for (v, q) in mesh.vertices().iter().enumerate() {
            assert!((p.values[v] - (2.0 - q.x)).abs() < 1e-9);
        }
    }

    #[test]
    fn unfractured_matrix_is_laplace_stiffness() {
        let mesh = Mesh::uniform(3, 3, unit()).unwrap();
        let x = intersect(&mesh, &FractureNetwork::default());
        let mat = Materials::uniform(&mesh, 0, Tensor::isotropic(1.0), 1.0);
        let bc = classify_boundary(&mesh, &flow_layout()).unwrap();
        let sys = assemble(&mesh, &x, &mat, &bc).unwrap();
        assert!(sys.full.is_symmetric(1e-14));
        for i in 0..sys.n_dof() {
            let s: f64 = sys.full.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-13);
            // Q1 Laplacian on squares: diagonal 8/3 for interior vertices
            if sys.full.row(i).count() == 9 {
                assert!((sys.full.get(i, i) - 8.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn weak_fracture_limit_matches_unfractured() {
        let mesh = Mesh::uniform(4, 4, unit()).unwrap();
        let mut seg = vertical(0.3);
        seg.props.aperture = 1e-12;
        seg.props.permeability = 1.0;
        let net = FractureNetwork::from_segments(&[seg], &unit()).unwrap();
        let (a, _) = run(&mesh, &net, &flow_layout());
        let (b, _) = run(&mesh, &FractureNetwork::default(), &flow_layout());
        for i in 0..a.n_dof() {
            for (j, v) in a.full.row(i) {
                assert!((v - b.full.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hanging_vertices_follow_parents_and_system_is_spd() {
        let mesh = Mesh::uniform(3, 3, unit()).unwrap().refine(&[4]).unwrap();
        let seg = SegmentInput {
            a: Point::new(0.1, 0.2),
            b: Point::new(0.9, 0.7),
            props: EdgeProps {
                aperture: 1e-2,
                permeability: 1e3,
                porosity: 1.0,
            },
        };
        let net = FractureNetwork::from_segments(&[seg], &unit()).unwrap();
        let (sys, p) = run(&mesh, &net, &flow_layout());
        assert!(sys.reduced.is_symmetric(1e-12));
        assert_eq!(sys.n_dof(), mesh.n_vertices() - mesh.hanging().len());
        for h in mesh.hanging() {
            let avg = 0.5 * (p.values[h.parents[0]] + p.values[h.parents[1]]);
            assert!((p.values[h.vertex] - avg).abs() < 1e-14);
        }
        assert!(estimate_condition(&sys).unwrap() > 1.0);
    }

    #[test]
    fn non_spd_permeability_is_rejected() {
        let mesh = Mesh::uniform(2, 2, unit()).unwrap();
        let x = intersect(&mesh, &FractureNetwork::default());
        let mut mat = Materials::uniform(&mesh, 0, Tensor::isotropic(1.0), 1.0);
        mat.kappa[1] = Tensor { xx: 1.0, xy: 2.0, yy: 1.0 };
        let bc = classify_boundary(&mesh, &flow_layout()).unwrap();
        assert!(matches!(assemble(&mesh, &x, &mat, &bc), Err(Error::Material(_))));
    }

    #[test]
    fn q1_converges_at_second_order() {
        // -lap p = 2 pi^2 sin(pi x) sin(pi y), p = 0 on the boundary
        let pi = std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let mesh = Mesh::uniform(n, n, unit()).unwrap();
            let x = intersect(&mesh, &FractureNetwork::default());
            let mut mat = Materials::uniform(&mesh, 0, Tensor::isotropic(1.0), 1.0);
            // element-wise mean of the source keeps the test independent of quadrature in f
            for (e, el) in mesh.elements().iter().enumerate() {
                let r = el.rect;
                let ix = ((pi * r.min.x).cos() - (pi * r.max.x).cos()) / (pi * r.width());
                let iy = ((pi * r.min.y).cos() - (pi * r.max.y).cos()) / (pi * r.height());
                mat.source[e] = 2.0 * pi * pi * ix * iy;
            }
            let bc = classify_boundary(&mesh, &Layout::all_dirichlet(&unit(), 0.0)).unwrap();
            let sys = assemble(&mesh, &x, &mat, &bc).unwrap();
            let p = solve(&mesh, &sys, SolverOptions::default()).unwrap();
            let mut e2 = 0.0;
            for (e, el) in mesh.elements().iter().enumerate() {
                let r = el.rect;
                for &(gx, wx) in &GAUSS2 {
                    for &(gy, wy) in &GAUSS2 {
                        let q = Point::new(r.min.x + gx * r.width(), r.min.y + gy * r.height());
                        let d = p.value_in(&mesh, e, q) - (pi * q.x).sin() * (pi * q.y).sin();
                        e2 += wx * wy * r.area() * d * d;
                    }
                }
            }
            errs.push(e2.sqrt());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio / 4.0 - 1.0).abs() < 0.15, "ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn affine_fields_exact_on_refined_meshes(
            gx in -2.0f64..2.0, gy in -2.0f64..2.0, c in -1.0f64..1.0,
            picks in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..5),
        ) {
            let mut mesh = Mesh::uniform(3, 3, unit()).unwrap();
            for (u, v) in picks {
                let e = mesh.locate(Point::new(u, v)).unwrap();
                mesh = mesh.refine(&[e]).unwrap();
            }
            // u = -grad p gives u.n on every side; the left trace is pinned below
            let exact = |q: Point| c + gx * q.x + gy * q.y;
            let mut layout = Layout::default();
            layout.segments.push(crate::boundary::Segment { side: Side::Bottom, from: 0.0, to: 1.0, condition: Condition::Neumann(gy) });
            layout.segments.push(crate::boundary::Segment { side: Side::Top, from: 0.0, to: 1.0, condition: Condition::Neumann(-gy) });
            layout.segments.push(crate::boundary::Segment { side: Side::Left, from: 0.0, to: 1.0, condition: Condition::Neumann(gx) });
            layout.segments.push(crate::boundary::Segment { side: Side::Right, from: 0.0, to: 1.0, condition: Condition::Neumann(-gx) });
            let x = intersect(&mesh, &FractureNetwork::default());
            let mat = Materials::uniform(&mesh, 0, Tensor::isotropic(1.0), 1.0);
            let bc = classify_boundary(&mesh, &layout).unwrap();
            let mut sys = assemble(&mesh, &x, &mat, &bc).unwrap();
            let mut fixed = vec![None; sys.n_dof()];
            for (v, q) in mesh.vertices().iter().enumerate() {
                if q.x == 0.0 {
                    if let Some(d) = sys.dof_of_vertex[v] { fixed[d] = Some(exact(*q)); }
                }
            }
            let (r, rhs, free) = eliminate(&sys.full, &sys.full_rhs, &fixed);
            sys.reduced = r;
            sys.reduced_rhs = rhs;
            sys.free_dofs = free;
            sys.dirichlet = fixed;
            let p = solve(&mesh, &sys, SolverOptions { rel_tol: 1e-12, max_iter: 10_000 }).unwrap();
            for (v, q) in mesh.vertices().iter().enumerate() {
                prop_assert!((p.values[v] - exact(*q)).abs() < 1e-9);
            }
        }
    }
}
