//! Upwind finite-volume transport with implicit Euler time stepping.
//!
//! One concentration per element: the fracture concentration on fractured
//! elements, the matrix concentration elsewhere. The flux is fixed in time,
//! so the system is assembled and factorized once. The factorization follows
//! the donor graph: strongly connected blocks are solved in upstream order.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};
use crate::flux::FaceFlux;
use crate::fracture::{FaceClass, IntersectionData};
use crate::geometry::{Point, GAUSS3};
use crate::linalg::{bicgstab, CsrMatrix, SolverOptions, TripletBuilder};
use crate::mesh::Mesh;
use crate::pressure::Materials;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    pub dt: f64,
    /// Matrix inflow concentration.
    pub c_b: f64,
    /// Fracture inflow concentration.
    pub c_gb: f64,
    /// Concentration of injected fluid at sources.
    pub c_w: f64,
}

/// Per-element data the scheme needs, independent of how it was derived.
#[derive(Debug, Clone)]
pub struct TransportInput {
    /// Mass coefficient (pore volume) per element.
    pub mass: Vec<f64>,
    /// Positive and negative parts of the element source integrals.
    pub source_in: Vec<f64>,
    pub source_out: Vec<f64>,
    /// Boundary faces that carry fracture inflow.
    pub fracture_face: Vec<bool>,
}

impl TransportInput {
    /// Embedded model: `phi |K|` on matrix elements, `sum w phi_G |K cap G|` on fractured ones.
    pub fn embedded(mesh: &Mesh, x: &IntersectionData, mat: &Materials) -> TransportInput {
        let ne = mesh.n_elements();
        let mut mass = vec![0.0; ne];
        let mut source_in = vec![0.0; ne];
        let mut source_out = vec![0.0; ne];
        for e in 0..ne {
            if x.fractured[e] {
                mass[e] = x.fracture_pore_volume(e);
                for s in &x.segments[e] {
                    let q = mat.fracture_source[s.edge] * s.length();
                    source_in[e] += q.max(0.0);
                    source_out[e] += q.min(0.0);
                }
            } else {
                let area = mesh.element(e).area();
                mass[e] = mat.porosity[e] * area;
                let q = mat.source[e] * area;
                source_in[e] = q.max(0.0);
                source_out[e] = q.min(0.0);
            }
        }
        let fracture_face = (0..mesh.n_faces())
            .map(|f| x.face_class[f] == FaceClass::Boundary && !x.crossings[f].is_empty())
            .collect();
        TransportInput {
            mass,
            source_in,
            source_out,
            fracture_face,
        }
    }

    /// Equi-dimensional model: every element is a matrix element.
    pub fn continuum(mesh: &Mesh, porosity: &[f64], source: &[f64]) -> TransportInput {
        let area: Vec<f64> = mesh.elements().iter().map(|e| e.area()).collect();
        TransportInput {
            mass: porosity.iter().zip(&area).map(|(p, a)| p * a).collect(),
            source_in: source.iter().zip(&area).map(|(q, a)| (q * a).max(0.0)).collect(),
            source_out: source.iter().zip(&area).map(|(q, a)| (q * a).min(0.0)).collect(),
            fracture_face: vec![false; mesh.n_faces()],
        }
    }
}

enum Block {
    Single(usize),
    Dense {
        cells: Vec<usize>,
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
    Iterative {
        cells: Vec<usize>,
        local: CsrMatrix,
    },
}

const DENSE_LIMIT: usize = 512;

pub struct TransportSystem {
    pub params: TransportParams,
    input: TransportInput,
    /// Rate operator without the mass term.
    rate: CsrMatrix,
    /// Constant right-hand side rate: boundary inflow and sources.
    inflow: Vec<f64>,
    /// Boundary outflow rate coefficient per element.
    outflow: Vec<f64>,
    matrix: CsrMatrix,
    blocks: Vec<Block>,
    block_of: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBalance {
    /// Change of stored tracer mass over the step.
    pub storage: f64,
    /// (inflow - outflow + source) * dt.
    pub net_inflow: f64,
    /// (inflow + outflow + |source|) * dt, the tracer moved during the step.
    pub throughput: f64,
}

impl StepBalance {
    pub fn relative_error(&self) -> f64 {
        let scale = self.storage.abs().max(self.throughput);
        if scale == 0.0 {
            0.0
        } else {
            (self.storage - self.net_inflow).abs() / scale
        }
    }
}

impl TransportSystem {
    pub fn new(mesh: &Mesh, flux: &FaceFlux, input: TransportInput, params: TransportParams) -> Result<TransportSystem> {
        if !(params.dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {}", params.dt)));
        }
        if let Some(e) = input.mass.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::config(format!(
                "element {e} has non-positive mass coefficient {}",
                input.mass[e]
            )));
        }
        let ne = mesh.n_elements();
        let mut t = TripletBuilder::new(ne, ne);
        let mut inflow = vec![0.0; ne];
        let mut outflow = vec![0.0; ne];
        for (f, face) in mesh.faces().iter().enumerate() {
            let q = flux.q[f];
            if q == 0.0 {
                continue;
            }
            match face.plus {
                None => {
                    let e = face.minus;
                    if q > 0.0 {
                        outflow[e] += q;
                        t.push(e, e, q);
                    } else {
                        let c = if input.fracture_face[f] { params.c_gb } else { params.c_b };
                        inflow[e] += -q * c;
                    }
                }
                Some(p) => {
                    let (donor, receiver) = if q > 0.0 { (face.minus, p) } else { (p, face.minus) };
                    let r = q.abs();
                    t.push(donor, donor, r);
                    t.push(receiver, donor, -r);
                }
            }
        }
        for e in 0..ne {
            inflow[e] += input.source_in[e] * params.c_w;
            if input.source_out[e] != 0.0 {
                t.push(e, e, -input.source_out[e]);
            }
        }
        let rate = t.build();
        let mut sys = TransportSystem {
            params,
            input,
            rate,
            inflow,
            outflow,
            matrix: CsrMatrix::identity(0),
            blocks: Vec::new(),
            block_of: Vec::new(),
        };
        sys.factorize()?;
        Ok(sys)
    }

    /// Same operator with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<TransportSystem> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let mut sys = TransportSystem {
            params: TransportParams { dt, ..self.params },
            input: self.input.clone(),
            rate: self.rate.clone(),
            inflow: self.inflow.clone(),
            outflow: self.outflow.clone(),
            matrix: CsrMatrix::identity(0),
            blocks: Vec::new(),
            block_of: Vec::new(),
        };
        sys.factorize()?;
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.input.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.input.mass
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn factorize(&mut self) -> Result<()> {
        let n = self.n();
        let dt = self.params.dt;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, self.input.mass[i] / dt);
            for (j, v) in self.rate.row(i) {
                t.push(i, j, v);
            }
        }
        self.matrix = t.build();

        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, self.matrix.nnz());
        for _ in 0..n {
            g.add_node(());
        }
        for i in 0..n {
            for (j, v) in self.matrix.row(i) {
                if j != i && v != 0.0 {
                    g.add_edge(NodeIndex::new(j), NodeIndex::new(i), ());
                }
            }
        }
        // tarjan_scc yields components in reverse topological order
        let mut sccs = tarjan_scc(&g);
        sccs.reverse();
        self.blocks.clear();
        self.block_of = vec![0; n];
        for (b, comp) in sccs.iter().enumerate() {
            let mut cells: Vec<usize> = comp.iter().map(|ix| ix.index()).collect();
            cells.sort_unstable();
            for &c in &cells {
                self.block_of[c] = b;
            }
            let block = if cells.len() == 1 {
                Block::Single(cells[0])
            } else {
                let local_index = |c: usize| cells.binary_search(&c).ok();
                if cells.len() <= DENSE_LIMIT {
                    let m = cells.len();
                    let mut d = DMatrix::zeros(m, m);
                    for (r, &i) in cells.iter().enumerate() {
                        for (j, v) in self.matrix.row(i) {
                            if let Some(c) = local_index(j) {
                                d[(r, c)] = v;
                            }
                        }
                    }
                    Block::Dense { cells, lu: d.lu() }
                } else {
                    let mut lt = TripletBuilder::new(cells.len(), cells.len());
                    for (r, &i) in cells.iter().enumerate() {
                        for (j, v) in self.matrix.row(i) {
                            if let Some(c) = local_index(j) {
                                lt.push(r, c, v);
                            }
                        }
                    }
                    Block::Iterative { cells, local: lt.build() }
                }
            };
            self.blocks.push(block);
        }
        Ok(())
    }

    /// Solve `A c = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut c = vec![0.0; self.n()];
        let upstream = |i: usize, c: &[f64], own: usize| -> f64 {
            let mut s = b[i];
            for (j, v) in self.matrix.row(i) {
                if self.block_of[j] != own {
                    s -= v * c[j];
                }
            }
            s
        };
        for (bi, block) in self.blocks.iter().enumerate() {
            match block {
                Block::Single(i) => {
                    let i = *i;
                    c[i] = upstream(i, &c, bi) / self.matrix.get(i, i);
                }
                Block::Dense { cells, lu } => {
                    let rhs = DVector::from_iterator(cells.len(), cells.iter().map(|&i| upstream(i, &c, bi)));
                    let x = lu.solve(&rhs).ok_or_else(|| Error::Numerical {
                        message: "singular transport block".into(),
                        residual: f64::NAN,
                    })?;
                    for (r, &i) in cells.iter().enumerate() {
                        c[i] = x[r];
                    }
                }
                Block::Iterative { cells, local } => {
                    let rhs: Vec<f64> = cells.iter().map(|&i| upstream(i, &c, bi)).collect();
                    let mut x: Vec<f64> = cells.iter().map(|&i| c[i]).collect();
                    bicgstab(
                        local,
                        &rhs,
                        &mut x,
                        SolverOptions {
                            rel_tol: 1e-12,
                            max_iter: 10_000,
                        },
                    )?;
                    for (r, &i) in cells.iter().enumerate() {
                        c[i] = x[r];
                    }
                }
            }
        }
        Ok(c)
    }

    pub fn step(&self, c_old: &[f64]) -> Result<Vec<f64>> {
        let dt = self.params.dt;
        let b: Vec<f64> = (0..self.n()).map(|i| self.input.mass[i] / dt * c_old[i] + self.inflow[i]).collect();
        let c = self.solve(&b)?;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm > 0.0 {
            let r = self.matrix.residual_norm(&c, &b) / bnorm;
            if r > 1e-10 {
                return Err(Error::Numerical {
                    message: "transport step residual above tolerance".into(),
                    residual: r,
                });
            }
        }
        Ok(c)
    }

    pub fn stored_mass(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.input.mass).map(|(c, m)| c * m).sum()
    }

    pub fn balance(&self, c_old: &[f64], c_new: &[f64]) -> StepBalance {
        let storage = self.stored_mass(c_new) - self.stored_mass(c_old);
        let inflow: f64 = self.inflow.iter().sum();
        let mut rate = inflow;
        let mut gross = inflow;
        for i in 0..self.n() {
            let out = self.outflow[i] * c_new[i];
            let sink = self.input.source_out[i] * c_new[i];
            rate += sink - out;
            gross += out.abs() + sink.abs();
        }
        StepBalance {
            storage,
            net_inflow: rate * self.params.dt,
            throughput: gross * self.params.dt,
        }
    }
}

/// Cell averages of `c0` on matrix elements and arc-length averages of `cg0`
/// along the fracture on fractured elements.
pub fn init(mesh: &Mesh, x: Option<&IntersectionData>, c0: &dyn Fn(Point) -> f64, cg0: &dyn Fn(Point) -> f64) -> Vec<f64> {
    (0..mesh.n_elements())
        .map(|e| {
            if let Some(x) = x.filter(|x| x.fractured[e]) {
                let mut s = 0.0;
                let mut len = 0.0;
                for seg in &x.segments[e] {
                    let l = seg.length();
                    for &(g, w) in &GAUSS3 {
                        s += w * l * cg0(seg.a.lerp(seg.b, g));
                    }
                    len += l;
                }
                s / len
            } else {
                let r = mesh.element(e).rect;
                let mut s = 0.0;
                for &(gx, wx) in &GAUSS3 {
                    for &(gy, wy) in &GAUSS3 {
                        s += wx * wy * c0(Point::new(r.min.x + gx * r.width(), r.min.y + gy * r.height()));
                    }
                }
                s
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    /// Stop early once `max |c^{n+1} - c^n| <= tol`.
    pub steady_tol: Option<f64>,
    pub output_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub steps: usize,
    pub t_final: f64,
    pub field: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub steady_at: Option<f64>,
    pub max_balance_error: f64,
    pub min_value: f64,
    pub max_value: f64,
}

/// Advance from `c0` to `t_end`; the observer sees every new field.
pub fn run(
    sys: &TransportSystem,
    c0: Vec<f64>,
    opts: &RunOptions,
    mut observer: impl FnMut(usize, f64, &[f64]) -> Result<()>,
) -> Result<RunResult> {
    let dt = sys.params.dt;
    let full = ((opts.t_end / dt) * (1.0 + 1e-12)).floor() as usize;
    let rest = opts.t_end - full as f64 * dt;
    let tail = if rest > 1e-9 * dt { Some(sys.with_dt(rest)?) } else { None };
    let n_steps = full + tail.is_some() as usize;

    let (mut lo, mut hi) = c0
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut c = c0;
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = opts.output_times.clone();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();
    while let Some(&to) = pending.peek() {
        if to > 0.0 {
            break;
        }
        snapshots.push((0.0, c.clone()));
        pending.next();
    }
    let mut steady_at = None;
    let mut max_err: f64 = 0.0;
    let mut steps = 0;
    for k in 0..n_steps {
        let s = if k == full { tail.as_ref().unwrap() } else { sys };
        let next = s.step(&c)?;
        max_err = max_err.max(s.balance(&c, &next).relative_error());
        t = if k == full { opts.t_end } else { (k + 1) as f64 * dt };
        steps += 1;
        let change = c.iter().zip(&next).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        c = next;
        for &v in &c {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        observer(steps, t, &c)?;
        while let Some(&to) = pending.peek() {
            if to > t + 1e-9 * dt {
                break;
            }
            snapshots.push((t, c.clone()));
            pending.next();
        }
        if let Some(tol) = opts.steady_tol {
            if change <= tol {
                steady_at = Some(t);
                break;
            }
        }
    }
    Ok(RunResult {
        steps,
        t_final: t,
        field: c,
        snapshots,
        steady_at,
        max_balance_error: max_err,
        min_value: lo,
        max_value: hi,
    })
}

/// Face fluxes from an analytic matrix velocity and a fracture flow-rate field.
///
/// Matrix velocities are sampled just inside the matrix neighbor of each face
/// so that discontinuities along the fracture are resolved on the right side.
pub fn explicit_velocity_mode(
    mesh: &Mesh,
    x: &IntersectionData,
    velocity: &dyn Fn(Point) -> Point,
    fracture_rate: &dyn Fn(Point) -> Point,
) -> FaceFlux {
    let mut flux = FaceFlux::zeros(mesh.n_faces());
    let offset = 1e-6 * mesh.h_min();
    for (f, face) in mesh.faces().iter().enumerate() {
        let n = face.normal;
        let side = match face.plus {
            Some(p) if !x.fractured[p] && x.fractured[face.minus] => 1.0,
            _ => -1.0,
        };
        if x.face_class[f] == FaceClass::Fracture {
            flux.q[f] = x.crossings[f].iter().map(|c| fracture_rate(c.point).dot(c.tangent)).sum();
            continue;
        }
        let mut q = 0.0;
        for &(g, w) in &GAUSS3 {
            let p = face.a.lerp(face.b, g) + n * (side * offset);
            q += w * face.length() * velocity(p).dot(n);
        }
        if face.is_boundary() {
            q += x.crossings[f].iter().map(|c| fracture_rate(c.point).dot(c.tangent)).sum::<f64>();
        }
        flux.q[f] = q;
    }
    flux
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracture::{intersect, EdgeProps, FractureNetwork, SegmentInput};
    use crate::geometry::Rect;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    const PARAMS: TransportParams = TransportParams {
        dt: 0.1,
        c_b: 1.0,
        c_gb: 1.0,
        c_w: 1.0,
    };

    fn inflow_case(n: usize, inflow: bool) -> (Mesh, IntersectionData, FaceFlux) {
        let mesh = Mesh::uniform(n, n, unit()).unwrap();
        let seg = SegmentInput {
            a: Point::new(0.0, 0.5),
            b: Point::new(1.0, 0.5),
            props: EdgeProps {
                aperture: 1.0,
                permeability: 1.0,
                porosity: 1.0,
            },
        };
        let net = FractureNetwork::from_segments(&[seg], &unit()).unwrap();
        let x = intersect(&mesh, &net);
        let s = if inflow { 1.0 } else { -1.0 };
        let flux = explicit_velocity_mode(&mesh, &x, &|p| Point::new(0.0, if p.y < 0.5 { s } else { -s }), &|_| {
            Point::new(10.0, 0.0)
        });
        (mesh, x, flux)
    }

    #[test]
    fn explicit_fluxes_on_4x4() {
        let (mesh, x, flux) = inflow_case(4, true);
        for (f, face) in mesh.faces().iter().enumerate() {
            if x.face_class[f] == FaceClass::Fracture {
                assert!((flux.q[f] - 10.0).abs() < 1e-12);
            } else if face.is_horizontal() && !face.is_boundary() {
                let expect = if face.a.y <= 0.5 { 0.25 } else { -0.25 };
                assert!((flux.q[f] - expect).abs() < 1e-12, "face at y={} has {}", face.a.y, flux.q[f]);
            }
        }
        let zero = explicit_velocity_mode(&mesh, &x, &|_| Point::default(), &|_| Point::default());
        assert!(zero.q.iter().all(|q| *q == 0.0));
    }

    #[test]
    fn zero_flux_keeps_field() {
        let mesh = Mesh::uniform(3, 2, unit()).unwrap();
        let flux = FaceFlux::zeros(mesh.n_faces());
        let input = TransportInput::continuum(&mesh, &[0.3; 6], &[0.0; 6]);
        let sys = TransportSystem::new(&mesh, &flux, input, PARAMS).unwrap();
        let c: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let next = sys.step(&c).unwrap();
        for (a, b) in c.iter().zip(&next) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_cell_update() {
        let mesh = Mesh::uniform(1, 1, unit()).unwrap();
        let mut flux = FaceFlux::zeros(mesh.n_faces());
        let q = 2.0;
        for (f, face) in mesh.faces().iter().enumerate() {
            match face.side {
                Some(crate::mesh::Side::Left) => flux.q[f] = -q,
                Some(crate::mesh::Side::Right) => flux.q[f] = q,
                _ => {}
            }
        }
        let input = TransportInput::continuum(&mesh, &[1.0], &[0.0]);
        let sys = TransportSystem::new(&mesh, &flux, input, PARAMS).unwrap();
        let c = sys.step(&[0.4]).unwrap();
        let dt = PARAMS.dt;
        assert!((c[0] - (0.4 + dt * q) / (1.0 + dt * q)).abs() < 1e-14);
    }

    #[test]
    fn column_matches_hand_recursion() {
        // 4 cells in a row, unit flux left to right, inflow concentration 1
        let mesh = Mesh::uniform(4, 1, Rect::new(0.0, 4.0, 0.0, 1.0)).unwrap();
        let mut flux = FaceFlux::zeros(mesh.n_faces());
        for (f, face) in mesh.faces().iter().enumerate() {
            if !face.is_horizontal() {
                flux.q[f] = face.normal.x;
            }
        }
        let input = TransportInput::continuum(&mesh, &[1.0; 4], &[0.0; 4]);
        let params = TransportParams { dt: 0.5, ..PARAMS };
        let sys = TransportSystem::new(&mesh, &flux, input, params).unwrap();
        let c = sys.step(&[0.0; 4]).unwrap();
        // (1/dt + 1) c_i = c_{i-1}, c_{-1} = 1
        let mut expect = 1.0;
        for ci in c {
            expect /= 3.0;
            assert!((ci - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn init_projections() {
        let mesh = Mesh::uniform(2, 1, unit()).unwrap();
        let c = init(&mesh, None, &|p| p.x, &|_| 0.0);
        assert!((c[0] - 0.25).abs() < 1e-14 && (c[1] - 0.75).abs() < 1e-14);
        let (mesh, x, _) = inflow_case(4, true);
        let c = init(&mesh, Some(&x), &|_| 0.0, &|_| 1.0);
        for e in 0..mesh.n_elements() {
            assert_eq!(c[e], if x.fractured[e] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn nonpositive_mass_is_rejected() {
        let mesh = Mesh::uniform(1, 1, unit()).unwrap();
        let flux = FaceFlux::zeros(mesh.n_faces());
        let input = TransportInput::continuum(&mesh, &[0.0], &[0.0]);
        assert!(matches!(
            TransportSystem::new(&mesh, &flux, input, PARAMS),
            Err(Error::Configuration(_))
        ));
    }

    fn fracture_row(mesh: &Mesh, x: &IntersectionData) -> Vec<usize> {
        let mut cells: Vec<usize> = x.fractured_elements().collect();
        cells.sort_by(|&a, &b| mesh.element(a).center().x.total_cmp(&mesh.element(b).center().x));
        cells
    }

    #[test]
    fn inflow_steady_state_telescopes() {
        let n = 16;
        let (mesh, x, flux) = inflow_case(n, true);
        let input = TransportInput::embedded(
            &mesh,
            &x,
            &Materials::uniform(&mesh, 1, crate::pressure::Tensor::isotropic(1.0), 1.0),
        );
        let sys = TransportSystem::new(&mesh, &flux, input, TransportParams { dt: 1e-3, ..PARAMS }).unwrap();
        let c0 = vec![0.0; mesh.n_elements()];
        let opts = RunOptions {
            t_end: 20.0,
            steady_tol: Some(1e-10),
            output_times: vec![],
        };
        let r = run(&sys, c0, &opts, |_, _, _| Ok(())).unwrap();
        assert!(r.steady_at.is_some());
        assert!(r.max_balance_error < 1e-10, "balance error {}", r.max_balance_error);
        let h = 1.0 / n as f64;
        for (i, &e) in fracture_row(&mesh, &x).iter().enumerate() {
            assert!((r.field[e] - (1.0 + 0.2 * (i + 1) as f64 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn outflow_steady_state_is_geometric() {
        let n = 8;
        let (mesh, x, flux) = inflow_case(n, false);
        let input = TransportInput::embedded(
            &mesh,
            &x,
            &Materials::uniform(&mesh, 1, crate::pressure::Tensor::isotropic(1.0), 1.0),
        );
        let sys = TransportSystem::new(&mesh, &flux, input, TransportParams { dt: 1e-3, ..PARAMS }).unwrap();
        let opts = RunOptions {
            t_end: 3.0,
            steady_tol: Some(1e-11),
            output_times: vec![],
        };
        let r = run(&sys, vec![0.0; mesh.n_elements()], &opts, |_, _, _| Ok(())).unwrap();
        let h = 1.0 / n as f64;
        for (i, &e) in fracture_row(&mesh, &x).iter().enumerate() {
            assert!((r.field[e] - (1.0 + 0.2 * h).powi(-(i as i32 + 1))).abs() < 1e-8);
        }
    }

    #[test]
    fn cycles_are_solved_as_blocks() {
        // circulating flux around the four cells of a 2x2 mesh
        let mesh = Mesh::uniform(2, 2, unit()).unwrap();
        let mut flux = FaceFlux::zeros(mesh.n_faces());
        let c = Point::new(0.5, 0.5);
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.is_boundary() {
                continue;
            }
            let m = face.midpoint() - c;
            // counterclockwise rotation
            flux.q[f] = Point::new(-m.y, m.x).normalized().dot(face.normal);
        }
        let input = TransportInput::continuum(&mesh, &[1.0; 4], &[0.0; 4]);
        let sys = TransportSystem::new(&mesh, &flux, input, PARAMS).unwrap();
        assert_eq!(sys.blocks.len(), 1);
        let c0 = vec![1.0, 0.0, 0.0, 0.0];
        let c1 = sys.step(&c0).unwrap();
        assert!((sys.stored_mass(&c1) - 0.25).abs() < 1e-14);
        assert!(sys.matrix().residual_norm(&c1, &[2.5, 0.0, 0.0, 0.0]) < 1e-12);
    }
}
