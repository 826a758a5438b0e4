use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::boundary::classify_boundary;
use crate::error::Result;
use crate::flux::{self, FaceFlux};
use crate::fracture::{self, intersect, FractureNetwork, IntersectionData};
use crate::geometry::Point;
use crate::harness::config::{CaseConfig, MeshSpec, ReferenceSpec};
use crate::harness::io;
use crate::harness::metrics::{self, ReferenceSolution};
use crate::interpretation;
use crate::mesh::Mesh;
use crate::pressure::{self, Materials, PressureField, Tensor};
use crate::reference;
use crate::transport::{self, RunOptions, TransportInput, TransportParams, TransportSystem};

pub fn load_network(cfg: &CaseConfig) -> Result<FractureNetwork> {
    let domain = cfg.domain_rect();
    match &cfg.fractures {
        Some(f) => fracture::load_network(&cfg.resolve(&f.file), f.props(), &domain),
        None => FractureNetwork::from_segments(&[], &domain),
    }
}

/// Base grid, global rounds, rounds around the network, then optional
/// separation of close unconnected fractures.
pub fn build_mesh(cfg: &CaseConfig, spec: &MeshSpec, net: &FractureNetwork) -> Result<Mesh> {
    let mut m = Mesh::uniform(spec.base[0], spec.base[1], cfg.domain_rect())?;
    for _ in 0..spec.global {
        m = m.refine_all()?;
    }
    m = fracture::refine_around_fractures(&m, net, spec.fracture_rounds)?;
    if spec.resolve_close {
        m = fracture::resolve_close_fractures(&m, net, spec.max_level)?;
    }
    Ok(m)
}

pub fn materials(cfg: &CaseConfig, mesh: &Mesh, x: &IntersectionData) -> Materials {
    Materials::uniform(
        mesh,
        x.network.n_edges(),
        Tensor::isotropic(cfg.materials.kappa),
        cfg.materials.porosity,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub label: String,
    pub elements: usize,
    pub vertices: usize,
    pub faces: usize,
    pub hanging: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub fractured_elements: usize,
    pub network_edges: usize,
    pub network_nodes: usize,
    pub perturbed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureStats {
    pub n_dof: usize,
    pub nnz_density: f64,
    pub condition: Option<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conservation {
    /// `max_K |R(U_h)| |K|` before correction.
    pub before: f64,
    pub after: f64,
    /// `max_F |Q_F|`.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub pressure: Option<PressureField>,
    pub stats: Option<PressureStats>,
    pub raw: FaceFlux,
    pub flux: FaceFlux,
    pub conservation: Conservation,
}

/// Pressure, averaged flux and its conservative correction; or the face
/// fluxes of a prescribed velocity.
pub fn solve_flow(cfg: &CaseConfig, mesh: &Mesh, x: &IntersectionData, condition: bool) -> Result<Flow> {
    let mat = materials(cfg, mesh, x);
    let sources = flux::element_sources(mesh, x, &mat);
    if let Some(v) = &cfg.velocity {
        let raw = transport::explicit_velocity_mode(mesh, x, &|p| v.matrix(p), &|_| v.fracture_rate());
        let d = flux::max_defect(mesh, &raw, &sources);
        return Ok(Flow {
            pressure: None,
            stats: None,
            conservation: Conservation {
                before: d,
                after: d,
                scale: raw.max_abs(),
            },
            flux: raw.clone(),
            raw,
        });
    }
    let bc = classify_boundary(mesh, &cfg.layout())?;
    let sys = pressure::assemble(mesh, x, &mat, &bc)?;
    let p = pressure::solve(mesh, &sys, cfg.solver.options())?;
    let cond = if condition {
        Some(pressure::estimate_condition(&sys)?)
    } else {
        None
    };
    let raw = flux::average_flux(mesh, &p, x, &mat, &bc);
    let weights = flux::face_weights(mesh, x, &mat, &bc);
    let corr = flux::postprocess(mesh, &raw, &sources, &weights)?;
    let (lo, hi) = p.min_max();
    Ok(Flow {
        stats: Some(PressureStats {
            n_dof: sys.n_dof(),
            nnz_density: sys.nnz_density(),
            condition: cond,
            iterations: p.stats.iterations,
            rel_residual: p.stats.rel_residual,
            min: lo,
            max: hi,
        }),
        conservation: Conservation {
            before: flux::max_defect(mesh, &raw, &sources),
            after: flux::max_defect(mesh, &corr.flux, &sources),
            scale: corr.flux.max_abs(),
        },
        pressure: Some(p),
        raw,
        flux: corr.flux,
    })
}

/// Ingested table, or a fine two-point solution of the equi-dimensional model.
pub fn reference_solution(cfg: &CaseConfig, spec: &ReferenceSpec, net: &FractureNetwork) -> Result<ReferenceSolution> {
    if let Some(file) = &spec.file {
        let r = io::ingest_reference(&cfg.resolve(file))?;
        r.validate()?;
        return Ok(r);
    }
    let domain = cfg.domain_rect();
    let rm = reference::build_reference_mesh(domain, net, spec.options(&domain))?;
    info!("reference mesh: {} cells, {} across strips", rm.mesh.n_elements(), rm.cells_across);
    let bc = classify_boundary(&rm.mesh, &cfg.layout())?;
    let kappa = rm.permeability(net, cfg.materials.kappa);
    let zero = vec![0.0; rm.mesh.n_elements()];
    let opts = crate::linalg::SolverOptions {
        rel_tol: spec.rel_tol,
        max_iter: cfg.solver.max_iter.max(100_000),
    };
    let s = reference::solve_pressure_tpfa(&rm.mesh, &kappa, &zero, &bc, opts)?;
    Ok(ReferenceSolution::from_tpfa(&rm, &s))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Errors {
    pub err_m: f64,
    pub err_f: f64,
}

pub fn pressure_errors(mesh: &Mesh, p: &PressureField, r: &ReferenceSolution, net: &FractureNetwork) -> Result<Errors> {
    let w = net.edges.first().map_or(1.0, |e| e.props.aperture);
    Ok(Errors {
        err_m: metrics::err_matrix(mesh, p, r)?,
        err_f: if r.on_fracture.iter().any(|&f| f) {
            metrics::err_fracture(mesh, p, r, w, net.total_length())?
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportStats {
    pub steps: usize,
    pub t_final: f64,
    pub steady_at: Option<f64>,
    pub max_balance_error: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct TransportOutcome {
    pub stats: TransportStats,
    pub field: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// `(t, QOI_1, QOI_2, ...)` per step.
    pub qoi: Vec<Vec<f64>>,
    /// Stored tracer mass after each step.
    pub mass: Vec<f64>,
}

pub fn transport_system(cfg: &CaseConfig, mesh: &Mesh, x: &IntersectionData, flux: &FaceFlux, dt: f64) -> Result<TransportSystem> {
    let t = cfg.transport.as_ref().expect("transport block");
    let mat = materials(cfg, mesh, x);
    let params = TransportParams {
        dt,
        c_b: t.c_b,
        c_gb: t.c_b_fracture.unwrap_or(t.c_b),
        c_w: t.c_w,
    };
    TransportSystem::new(mesh, flux, TransportInput::embedded(mesh, x, &mat), params)
}

pub fn run_transport(cfg: &CaseConfig, mesh: &Mesh, x: &IntersectionData, flux: &FaceFlux, dt: Option<f64>) -> Result<TransportOutcome> {
    let t = cfg.transport.as_ref().expect("transport block");
    let sys = transport_system(cfg, mesh, x, flux, dt.unwrap_or(t.dt))?;
    let c0 = t.c0;
    let cg0 = t.c0_fracture.unwrap_or(c0);
    let init = transport::init(mesh, Some(x), &|_| c0, &|_| cg0);
    let faces = t
        .qoi_points
        .iter()
        .map(|p| metrics::qoi_face(mesh, x, Point::new(p[0], p[1])))
        .collect::<Result<Vec<_>>>()?;
    let c_in = t.c_b_fracture.unwrap_or(t.c_b);
    let mut qoi = Vec::new();
    let mut mass = Vec::new();
    let opts = RunOptions {
        t_end: t.t_end,
        steady_tol: t.steady_tol,
        output_times: t.output_times.clone(),
    };
    let r = transport::run(&sys, init, &opts, |_, time, c| {
        let mut row = vec![time];
        row.extend(metrics::qoi(mesh, flux, c, &faces, c_in));
        qoi.push(row);
        mass.push(sys.stored_mass(c));
        Ok(())
    })?;
    Ok(TransportOutcome {
        stats: TransportStats {
            steps: r.steps,
            t_final: r.t_final,
            steady_at: r.steady_at,
            max_balance_error: r.max_balance_error,
            min: r.min_value,
            max: r.max_value,
        },
        field: r.field,
        snapshots: r.snapshots,
        qoi,
        mass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub config_sha256: String,
    pub mesh: MeshStats,
    pub pressure: Option<PressureStats>,
    pub conservation: Conservation,
    pub errors: Option<Errors>,
    pub transport: Option<TransportStats>,
    pub timing_seconds: Timing,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub mesh: f64,
    pub flow: f64,
    pub reference: f64,
    pub transport: f64,
}

pub struct CaseResult {
    pub manifest: Manifest,
    pub mesh: Mesh,
    pub intersection: IntersectionData,
    pub flow: Flow,
    pub transport: Option<TransportOutcome>,
}

pub fn mesh_stats(spec: &MeshSpec, mesh: &Mesh, x: &IntersectionData) -> MeshStats {
    MeshStats {
        label: spec.label(),
        elements: mesh.n_elements(),
        vertices: mesh.n_vertices(),
        faces: mesh.n_faces(),
        hanging: mesh.hanging().len(),
        h_min: mesh.h_min(),
        h_max: mesh.h_max(),
        fractured_elements: x.fractured_elements().count(),
        network_edges: x.network.n_edges(),
        network_nodes: x.network.n_nodes(),
        perturbed: x.perturbed,
    }
}

/// Run one case and write its artifacts into `out` when given.
pub fn run_case(cfg: &CaseConfig, config_text: &str, out: Option<&Path>) -> Result<CaseResult> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let clock = Instant::now();
    let net = load_network(cfg)?;
    let mesh = build_mesh(cfg, &cfg.mesh, &net)?;
    let x = intersect(&mesh, &net);
    timing.mesh = clock.elapsed().as_secs_f64();
    info!(
        "{}: {} elements, {} fractured",
        cfg.name,
        mesh.n_elements(),
        x.fractured_elements().count()
    );

    let clock = Instant::now();
    let flow = solve_flow(cfg, &mesh, &x, cfg.solver.condition_estimate)?;
    timing.flow = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let errors = match (&cfg.reference, &flow.pressure) {
        (Some(spec), Some(p)) => {
            let r = reference_solution(cfg, spec, &net)?;
            Some(pressure_errors(&mesh, p, &r, &net)?)
        }
        _ => None,
    };
    timing.reference = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let transport = match &cfg.transport {
        Some(_) => Some(run_transport(cfg, &mesh, &x, &flow.flux, None)?),
        None => None,
    };
    timing.transport = clock.elapsed().as_secs_f64();

    let manifest = Manifest {
        name: cfg.name.clone(),
        config_sha256: io::sha256_hex(config_text),
        mesh: mesh_stats(&cfg.mesh, &mesh, &x),
        pressure: flow.stats.clone(),
        conservation: flow.conservation.clone(),
        errors,
        transport: transport.as_ref().map(|t| t.stats.clone()),
        timing_seconds: timing,
    };
    let result = CaseResult {
        manifest,
        mesh,
        intersection: x,
        flow,
        transport,
    };
    if let Some(dir) = out {
        write_outputs(cfg, &result, dir)?;
    }
    Ok(result)
}

fn write_outputs(cfg: &CaseConfig, r: &CaseResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mesh = &r.mesh;
    let x = &r.intersection;
    io::write_json(&dir.join("manifest.json"), &r.manifest)?;
    io::write_table(
        &dir.join("flux.csv"),
        &["FACE_ID", "XM", "YM", "NX", "NY", "Q_AVERAGED", "Q_CONSERVATIVE"],
        mesh.faces().iter().enumerate().map(|(f, face)| {
            let m = face.midpoint();
            vec![f as f64, m.x, m.y, face.normal.x, face.normal.y, r.flow.raw.q[f], r.flow.flux.q[f]]
        }),
    )?;
    let width = cfg.output.fracture_width.unwrap_or(0.005 * mesh.domain().diameter());
    io::write_vtk_network(&dir.join("fractures.vtk"), &x.network, width)?;
    if let Some(p) = &r.flow.pressure {
        let cells: Vec<f64> = (0..mesh.n_elements())
            .map(|e| p.value_in(mesh, e, mesh.element(e).center()))
            .collect();
        io::write_cell_field(&dir.join("pressure_cells.csv"), mesh, Some(x), &cells)?;
        if cfg.output.vtk {
            io::write_vtk_pressure(&dir.join("pressure.vtk"), mesh, &p.values)?;
        }
        for line in &cfg.output.lines {
            let a = Point::new(line.from[0], line.from[1]);
            let b = Point::new(line.to[0], line.to[1]);
            let s = metrics::sample_line(a, b, line.samples, &|q| p.value(mesh, q))?;
            io::write_table(
                &dir.join(format!("line_{}_pressure.csv", line.name)),
                &["S", "X", "Y", "PRESSURE"],
                s.iter().map(|&(t, v)| {
                    let q = a.lerp(b, t / a.distance(b));
                    vec![t, q.x, q.y, v]
                }),
            )?;
        }
    }
    if let Some(t) = &r.transport {
        let n_qoi = t.qoi.first().map_or(0, |row| row.len() - 1);
        let mut header = vec!["T".to_string()];
        header.extend((1..=n_qoi).map(|i| format!("QOI_{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        io::write_table(&dir.join("qoi.csv"), &header, t.qoi.iter().cloned())?;
        for (time, c) in &t.snapshots {
            io::write_cell_field(&dir.join(format!("concentration_t{time:.6e}.csv")), mesh, Some(x), c)?;
        }
        io::write_cell_field(&dir.join("concentration_final.csv"), mesh, Some(x), &t.field)?;
        for line in &cfg.output.lines {
            let a = Point::new(line.from[0], line.from[1]);
            let b = Point::new(line.to[0], line.to[1]);
            let s = metrics::sample_line(a, b, line.samples, &|q| mesh.locate(q).map(|e| t.field[e]))?;
            io::write_table(
                &dir.join(format!("line_{}_concentration.csv", line.name)),
                &["S", "CONCENTRATION"],
                s.iter().map(|&(s, v)| vec![s, v]),
            )?;
        }
        if cfg.output.vtk {
            let part = interpretation::partition(mesh, x);
            let interp = match interpretation::interpret(&t.field, &part) {
                Ok(i) => i,
                Err(e) => {
                    warn!("{e}; writing raw values on subelements");
                    interpretation::InterpretedField {
                        element: t.field.clone(),
                        subelement: part.subelements.iter().map(|s| t.field[s.element]).collect(),
                    }
                }
            };
            io::write_vtk_concentration(&dir.join("concentration.vtk"), mesh, x, &part, &t.field, &interp, width)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub mesh: String,
    pub elements: usize,
    pub n_dof: usize,
    pub nnz_density: f64,
    pub condition: Option<f64>,
    pub err_m: f64,
    pub err_f: f64,
    pub conservation: Conservation,
    /// No fracture-targeted refinement; these rows enter the slope fit.
    pub uniform: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Fitted order of `err_M` against `N_dof` over the uniform meshes.
    pub slope_m: f64,
    pub slope_f: f64,
}

/// Pressure errors of every mesh in the study against one reference.
pub fn convergence(cfg: &CaseConfig, out: Option<&Path>) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let net = load_network(cfg)?;
    let spec = cfg
        .reference
        .clone()
        .ok_or_else(|| crate::error::Error::config("a convergence study needs a [reference] block"))?;
    let meshes = cfg
        .convergence
        .as_ref()
        .map(|c| c.meshes.clone())
        .filter(|m| !m.is_empty())
        .ok_or_else(|| crate::error::Error::config("a convergence study needs [convergence] meshes"))?;
    let r = reference_solution(cfg, &spec, &net)?;
    let mut rows = Vec::new();
    for m in &meshes {
        let mesh = build_mesh(cfg, m, &net)?;
        let x = intersect(&mesh, &net);
        let flow = solve_flow(cfg, &mesh, &x, cfg.solver.condition_estimate)?;
        let p = flow.pressure.as_ref().expect("pressure solution");
        let e = pressure_errors(&mesh, p, &r, &net)?;
        let s = flow.stats.as_ref().unwrap();
        info!("{}: N_dof {} err_M {:.3e} err_F {:.3e}", m.label(), s.n_dof, e.err_m, e.err_f);
        rows.push(ConvergenceRow {
            mesh: m.label(),
            elements: mesh.n_elements(),
            n_dof: s.n_dof,
            nnz_density: s.nnz_density,
            condition: s.condition,
            err_m: e.err_m,
            err_f: e.err_f,
            conservation: flow.conservation.clone(),
            uniform: m.fracture_rounds == 0,
        });
    }
    let fit: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.uniform).collect();
    let ndof: Vec<f64> = fit.iter().map(|r| r.n_dof as f64).collect();
    let em: Vec<f64> = fit.iter().map(|r| r.err_m).collect();
    let ef: Vec<f64> = fit.iter().map(|r| r.err_f).collect();
    let table = ConvergenceTable {
        slope_m: if fit.len() > 1 { metrics::log_slope(&ndof, &em) } else { f64::NAN },
        slope_f: if fit.len() > 1 { metrics::log_slope(&ndof, &ef) } else { f64::NAN },
        rows,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("convergence.csv"))?;
        w.write_record([
            "MESH",
            "ELEMENTS",
            "N_DOF",
            "NNZ_DENSITY",
            "CONDITION",
            "ERR_M",
            "ERR_F",
            "DEFECT_BEFORE",
            "DEFECT_AFTER",
            "FLUX_SCALE",
        ])?;
        for r in &table.rows {
            w.write_record([
                r.mesh.clone(),
                r.elements.to_string(),
                r.n_dof.to_string(),
                format!("{:.6e}", r.nnz_density),
                r.condition.map_or(String::new(), |c| format!("{c:.6e}")),
                format!("{:.6e}", r.err_m),
                format!("{:.6e}", r.err_f),
                format!("{:.6e}", r.conservation.before),
                format!("{:.6e}", r.conservation.after),
                format!("{:.6e}", r.conservation.scale),
            ])?;
        }
        w.flush()?;
        io::write_json(&dir.join("convergence.json"), &table)?;
    }
    Ok(table)
}
