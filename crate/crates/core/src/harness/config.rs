use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::{Condition, Layout, Segment};
use crate::error::{Error, Result};
use crate::fracture::EdgeProps;
use crate::geometry::{Point, Rect};
use crate::linalg::SolverOptions;
use crate::mesh::Side;
use crate::reference::ReferenceOptions;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    /// `[x0, x1, y0, y1]`.
    pub domain: [f64; 4],
    pub mesh: MeshSpec,
    #[serde(default)]
    pub fractures: Option<FractureSpec>,
    pub materials: MaterialSpec,
    #[serde(default)]
    pub boundary: Vec<BoundarySpec>,
    #[serde(default)]
    pub velocity: Option<VelocitySpec>,
    #[serde(default)]
    pub transport: Option<TransportSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Base grid cells `[nx, ny]`.
    pub base: [usize; 2],
    #[serde(default)]
    pub global: usize,
    #[serde(default)]
    pub fracture_rounds: usize,
    #[serde(default)]
    pub resolve_close: bool,
    #[serde(default = "default_max_level")]
    pub max_level: u8,
}

fn default_max_level() -> u8 {
    12
}

impl MeshSpec {
    pub fn uniform(n: usize) -> MeshSpec {
        MeshSpec {
            base: [n, n],
            global: 0,
            fracture_rounds: 0,
            resolve_close: false,
            max_level: default_max_level(),
        }
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}x{}", self.base[0], self.base[1]);
        if self.global > 0 {
            s += &format!("_g{}", self.global);
        }
        if self.fracture_rounds > 0 {
            s += &format!("_f{}", self.fracture_rounds);
        }
        if self.resolve_close {
            s += "_r";
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FractureSpec {
    pub file: PathBuf,
    pub aperture: f64,
    pub permeability: f64,
    #[serde(default = "one")]
    pub porosity: f64,
}

fn one() -> f64 {
    1.0
}

impl FractureSpec {
    pub fn props(&self) -> EdgeProps {
        EdgeProps {
            aperture: self.aperture,
            permeability: self.permeability,
            porosity: self.porosity,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub kappa: f64,
    #[serde(default = "one")]
    pub porosity: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub side: SideName,
    /// Tangential interval; the whole side when omitted.
    #[serde(default)]
    pub from: Option<f64>,
    #[serde(default)]
    pub to: Option<f64>,
    pub condition: Condition,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SideName {
    Bottom,
    Right,
    Top,
    Left,
}

impl From<SideName> for Side {
    fn from(s: SideName) -> Side {
        match s {
            SideName::Bottom => Side::Bottom,
            SideName::Right => Side::Right,
            SideName::Top => Side::Top,
            SideName::Left => Side::Left,
        }
    }
}

/// Piecewise constant matrix velocity split by a horizontal line, plus a
/// constant fracture flow rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    pub split_y: f64,
    pub below: [f64; 2],
    pub above: [f64; 2],
    pub fracture: [f64; 2],
}

impl VelocitySpec {
    pub fn matrix(&self, p: Point) -> Point {
        let v = if p.y < self.split_y { self.below } else { self.above };
        Point::new(v[0], v[1])
    }

    pub fn fracture_rate(&self) -> Point {
        Point::new(self.fracture[0], self.fracture[1])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c0_fracture: Option<f64>,
    #[serde(default = "one")]
    pub c_b: f64,
    #[serde(default)]
    pub c_b_fracture: Option<f64>,
    #[serde(default)]
    pub c_w: f64,
    #[serde(default)]
    pub output_times: Vec<f64>,
    #[serde(default)]
    pub steady_tol: Option<f64>,
    /// Boundary points where fractures leave the domain.
    #[serde(default)]
    pub qoi_points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub condition_estimate: bool,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_iter() -> usize {
    20_000
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            rel_tol: default_tol(),
            max_iter: default_iter(),
            condition_estimate: false,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub name: String,
    pub from: [f64; 2],
    pub to: [f64; 2],
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    101
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub vtk: bool,
    /// Displayed width of fracture traces.
    #[serde(default)]
    pub fracture_width: Option<f64>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("output")
}

fn yes() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            vtk: true,
            fracture_width: None,
            lines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Ingested centroid table; a fine two-point reference is computed when absent.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "default_across")]
    pub cells_across: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub h_max: Option<f64>,
    #[serde(default = "default_cap")]
    pub max_cells: usize,
    /// Relative residual of the reference solve.
    #[serde(default = "default_ref_tol")]
    pub rel_tol: f64,
}

fn default_ref_tol() -> f64 {
    1e-8
}

fn default_across() -> usize {
    10
}

fn default_ratio() -> f64 {
    1.2
}

fn default_cap() -> usize {
    2_000_000
}

impl ReferenceSpec {
    pub fn options(&self, domain: &Rect) -> ReferenceOptions {
        ReferenceOptions {
            cells_across: self.cells_across,
            ratio: self.ratio,
            h_max: self.h_max.unwrap_or(domain.width().max(domain.height()) / 128.0),
            max_cells: self.max_cells,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub meshes: Vec<MeshSpec>,
}

impl CaseConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<CaseConfig> {
        let mut c: CaseConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<(CaseConfig, String)> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((CaseConfig::from_toml(&text, &dir)?, text))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn domain_rect(&self) -> Rect {
        let [x0, x1, y0, y1] = self.domain;
        Rect::new(x0, x1, y0, y1)
    }

    pub fn layout(&self) -> Layout {
        let d = self.domain_rect();
        Layout {
            segments: self
                .boundary
                .iter()
                .map(|b| {
                    let side: Side = b.side.into();
                    let (lo, hi) = if side.is_horizontal() {
                        (d.min.x, d.max.x)
                    } else {
                        (d.min.y, d.max.y)
                    };
                    Segment {
                        side,
                        from: b.from.unwrap_or(lo),
                        to: b.to.unwrap_or(hi),
                        condition: b.condition,
                    }
                })
                .collect(),
        }
    }

    /// Static checks: referenced files exist, parameters are in range.
    pub fn validate(&self) -> Result<()> {
        let d = self.domain_rect();
        if !(d.width() > 0.0 && d.height() > 0.0) {
            return Err(Error::config("domain must have positive width and height"));
        }
        if self.mesh.base[0] == 0 || self.mesh.base[1] == 0 {
            return Err(Error::config("mesh base counts must be positive"));
        }
        if let Some(f) = &self.fractures {
            let path = self.resolve(&f.file);
            if !path.is_file() {
                return Err(Error::config(format!("fracture file {} not found", path.display())));
            }
            f.props().validate()?;
        }
        if !(self.materials.kappa > 0.0 && self.materials.porosity > 0.0) {
            return Err(Error::config("matrix permeability and porosity must be positive"));
        }
        if self.velocity.is_none() {
            self.layout().validate(&d)?;
        }
        if let Some(t) = &self.transport {
            if !(t.dt > 0.0) || !(t.t_end >= 0.0) {
                return Err(Error::config("transport needs dt > 0 and t_end >= 0"));
            }
        }
        if let Some(r) = &self.reference {
            if let Some(file) = &r.file {
                let path = self.resolve(file);
                if !path.is_file() {
                    return Err(Error::config(format!("reference file {} not found", path.display())));
                }
            }
        }
        if self.velocity.is_some() && self.fractures.is_none() {
            return Err(Error::config("an explicit velocity needs a fracture network"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
name = "toy"
domain = [0.0, 1.0, 0.0, 1.0]
mesh = { base = [4, 4], fracture_rounds = 1 }
materials = { kappa = 1.0 }

[[boundary]]
side = "left"
condition = { type = "neumann", value = -1.0 }

[[boundary]]
side = "right"
condition = { type = "dirichlet", value = 1.0 }

[[boundary]]
side = "bottom"
condition = { type = "neumann", value = 0.0 }

[[boundary]]
side = "top"
condition = { type = "neumann", value = 0.0 }

[transport]
dt = 0.01
t_end = 0.1
"#;

    #[test]
    fn parses_and_validates() {
        let c = CaseConfig::from_toml(TEXT, Path::new(".")).unwrap();
        assert_eq!(c.mesh.fracture_rounds, 1);
        assert_eq!(c.mesh.max_level, 12);
        assert_eq!(c.layout().segments.len(), 4);
        assert_eq!(c.transport.as_ref().unwrap().c_b, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_missing_files_are_errors() {
        let bad = TEXT.replace("kappa = 1.0", "kappa = 1.0, colour = 3");
        assert!(CaseConfig::from_toml(&bad, Path::new(".")).is_err());
        let mut c = CaseConfig::from_toml(TEXT, Path::new(".")).unwrap();
        c.fractures = Some(FractureSpec {
            file: PathBuf::from("does/not/exist.csv"),
            aperture: 1.0,
            permeability: 1.0,
            porosity: 1.0,
        });
        assert!(matches!(c.validate(), Err(Error::Configuration(_))));
    }
}
