//! Problem data: mesh with coefficient, load, Dirichlet data and an optional
//! exact solution, plus the built-in benchmarks and JSON problem files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node,
    Value,
};
use serde::Deserialize;

use crate::basis::{cell_table, dim_p, quadrature::MAX_DEGREE};
use crate::error::{Error, Result};
use crate::mesh::{read_mesh_json, Mesh, MeshFile};

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Exact solution `u` with its gradient, and points where `grad u` is
/// singular (used to refine error quadrature).
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad: VectorFn,
    pub singular_points: Vec<[f64; 2]>,
}

/// `-div(a grad u) = f` in the mesh domain, `u = g` on the boundary, with
/// `a` the per-element coefficient stored on the mesh.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub mesh: Mesh,
    pub f: ScalarFn,
    /// Dirichlet data per boundary tag; tags without an entry use
    /// `default_dirichlet`.
    pub dirichlet: BTreeMap<u32, ScalarFn>,
    pub default_dirichlet: ScalarFn,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("nelems", &self.mesh.num_elements())
            .field("dirichlet_tags", &self.dirichlet.keys().collect::<Vec<_>>())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

fn zero() -> ScalarFn {
    Arc::new(|_| 0.0)
}

impl ProblemSpec {
    /// Homogeneous Dirichlet problem with load `f`.
    pub fn new(name: impl Into<String>, mesh: Mesh, f: ScalarFn) -> Self {
        ProblemSpec {
            name: name.into(),
            mesh,
            f,
            dirichlet: BTreeMap::new(),
            default_dirichlet: zero(),
            exact: None,
        }
    }

    pub fn with_dirichlet(mut self, g: ScalarFn) -> Self {
        self.default_dirichlet = g;
        self
    }

    pub fn with_dirichlet_tag(mut self, tag: u32, g: ScalarFn) -> Self {
        self.dirichlet.insert(tag, g);
        self
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    /// Same data on another mesh of the same domain.
    pub fn with_mesh(&self, mesh: Mesh) -> Self {
        ProblemSpec {
            mesh,
            ..self.clone()
        }
    }

    pub fn dirichlet(&self, tag: u32) -> &ScalarFn {
        self.dirichlet.get(&tag).unwrap_or(&self.default_dirichlet)
    }

    /// Moments `(f, phi_i)_K` for `i < dim P_k` on every element, computed
    /// once with quadrature degree `2k + 10` so that the scheme load, the
    /// projections of `f` and the equilibration targets share one value.
    pub fn element_loads(&self, mesh: &Mesh, k: usize) -> Result<Vec<Vec<f64>>> {
        let qdeg = (2 * k + 10).min(MAX_DEGREE);
        let table = cell_table(k, qdeg)?;
        let n = dim_p(k);
        Ok(crate::exec::map(mesh.num_elements(), |e| {
            let map = mesh.element_map(e);
            let mut b = vec![0.0; n];
            for (q, (xi, w)) in table.rule.iter().enumerate() {
                let fx = (self.f)(map.to_physical(xi)) * w * map.det;
                for (bi, phi) in b.iter_mut().zip(table.tab.value(q)) {
                    *bi += fx * phi;
                }
            }
            b
        }))
    }

    /// Look up a built-in benchmark.
    pub fn builtin(id: &str) -> Result<ProblemSpec> {
        match id {
            "square-smooth" => Ok(Self::square_smooth()),
            "lshape2d" => Ok(Self::lshape()),
            "checkerboard-a" => Ok(Self::checkerboard(10.0)),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }

    /// Unit square, `a = 1`, `u = sin(pi x) sin(pi y)`, zero boundary data.
    pub fn square_smooth() -> ProblemSpec {
        let f: ScalarFn = Arc::new(|x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin());
        ProblemSpec::new("square-smooth", Mesh::unit_square(), f).with_exact(ExactSolution {
            u: Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()),
            grad: Arc::new(|x| {
                [
                    PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                    PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                ]
            }),
            singular_points: Vec::new(),
        })
    }

    /// L-shaped domain with the corner singularity `r^(2/3) sin(2 theta / 3)`,
    /// `a = 1`, `f = 0`, boundary data from the exact solution.
    pub fn lshape() -> ProblemSpec {
        let u: ScalarFn = Arc::new(lshape_u);
        ProblemSpec::new("lshape2d", Mesh::lshape(), zero())
            .with_dirichlet(u.clone())
            .with_exact(ExactSolution {
                u,
                grad: Arc::new(lshape_grad),
                singular_points: vec![[0.0, 0.0]],
            })
    }

    /// Unit square with `a = kappa` on the lower-left and upper-right
    /// quadrants and `a = 1` elsewhere, `f = 1`, zero boundary data.
    pub fn checkerboard(kappa: f64) -> ProblemSpec {
        let mesh = Mesh::unit_square()
            .with_coefficient_fn(|c| if (c[0] < 0.5) == (c[1] < 0.5) { kappa } else { 1.0 })
            .expect("positive coefficient");
        ProblemSpec::new("checkerboard-a", mesh, Arc::new(|_| 1.0))
    }

    /// Read a JSON problem description; see [`ProblemFile`].
    pub fn from_json(path: &Path) -> Result<ProblemSpec> {
        let text = fs::read_to_string(path)?;
        let file: ProblemFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        file.into_problem(base, &path.display().to_string())
    }
}

/// Polar angle in `[0, 2 pi)`.
fn angle(x: [f64; 2]) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

pub fn lshape_u(x: [f64; 2]) -> f64 {
    let r = x[0].hypot(x[1]);
    r.powf(2.0 / 3.0) * (2.0 * angle(x) / 3.0).sin()
}

pub fn lshape_grad(x: [f64; 2]) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [f64::INFINITY, f64::INFINITY];
    }
    let t = angle(x) / 3.0;
    let s = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
    [-s * t.sin(), s * t.cos()]
}

/// A compiled scalar expression in `x`, `y` (constants `pi`, `e`).
#[derive(Clone)]
pub struct Expression {
    source: String,
    node: Arc<Node<DefaultNumericTypes>>,
}

struct PointContext {
    x: Value,
    y: Value,
    pi: Value,
    e: Value,
}

impl Context for PointContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value> {
        match identifier {
            "x" => Some(&self.x),
            "y" => Some(&self.y),
            "pi" => Some(&self.pi),
            "e" => Some(&self.e),
            _ => None,
        }
    }

    fn call_function(&self, identifier: &str, _argument: &Value) -> EvalexprResult<Value, DefaultNumericTypes> {
        Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Ok(())
    }
}

impl Expression {
    /// Parse and check the expression by evaluating it once at `probe`.
    pub fn parse(source: &str, probe: [f64; 2]) -> Result<Expression> {
        let node = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| Error::Expression {
            expr: source.to_string(),
            message: e.to_string(),
        })?;
        let expr = Expression {
            source: source.to_string(),
            node: Arc::new(node),
        };
        expr.try_eval(probe)?;
        Ok(expr)
    }

    pub fn try_eval(&self, x: [f64; 2]) -> Result<f64> {
        let ctx = PointContext {
            x: Value::Float(x[0]),
            y: Value::Float(x[1]),
            pi: Value::Float(PI),
            e: Value::Float(std::f64::consts::E),
        };
        self.node.eval_number_with_context(&ctx).map_err(|e| Error::Expression {
            expr: self.source.clone(),
            message: e.to_string(),
        })
    }

    /// Evaluate; failures yield NaN, which downstream finiteness checks catch.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }

    pub fn into_fn(self) -> ScalarFn {
        Arc::new(move |x| self.eval(x))
    }
}

/// Scalar data given either as a number or as an expression string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarData {
    Constant(f64),
    Expr(String),
}

impl ScalarData {
    fn compile(&self, probe: [f64; 2]) -> Result<ScalarFn> {
        match self {
            ScalarData::Constant(c) => {
                let c = *c;
                Ok(Arc::new(move |_| c))
            }
            ScalarData::Expr(s) => Ok(Expression::parse(s, probe)?.into_fn()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DirichletData {
    All(ScalarData),
    /// Keyed by boundary tag (as a string, JSON object keys).
    PerTag(BTreeMap<String, ScalarData>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeshSource {
    Path(String),
    Inline(MeshFile),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientData {
    PerElement(Vec<f64>),
    /// Evaluated at each element centroid.
    Field(ScalarData),
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExactData {
    pub u: String,
    pub ux: String,
    pub uy: String,
    #[serde(default)]
    pub singular_points: Vec<[f64; 2]>,
}

/// JSON problem description:
///
/// ```json
/// {"name": "demo", "mesh": "mesh.json", "a": [1.0, 2.0],
///  "f": "2*pi^2*math::sin(pi*x)*math::sin(pi*y)", "g": 0.0,
///  "exact": {"u": "...", "ux": "...", "uy": "..."}}
/// ```
///
/// `mesh` is a path relative to the problem file or an inline mesh object;
/// `a` is a per-element list or a scalar/expression evaluated at centroids;
/// `g` is a scalar/expression or an object keyed by boundary tag.
#[derive(Debug, Clone, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub mesh: MeshSource,
    #[serde(default)]
    pub a: Option<CoefficientData>,
    pub f: ScalarData,
    #[serde(default)]
    pub g: Option<DirichletData>,
    #[serde(default)]
    pub exact: Option<ExactData>,
}

impl ProblemFile {
    pub fn into_problem(self, base: &Path, default_name: &str) -> Result<ProblemSpec> {
        let mut mesh = match self.mesh {
            MeshSource::Path(p) => read_mesh_json(&base.join(p))?,
            MeshSource::Inline(m) => m.into_mesh()?,
        };
        let probe = mesh.centroid(0);
        mesh = match self.a {
            None => mesh,
            Some(CoefficientData::PerElement(a)) => mesh.with_coefficient(a)?,
            Some(CoefficientData::Field(s)) => {
                let a = s.compile(probe)?;
                mesh.with_coefficient_fn(|c| a(c))?
            }
        };
        let f = self.f.compile(probe)?;
        let mut problem = ProblemSpec::new(self.name.unwrap_or_else(|| default_name.to_string()), mesh, f);
        match self.g {
            None => {}
            Some(DirichletData::All(g)) => problem = problem.with_dirichlet(g.compile(probe)?),
            Some(DirichletData::PerTag(map)) => {
                for (tag, g) in map {
                    let t: u32 = tag
                        .parse()
                        .map_err(|_| Error::Config(format!("boundary tag '{tag}' is not an integer")))?;
                    problem = problem.with_dirichlet_tag(t, g.compile(probe)?);
                }
            }
        }
        if let Some(ex) = self.exact {
            let u = Expression::parse(&ex.u, probe)?;
            let ux = Expression::parse(&ex.ux, probe)?;
            let uy = Expression::parse(&ex.uy, probe)?;
            problem = problem.with_exact(ExactSolution {
                u: u.into_fn(),
                grad: Arc::new(move |x| [ux.eval(x), uy.eval(x)]),
                singular_points: ex.singular_points,
            });
        }
        Ok(problem)
    }
}
