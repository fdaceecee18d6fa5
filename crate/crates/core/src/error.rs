//! Error type shared by every stage of the solver pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("triangle {element} references vertex {vertex}, but the mesh has {nvertices} vertices")]
    InvalidVertex {
        element: usize,
        vertex: usize,
        nvertices: usize,
    },

    #[error("triangle {element} is degenerate (signed area {area:e})")]
    DegenerateTriangle { element: usize, area: f64 },

    #[error("non-conforming mesh: vertex {vertex} lies strictly inside edge ({a}, {b}) of triangle {element}")]
    NonConforming {
        element: usize,
        vertex: usize,
        a: usize,
        b: usize,
    },

    #[error("edge ({a}, {b}) is shared by more than two triangles")]
    NonManifoldEdge { a: usize, b: usize },

    #[error("element index {index} out of range (mesh has {nelems} elements)")]
    InvalidElement { index: usize, nelems: usize },

    #[error("quadrature of degree {requested} requested, supported maximum is {max}")]
    QuadratureDegree { requested: usize, max: usize },

    #[error("matrix is numerically singular: pivot {index} has magnitude {value:e}")]
    Singular { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sparse solve failed ({message}), relative residual {residual:e}")]
    Solver { message: String, residual: f64 },

    #[error("stabilization constant gamma = {gamma} must exceed {threshold} for degree {degree}")]
    Stabilization {
        gamma: f64,
        threshold: f64,
        degree: usize,
    },

    #[error("stabilization vanishes on every facet of element {element}")]
    ZeroStabilization { element: usize },

    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no exact solution available for this problem")]
    MissingExactSolution,

    #[error("mismatched inputs: {0}")]
    Provenance(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("expression `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach an element id to a local failure.
    pub fn at_element(self, element: usize) -> Self {
        Error::Element {
            element,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
