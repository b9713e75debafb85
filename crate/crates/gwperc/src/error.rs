use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring spec: {0}")]
    InvalidSpec(String),
    #[error("offspring mean must exceed 1, got {0}")]
    Subcritical(f64),
    #[error("node budget {budget} exceeded while generating depth {depth} ({needed} nodes required)")]
    NodeBudget {
        depth: usize,
        needed: u64,
        budget: u64,
    },
    #[error("tree generated to depth {have}, operation needs depth {need}")]
    InsufficientDepth { need: usize, have: usize },
    #[error("deepen target {target} not beyond generated depth {have}")]
    DeepenNotBeyond { target: usize, have: usize },
    #[error("tree file: {0}")]
    TreeFile(String),
    #[error("vertex id {id} out of bounds (arena holds {len})")]
    BadVertex { id: usize, len: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("attempt cap {cap} reached with only {got} of {want} samples accepted")]
    AttemptCap { cap: u64, got: u64, want: u64 },
    #[error("population cap {0} exceeded in branching simulation")]
    PopulationCap(u64),
    #[error("brute-force enumeration supports at most {max} edges, tree has {got}")]
    TooManyEdges { got: usize, max: usize },
    #[error("survival bounds violated: lower {lower} value {value} upper {upper}")]
    SandwichViolated { lower: f64, value: f64, upper: f64 },
    #[error("shape is not a subtree of the given tree: {0}")]
    BadShape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
