use thiserror::Error;

/// Conserved charge named in a multiplier boundary error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    EtaPair,
    NumberUp,
    NumberDown,
}

impl std::fmt::Display for Charge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Charge::EtaPair => "eta_pair",
            Charge::NumberUp => "n_up",
            Charge::NumberDown => "n_down",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded: {what} has dimension {dim} (limit {limit})")]
    Capacity {
        what: String,
        dim: usize,
        limit: usize,
    },

    #[error("Lanczos did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("numerical instability: {0}; try a smaller time step")]
    Instability(String),

    #[error("step-size error: {0}")]
    StepSize(String),

    #[error("target {target} for {charge} is not strictly inside the achievable range ({min}, {max})")]
    Boundary {
        charge: Charge,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("multiplier solve did not converge after {iterations} iterations (residual {residual:e}, last iterate {last:?})")]
    Solver {
        iterations: usize,
        residual: f64,
        last: [f64; 3],
    },

    #[error("degenerate projection: projected trace {trace:e} is numerically zero")]
    DegenerateProjection { trace: f64 },

    #[error("every jump channel has zero weight at t = {time}; state norm {norm:e}")]
    NoJumpChannel { time: f64, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
