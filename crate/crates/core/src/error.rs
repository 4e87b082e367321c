use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("sample point ({x:.3}, {y:.3}) outside sampling rectangle {width}x{height}")]
    Sampling {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("hole covers the entire domain; no boundary data")]
    NoBoundary,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
