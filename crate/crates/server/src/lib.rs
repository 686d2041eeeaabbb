//! HTTP JSON service for the Meflex idea canvas.

pub mod api;
pub mod error;
pub mod state;

pub use api::router;
pub use error::{ApiError, ErrorCode};
pub use state::{AppState, Autosaver, DEFAULT_AUTOSAVE_DEBOUNCE};
