pub mod discretization;
pub mod error;
pub mod linalg;
pub mod models;
pub mod observation;
pub mod pbdw;
pub mod placement;
pub mod highfidelity;
pub mod sdlr;
pub mod experiment;
