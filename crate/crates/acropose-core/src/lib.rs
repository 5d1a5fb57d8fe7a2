//! Motion-capture to 3D-pose toolkit.
//!
//! The pipeline stages, in the order a recording flows through them:
//!
//! 1. **mocap** – marker-sequence ingestion and the automatic filter cascade
//!    that discards unreliable trajectories before fitting.
//! 2. **body** – parametric skinned body model: forward kinematics, shape
//!    blendshapes, linear blend skinning, surface normals, synthetic markers.
//! 3. **optim** – self-contained LBFGS / Adam optimizers behind a common
//!    strategy trait, a Gaussian-mixture pose prior, gradient checking.
//! 4. **fit** – rough global alignment, marker-to-vertex correspondence by
//!    vote, and the staged optimization producing a smooth motion solution.
//! 5. **camera** – pinhole-with-distortion projection, DLT triangulation and
//!    the robust camera-subset search.
//! 6. **synth** – multi-view joint annotation with ray-mesh occlusion
//!    visibility, COCO-style emission and schematic skeleton renders.
//! 7. **eval** – OKS-based AP/AR, MPJPE over camera combinations,
//!    valid-joint and threshold curves, CSV/SVG reports.
//! 8. **procedural** – deterministic generators for test bodies, acrobatic
//!    motions and faulty marker data used by the demo pipeline.

pub mod body;
pub mod camera;
pub mod error;
pub mod eval;
pub mod fit;
pub mod math;
pub mod mocap;
pub mod optim;
pub mod plot;
pub mod procedural;
pub mod synth;

pub use error::{Error, Result};
