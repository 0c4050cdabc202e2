//! Planar simulation, planning and estimation for autonomous gearbox
//! assembly: part singulation by random shooting, PCA pose estimation,
//! in-hand offset correction, force-guided gear insertion and gear
//! meshing, composed by a closed-loop state machine.

pub mod harness;
pub mod inhand;
pub mod insertion;
pub mod meshing;
pub mod model;
pub mod par;
pub mod perception;
pub mod pipeline;
pub mod planner;
pub mod rng;
pub mod scene;
pub mod sim;
