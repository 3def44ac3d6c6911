//! Discretized solver and certification toolkit for the optimal control of
//! the nonsmooth semilinear equation -lap(y) + sgn(y)|y|^a = u on the unit
//! interval and unit square.
//!
//! The crate is generic over the floating-point type through [`Scalar`];
//! concrete `f64` aliases for the main types live at the crate root.

pub mod error;
pub mod grid;
pub mod kernel;
pub mod linsolve;
pub mod optim;
pub mod scalar;
pub mod sensitivity;
pub mod state;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the main domain types.
pub type Field64 = grid::Field<f64>;
pub type Operator64 = grid::Operator<f64>;
pub type Exponent64 = kernel::Exponent<f64>;
pub type StateProblem64 = state::StateProblem<f64>;
pub type ControlProblem64 = optim::ControlProblem<f64>;
pub type SensitivitySystem64 = sensitivity::SensitivitySystem<f64>;
pub type StudyTable64 = study::StudyTable<f64>;

/// `f32` aliases for the carrier types.
pub type Field32 = grid::Field<f32>;
pub type Operator32 = grid::Operator<f32>;
pub type Exponent32 = kernel::Exponent<f32>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_types_are_send_sync() {
        // grids, fields, operators, and frozen systems may be used from
        // concurrent solves
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<grid::Grid>();
        assert_send_sync::<Field64>();
        assert_send_sync::<Operator64>();
        assert_send_sync::<StateProblem64>();
        assert_send_sync::<ControlProblem64>();
        assert_send_sync::<SensitivitySystem64>();
        assert_send_sync::<StudyTable64>();
        assert_send_sync::<Error>();
    }
}
