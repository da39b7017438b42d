//! Exact fixed-point arithmetic, quantized-network semantics, reachable-set
//! algebra, and constructive universal-approximation builders, with an
//! exhaustive verification harness at desk scale.

pub mod act;
pub mod conditions;
pub mod construct;
pub mod dyadic;
pub mod fxp;
pub mod net;
pub mod reach;
pub mod targets;
pub mod verify;

#[cfg(test)]
mod build_check {
    #[test]
    fn workspace_builds() {}
}
