//! Random inputs, brute-force oracles and the invariant properties shared by
//! the property suite and the acceptance run.
#![allow(dead_code)]

pub mod oracle;
pub mod props;
