#![allow(dead_code)]

pub mod checks;
pub mod oracle;
pub mod synth;
