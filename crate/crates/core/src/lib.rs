//! Amplitude-modulation sensing with squeezed light: analytic noise and
//! Fisher-information models, frequency- and time-domain simulators, and the
//! statistics used to infer quantum advantage from simulated spectra.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod experiments;
pub mod freqsim;
pub mod inference;
pub mod params;
pub mod rng;
pub mod table;
pub mod timesim;
