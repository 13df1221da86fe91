//! Temporal-mode toolkit for two-photon states heralded by time-separated clicks
//! on a continuous-wave two-mode squeezed source.
//!
//! * [`modes`]: trigger, symmetric/antisymmetric and register mode functions.
//! * [`analytic`]: closed-form photon statistics, loss and `g²`.
//! * [`fock`]: exact truncated multimode Fock engine.
//! * [`homodyne`]: quadrature samplers, trace synthesis and mode projection.
//! * [`clicks`]: thermal idler field, photon clicks, `g²` histograms and coincidences.
//! * [`tomo`]: maximum-likelihood reconstruction from quadrature samples.
//! * [`experiment`]: configuration and the runs behind the command-line tool.
//!
//! Quadratures follow `x = (a + a†)/√2`, so vacuum has variance 1/2.

pub mod analytic;
pub mod clicks;
pub mod experiment;
pub mod fock;
pub mod homodyne;
pub mod modes;
pub mod par;
pub mod tomo;

pub use analytic::{OpoParams, PhotonDistribution};
pub use fock::{DensityMatrix, ModeRegister, MultimodeState};
pub use modes::{HeraldPair, ModeFunction, TimeGrid};
pub use par::Execution;
