//! Closed-loop virtual patient trials comparing two ICD tachycardia
//! discrimination algorithms, decided by a sequential probability ratio test.
//!
//! The pipeline per iteration: sample a patient ([`patient`]), build two heart
//! networks ([`heart`], [`sta`]), run each against one device ([`device`]),
//! adjudicate the therapies against the model's ground truth
//! ([`adjudication`]), and feed the comparison into the test ([`sprt`]).
//! Cohort trials summarize arms with [`survival`] statistics. [`trial`] ties
//! it together.

pub mod adjudication;
pub mod device;
pub mod heart;
pub mod patient;
pub mod seed;
pub mod sprt;
pub mod sta;
pub mod survival;
pub mod trial;
