//! Multiple-choice selection and posted-price revenue.

pub mod kselect;
pub mod revenue;
