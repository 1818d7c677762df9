//! Cluster-wise Gaussian-process forecasting of hourly PV plant output.
//!
//! Hourly weather and power records are grouped by k-means on
//! (hour, power), each group gets its own Matérn 5/2 GP regression over the
//! correlated weather features, and forecasts are routed to a group by
//! hour and season.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod data;
pub mod evaluation;
pub mod features;
pub mod gpr;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod synthetic;
