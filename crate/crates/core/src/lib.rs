//! Day-ahead dynamic pricing for an electricity retailer serving a mixed
//! customer pool.
//!
//! The retailer announces 24 hourly prices; three kinds of customers answer:
//!
//! * households with a home energy management system ([`hems`]) that solve
//!   their appliance scheduling problems exactly,
//! * smart-meter households whose behaviour is learned from metered history
//!   ([`csm`]),
//! * customers without smart meters, modelled as one aggregate linear demand
//!   function with elasticity constraints ([`cnone`]).
//!
//! The retailer's profit ([`retailer`]) is maximized over prices by a binary
//! genetic algorithm ([`ga`]) and compared against an iterative best-response
//! heuristic ([`baseline`]). [`scenario`] wires everything into case studies.

pub mod baseline;
pub mod cnone;
pub mod csm;
mod error;
pub mod ga;
pub mod hems;
pub mod numerics;
mod prices;
pub mod retailer;
pub mod scenario;

pub use error::{Error, Result};
pub use prices::{PriceVector, Window, DAY_START_HOUR, HORIZON};
