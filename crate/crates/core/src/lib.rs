//! Event-oriented indexable and queryable surveillance over an
//! edge / fog / cloud hierarchy.
//!
//! Edge agents turn camera frames into key/value feature records, ship them
//! to a fog node over an authenticated hash chain, and the fog keeps an
//! inverted index that operators query. The cloud tier builds hourly
//! profiles from what the fog has indexed.

pub mod chainlog;
pub mod cloud;
pub mod edge;
pub mod fog;
pub mod pipeline;
pub mod query;
pub mod queryd;
pub mod scenario;
pub mod time;
pub mod value;
pub mod wire;

pub use scenario::{load_world, BBox, CameraDef, EntityDef, GroundTruthFrame, ObjectClass, WorldConfig};
pub use value::{Cmp, Value};
