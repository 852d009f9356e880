use serde::{Deserialize, Serialize};

use super::FogError;
use crate::edge::FeatureRecord;
use crate::scenario::CameraDef;
use crate::time::{local_hour, local_time_of_day_ms};

/// A feature record enriched with where and when it was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualizedRecord {
    #[serde(flatten)]
    pub record: FeatureRecord,
    pub zone: String,
    pub terrain: String,
    pub open_now: bool,
    pub hour_of_day: u8,
}

pub fn contextualize(
    record: &FeatureRecord,
    camera: &CameraDef,
    tz_offset_min: i32,
) -> Result<ContextualizedRecord, FogError> {
    if record.camera_id != camera.camera_id {
        return Err(FogError::UnknownCamera(record.camera_id.clone()));
    }
    Ok(ContextualizedRecord {
        record: record.clone(),
        zone: camera.zone.clone(),
        terrain: camera.terrain.clone(),
        open_now: camera
            .open_hours
            .contains_ms(local_time_of_day_ms(record.ts, tz_offset_min)),
        hour_of_day: local_hour(record.ts, tz_offset_min),
    })
}
