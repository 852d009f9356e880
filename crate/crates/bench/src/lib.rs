//! Synthetic workloads shared by the benchmarks.

use eiqis_core::chainlog::{Chain, ChannelKey};
use eiqis_core::edge::FeatureRecord;
use eiqis_core::fog::{FogConfig, FogState};
use eiqis_core::time::DailyInterval;
use eiqis_core::{CameraDef, Value};

pub fn cameras(n: usize) -> Vec<CameraDef> {
    (0..n)
        .map(|i| CameraDef {
            camera_id: format!("cam{i}"),
            width: 640,
            height: 480,
            location: format!("post {i}"),
            zone: "campus".into(),
            open_hours: DailyInterval::new("07:00".parse().unwrap(), "22:00".parse().unwrap()),
            terrain: "paved".into(),
        })
        .collect()
}

/// `frames` frames of 15 per block, each with a person count and a few
/// per-track speeds, for camera `cam`.
pub fn records(cam: &str, frames: u64) -> Vec<FeatureRecord> {
    let mut out = Vec::new();
    for f in 0..frames {
        let ts = 1_700_000_000_000 + f as i64 * 33;
        let people = (f / 15 % 7) as i64;
        out.push(FeatureRecord {
            ts,
            camera_id: cam.into(),
            frame_no: f,
            track_id: None,
            key: "count_person".into(),
            value: Value::Int(people),
        });
        for t in 0..people as u64 {
            out.push(FeatureRecord {
                ts,
                camera_id: cam.into(),
                frame_no: f,
                track_id: Some(t + 1),
                key: "speed".into(),
                value: Value::Num(((f * 7 + t * 13) % 90) as f64 + 0.5),
            });
        }
    }
    out
}

pub fn key() -> ChannelKey {
    ChannelKey::new(b"bench".to_vec())
}

/// A fog node holding `frames` frames from each of `cams` cameras.
pub fn populated_fog(cams: usize, frames: u64) -> FogState {
    let cameras = cameras(cams);
    let mut fog = FogState::new(FogConfig {
        cameras: cameras.clone(),
        ..Default::default()
    })
    .unwrap();
    let key = key();
    for cam in &cameras {
        let mut chain = Chain::new(cam.camera_id.clone());
        let recs = records(&cam.camera_id, frames);
        for block in recs.chunk_by(|a, b| a.frame_no / 15 == b.frame_no / 15) {
            let b = chain.append_records(block, &key).unwrap();
            fog.ingest_block(&cam.camera_id, b, &key).unwrap();
        }
    }
    fog
}
