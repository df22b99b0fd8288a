use std::fs::{File, OpenOptions};
use std::io;
use std::path::Path;
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};

use crate::RecommendResponse;

pub const LOG_HEADER: [&str; 5] = ["timestamp", "patient_type", "availability", "policy", "action"];

/// Append-only CSV of served recommendations. Availability is written as a
/// bit string in facility order, e.g. `101`.
pub struct DecisionLog {
    writer: Mutex<csv::Writer<File>>,
}

impl DecisionLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut writer = csv::Writer::from_writer(file);
        if fresh {
            writer.write_record(LOG_HEADER)?;
            writer.flush()?;
        }
        Ok(DecisionLog {
            writer: Mutex::new(writer),
        })
    }

    pub fn append(&self, response: &RecommendResponse, availability: &[bool]) -> io::Result<()> {
        let bits: String = availability.iter().map(|&b| if b { '1' } else { '0' }).collect();
        let mut w = self.writer.lock().expect("decision log lock poisoned");
        w.write_record([
            Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            response.patient_type.clone(),
            bits,
            response.policy.to_string(),
            response.action.to_string(),
        ])?;
        w.flush()
    }
}
