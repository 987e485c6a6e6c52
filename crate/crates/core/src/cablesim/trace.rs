use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::PlanePoint;

/// Spacing between trace samples, milliseconds.
pub const TRACE_SPACING_MS: u64 = 100;

/// Endpoint positions at `100, 200, …` ms after the motion starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrace {
    pub waypoints: Vec<PlanePoint>,
    pub duration_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t_ms: u64,
    x: f64,
    y: f64,
}

impl TrajectoryTrace {
    /// Number of samples a trace of `duration_ms` holds.
    pub fn sample_count(duration_ms: u64) -> usize {
        (duration_ms / TRACE_SPACING_MS) as usize
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn final_point(&self) -> Option<PlanePoint> {
        self.waypoints.last().copied()
    }

    /// Sample `i`, repeating the last sample past the end.
    pub fn padded(&self, i: usize) -> Option<PlanePoint> {
        self.waypoints.get(i).or(self.waypoints.last()).copied()
    }

    pub fn mirrored(&self) -> Self {
        Self { waypoints: self.waypoints.iter().map(|p| p.mirrored()).collect(), duration_ms: self.duration_ms }
    }

    /// CSV with a `t_ms,x,y` header. Each `comment` line is written first,
    /// prefixed with `#`.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<(), SimError> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        for (i, p) in self.waypoints.iter().enumerate() {
            w.serialize(Row { t_ms: (i as u64 + 1) * TRACE_SPACING_MS, x: p.x, y: p.y })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SimError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_ms", "x", "y"] {
            return Err(SimError::TraceFormat(format!("expected header t_ms,x,y, got {headers:?}")));
        }
        let mut waypoints = Vec::new();
        for row in r.deserialize() {
            let row: Row = row?;
            let expected = (waypoints.len() as u64 + 1) * TRACE_SPACING_MS;
            if row.t_ms != expected {
                return Err(SimError::TraceFormat(format!("expected t_ms {expected}, got {}", row.t_ms)));
            }
            if !(row.x.is_finite() && row.y.is_finite()) {
                return Err(SimError::TraceFormat(format!("non-finite sample at t_ms {}", row.t_ms)));
            }
            waypoints.push(PlanePoint::new(row.x, row.y));
        }
        let duration_ms = waypoints.len() as u64 * TRACE_SPACING_MS;
        Ok(Self { waypoints, duration_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let t = TrajectoryTrace {
            waypoints: vec![PlanePoint::new(0.1, 0.2), PlanePoint::new(-1.0 / 3.0, 0.123456789012345)],
            duration_ms: 250,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["config 0123abcd".to_string()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config 0123abcd\nt_ms,x,y\n100,"));
        let back = TrajectoryTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.waypoints, t.waypoints);
        assert_eq!(back.duration_ms, 200);
    }

    #[test]
    fn rejects_gaps_and_bad_headers() {
        assert!(TrajectoryTrace::read_csv("t_ms,x,y\n100,0,0\n300,0,0\n".as_bytes()).is_err());
        assert!(TrajectoryTrace::read_csv("t,x,y\n100,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn sample_count_floors() {
        assert_eq!(TrajectoryTrace::sample_count(0), 0);
        assert_eq!(TrajectoryTrace::sample_count(99), 0);
        assert_eq!(TrajectoryTrace::sample_count(1234), 12);
    }
}
