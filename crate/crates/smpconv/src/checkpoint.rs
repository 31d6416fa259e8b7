//! Filter checkpoints: a self-describing JSON document with full round-trip
//! precision. Loading re-validates every invariant rather than trusting the
//! file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmpError};
use crate::filter::SmpFilter;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    dim: usize,
    channels: usize,
    n_points: usize,
    positions: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    radii: Vec<f64>,
    radius_min: f64,
    radius_max: f64,
}

/// Write `filter` to `path` along with the radius bounds it was trained
/// under.
pub fn save_filter(
    filter: &SmpFilter,
    radius_bounds: (f64, f64),
    path: &Path,
) -> Result<()> {
    let (radius_min, radius_max) = radius_bounds;
    let doc = CheckpointDoc {
        dim: filter.dim(),
        channels: filter.channels(),
        n_points: filter.n_points(),
        positions: filter
            .positions()
            .chunks(filter.dim())
            .map(<[f64]>::to_vec)
            .collect(),
        weights: filter
            .weights()
            .chunks(filter.channels())
            .map(<[f64]>::to_vec)
            .collect(),
        radii: filter.radii().to_vec(),
        radius_min,
        radius_max,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| SmpError::Checkpoint(format!("could not encode checkpoint: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| SmpError::io(path, e))
}

/// Read a filter back, returning it with the stored radius bounds.
pub fn load_filter(path: &Path) -> Result<(SmpFilter, (f64, f64))> {
    let text = fs::read_to_string(path).map_err(|e| SmpError::io(path, e))?;
    let doc: CheckpointDoc = serde_json::from_str(&text).map_err(|e| {
        SmpError::Checkpoint(format!("{} is not a valid checkpoint: {e}", path.display()))
    })?;
    let bad = |msg: String| SmpError::Checkpoint(format!("{}: {msg}", path.display()));
    if !(doc.radius_min > 0.0 && doc.radius_min < doc.radius_max) {
        return Err(bad(format!(
            "radius bounds [{}, {}] are not ordered positives",
            doc.radius_min, doc.radius_max
        )));
    }
    if doc.positions.len() != doc.n_points
        || doc.weights.len() != doc.n_points
        || doc.radii.len() != doc.n_points
    {
        return Err(bad(format!(
            "declared {} points but stored {}/{}/{} positions/weights/radii",
            doc.n_points,
            doc.positions.len(),
            doc.weights.len(),
            doc.radii.len()
        )));
    }
    if doc.positions.iter().any(|p| p.len() != doc.dim) {
        return Err(bad(format!("a position row is not {}-dimensional", doc.dim)));
    }
    if doc.weights.iter().any(|w| w.len() != doc.channels) {
        return Err(bad(format!("a weight row does not have {} channels", doc.channels)));
    }
    if doc
        .radii
        .iter()
        .any(|&r| !(doc.radius_min..=doc.radius_max).contains(&r))
    {
        return Err(bad("a radius lies outside the stored bounds".into()));
    }
    let filter = SmpFilter::new(
        doc.dim,
        doc.channels,
        doc.positions.into_iter().flatten().collect(),
        doc.weights.into_iter().flatten().collect(),
        doc.radii,
    )
    .map_err(|e| bad(e.to_string()))?;
    Ok((filter, (doc.radius_min, doc.radius_max)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{RADIUS_MAX, RADIUS_MIN};
    use crate::optim::init_smp;

    #[test]
    fn round_trip_is_bitwise_exact() {
        let f = init_smp(17, 2, 3, 0.3, &[(-1.0, 1.0), (-1.0, 1.0)], 0.217, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("filter.json");
        save_filter(&f, (RADIUS_MIN, RADIUS_MAX), &path).unwrap();
        let (loaded, bounds) = load_filter(&path).unwrap();
        assert_eq!(loaded.positions(), f.positions());
        assert_eq!(loaded.weights(), f.weights());
        assert_eq!(loaded.radii(), f.radii());
        assert_eq!(bounds, (RADIUS_MIN, RADIUS_MAX));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.json");
        std::fs::write(
            &path,
            r#"{"dim":1,"channels":1,"n_points":1,"positions":[[0.0]],
               "weights":[[1.0]],"radii":[0.5],"radius_min":0.0001,
               "radius_max":1.0,"surprise":true}"#,
        )
        .unwrap();
        let err = load_filter(&path).unwrap_err();
        assert!(err.to_string().contains("extra.json"));
    }

    #[test]
    fn shape_lies_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.json");
        std::fs::write(
            &path,
            r#"{"dim":2,"channels":1,"n_points":2,"positions":[[0.0,0.0]],
               "weights":[[1.0],[2.0]],"radii":[0.5,0.5],
               "radius_min":0.0001,"radius_max":1.0}"#,
        )
        .unwrap();
        assert!(load_filter(&path).is_err());

        let path = dir.path().join("fat_radius.json");
        std::fs::write(
            &path,
            r#"{"dim":1,"channels":1,"n_points":1,"positions":[[0.0]],
               "weights":[[1.0]],"radii":[5.0],
               "radius_min":0.0001,"radius_max":1.0}"#,
        )
        .unwrap();
        assert!(load_filter(&path).is_err());
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_filter(Path::new("/nonexistent/nowhere.json")).unwrap_err();
        assert!(err.to_string().contains("nowhere.json"));
    }
}
