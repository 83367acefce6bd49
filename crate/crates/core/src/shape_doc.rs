//! JSON documents holding sampled shapes and the provenance needed to
//! reproduce them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Triangle, TriangulatedPolygon};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("malformed shape document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("shape {index}: {source}")]
    Shape { index: usize, source: GeometryError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Where the shapes came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `gen` or `infer`.
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Index of the first shape in the run's sample sequence.
    #[serde(default)]
    pub first_sample: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_hash: Option<String>,
    /// Inference grid `[width, height]`; shapes are then in grid units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    /// Source image `[width, height]` in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub triangles: Vec<Triangle>,
    /// `(parent, child)` pairs of the dual tree; triangle 0 is the root.
    #[serde(rename = "edges")]
    pub links: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_posterior: Option<f64>,
}

impl ShapeRecord {
    pub fn new(polygon: &TriangulatedPolygon, log_posterior: Option<f64>) -> Self {
        ShapeRecord {
            triangles: polygon.triangles().to_vec(),
            links: polygon.links().to_vec(),
            log_posterior,
        }
    }

    pub fn to_polygon(&self) -> Result<TriangulatedPolygon, GeometryError> {
        TriangulatedPolygon::new(self.triangles.clone(), self.links.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDocument {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub shapes: Vec<ShapeRecord>,
}

impl ShapeDocument {
    pub fn new(provenance: Provenance, shapes: Vec<ShapeRecord>) -> Self {
        ShapeDocument {
            schema_version: SCHEMA_VERSION,
            provenance,
            shapes,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("shape documents always serialize");
        s.push('\n');
        s
    }

    /// Parses and checks the schema version and every shape's structure.
    pub fn from_json(text: &str) -> Result<Self, DocError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(DocError::SchemaVersion {
                found: header.schema_version,
            });
        }
        let doc: ShapeDocument = serde_json::from_str(text)?;
        doc.polygons()?;
        Ok(doc)
    }

    pub fn polygons(&self) -> Result<Vec<TriangulatedPolygon>, DocError> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(index, s)| s.to_polygon().map_err(|source| DocError::Shape { index, source }))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DocError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DocError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DocError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| DocError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, TriangleType};

    fn quad() -> TriangulatedPolygon {
        let p = Point::new;
        let a = Triangle::new(TriangleType::End, p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)).unwrap();
        let b = Triangle::new(TriangleType::End, p(1.0, 1.0), p(0.1, 0.9), p(0.0, 0.0)).unwrap();
        TriangulatedPolygon::new(vec![a, b], vec![(0, 1)]).unwrap()
    }

    fn doc() -> ShapeDocument {
        ShapeDocument::new(
            Provenance {
                command: "gen".into(),
                config_hash: "abc".into(),
                seed: 7,
                first_sample: 0,
                image_hash: None,
                grid: None,
                image_size: None,
            },
            vec![ShapeRecord::new(&quad(), Some(-1.0 / 3.0))],
        )
    }

    #[test]
    fn round_trip_is_lossless() {
        let d = doc();
        let back = ShapeDocument::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.polygons().unwrap()[0], quad());
    }

    #[test]
    fn triangle_schema() {
        let json = doc().to_json();
        assert!(json.contains("\"type\": 0"));
        assert!(json.contains("\"x0\": [\n"));
    }

    #[test]
    fn rejects_other_versions() {
        let json = doc().to_json().replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            ShapeDocument::from_json(&json),
            Err(DocError::SchemaVersion { found: 2 })
        ));
    }

    #[test]
    fn rejects_broken_shapes() {
        let json = doc().to_json().replace("\"edges\": [\n        [\n          0,\n          1\n        ]\n      ]", "\"edges\": []");
        assert!(matches!(ShapeDocument::from_json(&json), Err(DocError::Shape { .. })));
    }
}
