use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::RasterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Target,
    Background,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Target => "target",
            ClassLabel::Background => "background",
        }
    }

    /// 1.0 for target, 0.0 for background.
    pub fn as_f64(self) -> f64 {
        match self {
            ClassLabel::Target => 1.0,
            ClassLabel::Background => 0.0,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(ClassLabel::Target),
            "background" => Ok(ClassLabel::Background),
            other => Err(RasterError::UnknownClass(other.to_string())),
        }
    }
}

/// A field-surveyed outline in map coordinates. The ring is stored closed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPolygon {
    pub id: String,
    pub class: ClassLabel,
    pub ring: Vec<(f64, f64)>,
}

impl GroundTruthPolygon {
    /// Builds a polygon from a closed ring, rejecting degenerate input.
    pub fn new(
        id: impl Into<String>,
        class: ClassLabel,
        ring: Vec<(f64, f64)>,
    ) -> Result<Self, RasterError> {
        let id = id.into();
        if ring.len() < 4 {
            // 3 distinct vertices plus the closing repeat
            return Err(RasterError::DegeneratePolygon {
                id,
                reason: format!(
                    "{} positions, need at least 3 distinct vertices",
                    ring.len()
                ),
            });
        }
        if ring.first() != ring.last() {
            return Err(RasterError::UnclosedRing(id));
        }
        if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(RasterError::DegeneratePolygon {
                id,
                reason: "non-finite vertex".into(),
            });
        }
        if shoelace_area(&ring).abs() <= 0.0 {
            return Err(RasterError::DegeneratePolygon {
                id,
                reason: "zero area".into(),
            });
        }
        Ok(Self { id, class, ring })
    }

    /// Closes the ring if needed before validating.
    pub fn from_open_ring(
        id: impl Into<String>,
        class: ClassLabel,
        mut ring: Vec<(f64, f64)>,
    ) -> Result<Self, RasterError> {
        if !ring.is_empty() && ring.first() != ring.last() {
            ring.push(ring[0]);
        }
        Self::new(id, class, ring)
    }

    pub fn area(&self) -> f64 {
        shoelace_area(&self.ring).abs()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_ring(&self.ring, x, y)
    }

    /// (min_x, min_y, max_x, max_y)
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.ring.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

/// Signed shoelace area of a closed ring (positive for counter-clockwise).
pub fn shoelace_area(ring: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Even-odd crossing test against a closed ring.
pub fn point_in_ring(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (xi, yi) = w[0];
        let (xj, yj) = w[1];
        if (yi > y) != (yj > y) {
            let x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
            if x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    pub polygons: Vec<GroundTruthPolygon>,
}

impl GroundTruthSet {
    pub fn targets(&self) -> impl Iterator<Item = &GroundTruthPolygon> {
        self.polygons
            .iter()
            .filter(|p| p.class == ClassLabel::Target)
    }

    pub fn target_count(&self) -> usize {
        self.targets().count()
    }

    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
        Self::from_geojson_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let text = serde_json::to_string_pretty(&self.to_geojson())
            .expect("geojson serialization cannot fail");
        std::fs::write(path, text + "\n").map_err(|e| RasterError::io(path, e))
    }

    pub fn from_geojson_str(text: &str) -> Result<Self, RasterError> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| RasterError::MalformedGroundTruth(e.to_string()))?;
        Self::from_geojson(&doc)
    }

    pub fn from_geojson(doc: &Value) -> Result<Self, RasterError> {
        let bad = |m: &str| RasterError::MalformedGroundTruth(m.to_string());
        if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
            return Err(bad("top-level object is not a FeatureCollection"));
        }
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing features array"))?;

        let mut polygons = Vec::with_capacity(features.len());
        for (i, feature) in features.iter().enumerate() {
            let props = feature.get("properties").cloned().unwrap_or(Value::Null);
            let id = match props.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("feature-{i}"),
            };
            let class: ClassLabel = props
                .get("class")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(&format!("feature {id:?} has no string \"class\" property")))?
                .parse()?;
            let geometry = feature
                .get("geometry")
                .ok_or_else(|| bad(&format!("feature {id:?} has no geometry")))?;
            if geometry.get("type").and_then(Value::as_str) != Some("Polygon") {
                return Err(bad(&format!("feature {id:?} is not a Polygon")));
            }
            let rings = geometry
                .get("coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("feature {id:?} has no coordinates")))?;
            // holes are not used by any consumer; only the exterior ring is kept
            let exterior = rings
                .first()
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("feature {id:?} has no exterior ring")))?;
            let ring = exterior
                .iter()
                .map(|pos| {
                    let p = pos.as_array().filter(|p| p.len() >= 2);
                    match p.map(|p| (p[0].as_f64(), p[1].as_f64())) {
                        Some((Some(x), Some(y))) => Ok((x, y)),
                        _ => Err(bad(&format!("feature {id:?} has a malformed position"))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            polygons.push(GroundTruthPolygon::new(id, class, ring)?);
        }
        Ok(Self { polygons })
    }

    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .polygons
            .iter()
            .map(|p| {
                let coords: Vec<Value> = p.ring.iter().map(|&(x, y)| json!([x, y])).collect();
                json!({
                    "type": "Feature",
                    "properties": { "class": p.class.as_str(), "id": p.id },
                    "geometry": { "type": "Polygon", "coordinates": [coords] },
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}
