//! Geodesic distance, density-based clustering, convex hulls and place
//! footprint construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 coordinate pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates latitude/longitude ranges and normalizes longitude to (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::SchemaError(format!("latitude {lat} out of [-90, 90]")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::SchemaError(format!(
                "longitude {lon} out of [-180, 180]"
            )));
        }
        let lon = if lon == -180.0 { 180.0 } else { lon };
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

/// Clustering parameters: radius in meters plus minPts expressed as a share
/// of a site's photos with an absolute floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub eps_m: f64,
    pub min_pts_pct: f64,
    pub min_pts_floor: usize,
}

impl ClusterParams {
    pub fn new(eps_m: f64, min_pts_pct: f64, min_pts_floor: usize) -> Result<Self> {
        if eps_m.is_nan() || eps_m <= 0.0 {
            return Err(Error::InvalidConfig(format!("eps_m {eps_m} must be > 0")));
        }
        if !(min_pts_pct > 0.0 && min_pts_pct <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "min_pts_pct {min_pts_pct} must be in (0, 1]"
            )));
        }
        if min_pts_floor < 3 {
            return Err(Error::InvalidConfig(format!(
                "min_pts_floor {min_pts_floor} must be >= 3"
            )));
        }
        Ok(Self {
            eps_m,
            min_pts_pct,
            min_pts_floor,
        })
    }

    /// Effective minPts for a site with `n` points: max(floor, ceil(pct * n)).
    pub fn min_pts_for(&self, n: usize) -> usize {
        let from_pct = (self.min_pts_pct * n as f64).ceil() as usize;
        from_pct.max(self.min_pts_floor)
    }
}

/// Per-point cluster labels; `None` marks noise. Cluster ids are dense
/// `0..cluster_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

impl ClusterAssignment {
    /// Point indices of cluster `id`, in input order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(id))
            .map(|(i, _)| i)
            .collect()
    }
}

/// DBSCAN under the haversine metric. Core points have at least `min_pts`
/// neighbors within `eps_m` (self included). Border points go to the first
/// core cluster that reaches them in input order.
pub fn dbscan(points: &[GeoPoint], eps_m: f64, min_pts: usize) -> ClusterAssignment {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut cluster_count = 0;

    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| haversine_m(points[i], points[j]) <= eps_m)
            .collect()
    };

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            continue; // noise unless claimed later by a core point
        }
        let cluster = cluster_count;
        cluster_count += 1;
        labels[i] = Some(cluster);
        let mut queue: std::collections::VecDeque<usize> = nbrs.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let jn = neighbors(j);
            if jn.len() >= min_pts {
                queue.extend(jn);
            }
        }
    }

    ClusterAssignment {
        labels,
        cluster_count,
    }
}

/// A point in a local planar frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

/// Equirectangular projection centered at `origin`:
/// x = R * dlon * cos(lat0), y = R * dlat.
pub fn project(p: GeoPoint, origin: GeoPoint) -> PlanarPoint {
    let mut dlon = p.lon - origin.lon;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    PlanarPoint {
        x: EARTH_RADIUS_M * dlon.to_radians() * origin.lat.to_radians().cos(),
        y: EARTH_RADIUS_M * (p.lat - origin.lat).to_radians(),
    }
}

/// Inverse of [`project`].
pub fn unproject(p: PlanarPoint, origin: GeoPoint) -> GeoPoint {
    let lat = origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let mut lon = origin.lon + (p.x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon <= -180.0 {
        lon += 360.0;
    }
    GeoPoint { lat, lon }
}

fn cross(o: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull via the monotone chain, CCW vertex order, collinear vertices
/// dropped. Fails on fewer than 3 distinct points or an all-collinear set.
pub fn convex_hull(points: &[PlanarPoint]) -> Result<Vec<PlanarPoint>> {
    let mut pts: Vec<PlanarPoint> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{} distinct points, need at least 3",
            pts.len()
        )));
    }

    let build = |iter: &mut dyn Iterator<Item = PlanarPoint>| {
        let mut chain: Vec<PlanarPoint> = Vec::new();
        for p in iter {
            while chain.len() >= 2 && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= 0.0
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain
    };

    let mut lower = build(&mut pts.iter().copied());
    let mut upper = build(&mut pts.iter().rev().copied());
    lower.pop();
    upper.pop();
    lower.append(&mut upper);
    if lower.len() < 3 {
        return Err(Error::DegenerateGeometry("all points collinear".into()));
    }
    Ok(lower)
}

/// Signed area of a simple polygon (positive for CCW rings).
pub fn polygon_area(vertices: &[PlanarPoint]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - a.y * b.x;
    }
    acc / 2.0
}

// Cross-product slack for boundary-inclusive containment; covers f64
// round-off at city-scale coordinates.
const CONTAINMENT_TOL: f64 = 1e-6;

/// Boundary-inclusive test of a local point against a CCW convex ring.
pub fn point_in_convex(p: PlanarPoint, vertices: &[PlanarPoint]) -> bool {
    let n = vertices.len();
    (0..n).all(|i| cross(vertices[i], vertices[(i + 1) % n], p) >= -CONTAINMENT_TOL)
}

/// One convex footprint part, stored in the local frame it was built in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintPolygon {
    /// Center of the local equirectangular projection (the cluster centroid).
    pub origin: GeoPoint,
    /// CCW hull vertices in the local frame, meters.
    pub vertices: Vec<PlanarPoint>,
}

impl FootprintPolygon {
    /// Hull vertices as lat/lon, same CCW order.
    pub fn vertices_geo(&self) -> Vec<GeoPoint> {
        self.vertices.iter().map(|&v| unproject(v, self.origin)).collect()
    }

    /// Rebuilds the local representation from geographic vertices and the
    /// recorded projection origin.
    pub fn from_geo(origin: GeoPoint, vertices_geo: &[GeoPoint]) -> Self {
        Self {
            origin,
            vertices: vertices_geo.iter().map(|&v| project(v, origin)).collect(),
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        point_in_convex(project(p, self.origin), &self.vertices)
    }
}

/// A site's multi-part footprint plus the clustered points that built it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub site_id: String,
    pub footprint: Vec<FootprintPolygon>,
    pub member_points: Vec<GeoPoint>,
    pub params_used: ClusterParams,
}

/// True iff `p` is inside or on the boundary of any footprint polygon.
pub fn point_in_footprint(p: GeoPoint, place: &Place) -> bool {
    place.footprint.iter().any(|poly| poly.contains(p))
}

fn centroid(points: &[GeoPoint]) -> GeoPoint {
    let n = points.len() as f64;
    GeoPoint {
        lat: points.iter().map(|p| p.lat).sum::<f64>() / n,
        lon: points.iter().map(|p| p.lon).sum::<f64>() / n,
    }
}

/// Clusters photo points and hulls every non-noise cluster with at least 3
/// non-collinear points. Clusters too degenerate for a polygon are dropped;
/// member points are the points of retained clusters.
pub fn construct_place(
    site_id: &str,
    photo_points: &[GeoPoint],
    params: ClusterParams,
) -> Result<Place> {
    let min_pts = params.min_pts_for(photo_points.len());
    let assignment = dbscan(photo_points, params.eps_m, min_pts);

    let mut footprint = Vec::new();
    let mut member_points = Vec::new();
    for cluster in 0..assignment.cluster_count {
        let idx = assignment.members(cluster);
        let pts: Vec<GeoPoint> = idx.iter().map(|&i| photo_points[i]).collect();
        if pts.len() < 3 {
            continue;
        }
        let origin = centroid(&pts);
        let local: Vec<PlanarPoint> = pts.iter().map(|&p| project(p, origin)).collect();
        match convex_hull(&local) {
            Ok(vertices) => {
                footprint.push(FootprintPolygon { origin, vertices });
                member_points.extend(pts);
            }
            Err(Error::DegenerateGeometry(_)) => continue,
            Err(e) => return Err(e),
        }
    }

    if footprint.is_empty() {
        return Err(Error::EmptyPlace {
            site_id: site_id.to_string(),
        });
    }
    Ok(Place {
        site_id: site_id.to_string(),
        footprint,
        member_points,
        params_used: params,
    })
}
