//! Convex hull of integer points via Andrew's monotone chain.

/// Convex hull of a point set, in counterclockwise order (y axis pointing
/// down, matching raster rows) with no repeated first vertex.
///
/// Duplicates are tolerated. Degenerate inputs return what exists: a single
/// point for coincident input, the two extreme points for collinear input.
/// Collinear points along hull edges are dropped.
///
/// Panics on empty input.
pub fn convex_hull(points: &[[i64; 2]]) -> Vec<[i64; 2]> {
    assert!(!points.is_empty(), "hull of an empty point set");
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();

    if pts.len() == 1 {
        return pts;
    }

    let cross = |o: [i64; 2], a: [i64; 2], b: [i64; 2]| -> i64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };

    let mut lower: Vec<[i64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }

    let mut upper: Vec<[i64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }

    // Chain ends repeat each other's starts.
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Twice the signed area of a polygon (shoelace). Positive for the
/// orientation produced by [`convex_hull`].
pub fn polygon_area_doubled(polygon: &[[i64; 2]]) -> i64 {
    if polygon.len() < 3 {
        return 0;
    }
    let mut acc = 0i64;
    for (idx, &p) in polygon.iter().enumerate() {
        let q = polygon[(idx + 1) % polygon.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc.abs()
}

/// Euclidean boundary length of a polygon. A two-point "polygon" counts its
/// segment twice (out and back), a single point has length zero.
pub fn polygon_perimeter(polygon: &[[i64; 2]]) -> f64 {
    if polygon.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (idx, &p) in polygon.iter().enumerate() {
        let q = polygon[(idx + 1) % polygon.len()];
        let dx = (p[0] - q[0]) as f64;
        let dy = (p[1] - q[1]) as f64;
        acc += dx.hypot(dy);
    }
    acc
}

/// True when the point lies inside or on the hull (counterclockwise input,
/// y-down orientation as produced by [`convex_hull`]).
pub fn hull_contains(hull: &[[i64; 2]], p: [i64; 2]) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let [a, b] = [hull[0], hull[1]];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            cross == 0
                && p[0] >= a[0].min(b[0])
                && p[0] <= a[0].max(b[0])
                && p[1] >= a[1].min(b[1])
                && p[1] <= a[1].max(b[1])
        }
        _ => hull.iter().enumerate().all(|(idx, &a)| {
            let b = hull[(idx + 1) % hull.len()];
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0
        }),
    }
}
