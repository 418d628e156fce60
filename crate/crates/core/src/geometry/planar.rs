use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

fn cross(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain). Collinear points are
/// dropped; fewer than three distinct points come back as-is (deduplicated).
pub fn convex_hull_2d(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Signed distance from `p` to the boundary of a convex hull as returned by
/// [`convex_hull_2d`]: positive inside, negative outside. Degenerate hulls
/// (point or segment) have no interior, so the result is never positive.
pub fn hull_signed_distance(hull: &[Vec2], p: &Vec2) -> f64 {
    match hull.len() {
        0 => f64::NEG_INFINITY,
        1 => -(p - hull[0]).norm(),
        2 => -segment_distance(p, &hull[0], &hull[1]),
        n => {
            let mut inside = true;
            let mut dist = f64::INFINITY;
            for i in 0..n {
                let (a, b) = (&hull[i], &hull[(i + 1) % n]);
                if cross(a, b, p) < 0.0 {
                    inside = false;
                }
                dist = dist.min(segment_distance(p, a, b));
            }
            if inside {
                dist
            } else {
                -dist
            }
        }
    }
}

/// Separating-axis test on two convex polygons (touching counts as intersecting).
/// Points and segments are handled as degenerate polygons.
pub fn convex_polygons_intersect(a: &[Vec2], b: &[Vec2]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let axes = |poly: &[Vec2]| -> Vec<Vec2> {
        let n = poly.len();
        let mut out = Vec::new();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            if e.norm_squared() > 0.0 {
                out.push(Vec2::new(-e.y, e.x));
                // a segment also needs its own direction as an axis
                if n == 2 {
                    out.push(e);
                }
            }
        }
        out
    };
    let project = |poly: &[Vec2], axis: &Vec2| {
        poly.iter()
            .map(|p| p.dot(axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let mut all_axes = axes(a);
    all_axes.extend(axes(b));
    if all_axes.is_empty() {
        return a[0] == b[0];
    }
    if a.len() == 1 && b.len() == 1 {
        return a[0] == b[0];
    }
    for axis in &all_axes {
        let (alo, ahi) = project(a, axis);
        let (blo, bhi) = project(b, axis);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}
