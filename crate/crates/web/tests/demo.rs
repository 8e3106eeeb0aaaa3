use geostream_web::{coreset, coreset_value, ellipsoid_value, shell, shell_value};
use serde_json::Value;

fn ring(n: usize, c: [f64; 2], r: f64) -> Vec<f64> {
    (0..n)
        .flat_map(|i| {
            let t = i as f64 * 0.7;
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect()
}

#[test]
fn support_bounds_bracket_the_hull() {
    let xy = [1.0, 0.5, -2.0, 1.0, 0.3, -1.5, 2.5, 2.0, -0.5, -0.2];
    let v = coreset_value(&xy).unwrap();
    let delta = v["delta"].as_f64().unwrap();
    for s in v["support"].as_array().unwrap() {
        let (e, lo, hi) = (s["exact"].as_f64().unwrap(), s["lower"].as_f64().unwrap(), s["upper"].as_f64().unwrap());
        assert!(lo <= e + 1e-9 && e <= hi + 1e-9 && hi <= delta * e + 1e-9);
    }
}

#[test]
fn ellipsoid_boundary_contains_the_points_after_scaling() {
    let xy = [1.0, 0.5, -2.0, 1.0, 0.3, -1.5, 2.5, 2.0];
    let v = ellipsoid_value(&xy).unwrap();
    let h = &v["form"];
    let at = |i: usize, j: usize| h[i][j].as_f64().unwrap();
    // every point lies in E, the outer ellipsoid
    for p in xy.chunks(2) {
        let g = at(0, 0) * p[0] * p[0] + 2.0 * at(0, 1) * p[0] * p[1] + at(1, 1) * p[1] * p[1];
        assert!(g <= 1.0 + 1e-9, "{g}");
    }
    assert!(ellipsoid_value(&[1.0, 1.0, 2.0, 2.0]).is_err());
}

#[test]
fn shell_of_ring_is_thin() {
    let v = shell_value(&ring(15, [0.5, -1.0], 2.0)).unwrap();
    assert!(v["width"].as_f64().unwrap() < 1e-6);
}

#[test]
fn bad_input_is_reported_as_json() {
    let v: Value = serde_json::from_str(&coreset(&[1.0, 2.0, 3.0])).unwrap();
    assert_eq!(v["error"]["kind"], "ShapeMismatch");
    let v: Value = serde_json::from_str(&shell(&[])).unwrap();
    assert_eq!(v["error"]["kind"], "EmptyStream");
}
