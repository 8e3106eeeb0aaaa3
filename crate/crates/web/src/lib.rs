//! Browser bindings for the 2D demo page. Points arrive as a flat
//! `[x0, y0, x1, y1, ...]` array and every call returns a JSON string, with
//! `{"error": ...}` on failure.

use geostream::geometry::{ellipsoid_from_coreset, hull_support_query, shell_solve, EllipsoidTarget};
use geostream::linf_coreset::build_coreset;
use geostream::matrix::dot;
use geostream::{DenseMatrix, Error};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const RAYS: usize = 120;

fn points(xy: &[f64]) -> Result<DenseMatrix, Error> {
    if xy.len() % 2 != 0 {
        return Err(Error::ShapeMismatch("odd coordinate count".into()));
    }
    if xy.is_empty() {
        return Err(Error::EmptyStream);
    }
    DenseMatrix::new(xy.len() / 2, 2, xy.to_vec())
}

fn rays() -> impl Iterator<Item = [f64; 2]> {
    (0..RAYS).map(|i| {
        let t = std::f64::consts::TAU * i as f64 / RAYS as f64;
        [t.cos(), t.sin()]
    })
}

fn render(r: Result<Value, Error>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string(),
    }
}

/// Coreset of the symmetric hull `conv(±p_i)` plus its support function on a
/// ring of directions: `exact` from every point, `lower` from the coreset.
pub fn coreset_value(xy: &[f64]) -> Result<Value, Error> {
    let a = points(xy)?;
    let c = build_coreset(&a)?;
    let mut support = vec![];
    for u in rays() {
        let exact = a.rows().map(|r| dot(r, &u).abs()).fold(0.0, f64::max);
        let lower = if c.is_empty() { 0.0 } else { c.query(&u, geostream::linf_coreset::Norm::Linf)? };
        let upper = if c.is_empty() { 0.0 } else { hull_support_query(&c, &u)? };
        support.push(json!({ "u": u, "exact": exact, "lower": lower, "upper": upper }));
    }
    Ok(json!({ "indices": c.indices(), "delta": c.delta(), "support": support }))
}

/// Ellipsoid `E` with `E/delta ⊆ conv(±p_i) ⊆ E`, as a boundary polyline.
pub fn ellipsoid_value(xy: &[f64]) -> Result<Value, Error> {
    let a = points(xy)?;
    let c = build_coreset(&a)?;
    let e = ellipsoid_from_coreset(&c, EllipsoidTarget::Hull)?;
    if e.rank < 2 {
        return Err(Error::InvalidArgument("points are collinear with the origin".into()));
    }
    let boundary: Vec<[f64; 2]> = rays()
        .map(|u| {
            let r = 1.0 / e.ellipsoid.gauge(&u);
            [u[0] * r, u[1] * r]
        })
        .collect();
    Ok(json!({ "indices": c.indices(), "delta": e.delta, "form": e.ellipsoid.h.to_rows(), "boundary": boundary }))
}

/// Thinnest annulus around the points.
pub fn shell_value(xy: &[f64]) -> Result<Value, Error> {
    let a = points(xy)?;
    let s = shell_solve(&a)?;
    Ok(json!({
        "center": s.center,
        "r_inner": s.r_inner,
        "r_outer": s.r_outer,
        "width": s.width(),
        "coreset_sizes": [s.coreset_sizes.0, s.coreset_sizes.1],
    }))
}

#[wasm_bindgen]
pub fn coreset(xy: &[f64]) -> String {
    render(coreset_value(xy))
}

#[wasm_bindgen]
pub fn ellipsoid(xy: &[f64]) -> String {
    render(ellipsoid_value(xy))
}

#[wasm_bindgen]
pub fn shell(xy: &[f64]) -> String {
    render(shell_value(xy))
}
