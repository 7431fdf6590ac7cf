//! WebAssembly bindings for the demo page. Each call returns JSON, or
//! throws the error message.

pub mod demo;

use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(r: rooffit::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Bends a noisy flat roof onto a cylinder or sphere and returns a
/// cross-section through it.
#[wasm_bindgen]
pub fn bend_profile(spherical: bool, radius_factor: f64, noise: f64, seed: u32) -> Result<String, JsError> {
    to_json(demo::bend_profile(spherical, radius_factor, noise, seed.into()))
}

#[wasm_bindgen]
pub fn weight_field(sigma_dis: f64, sigma_nv: f64, sigma_rgb: f64, color_diff: f64) -> Result<String, JsError> {
    to_json(demo::weight_field(sigma_dis, sigma_nv, sigma_rgb, color_diff))
}

#[wasm_bindgen]
pub fn compare_segmentation(wave: f64, seed: u32) -> Result<String, JsError> {
    to_json(demo::compare_segmentation(wave, seed.into()))
}
