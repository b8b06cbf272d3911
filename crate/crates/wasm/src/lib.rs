//! Browser bindings for the subjscan demo page.
//!
//! Three operations: calibrated probability curves over the logit margin,
//! focal-loss curves over the gold-class probability, and the verdict parser.

use serde_json::json;
use subjscan::calibration::{self, ClassWeights, DecisionPolicy, Logits, Probs};
use subjscan::corpus::Label;
use subjscan::strategies;
use wasm_bindgen::prelude::*;

fn evenly_spaced(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    if steps < 2 {
        return Err("need at least 2 steps".into());
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("bad range [{lo}, {hi}]"));
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// `p_subj` after temperature scaling, for margins `z_subj - z_obj` in
/// `[lo, hi]`.
pub fn probability_curve(temperature: f64, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    evenly_spaced(lo, hi, steps)?
        .into_iter()
        .map(|m| {
            let z = calibration::scale(Logits::new(0.0, m), temperature).map_err(|e| e.to_string())?;
            Ok(calibration::softmax(z).map_err(|e| e.to_string())?.subj)
        })
        .collect()
}

/// Margin at which `p_subj` reaches `threshold`: `T * ln(t / (1 - t))`.
pub fn decision_margin(temperature: f64, threshold: f64) -> Result<f64, String> {
    let t = calibration::Temperature::new(temperature).map_err(|e| e.to_string())?;
    let policy = DecisionPolicy::new(threshold).map_err(|e| e.to_string())?;
    let th = policy.subj_threshold();
    Ok(t.get() * (th / (1.0 - th)).ln())
}

pub fn classify(z_obj: f64, z_subj: f64, temperature: f64, threshold: f64) -> Result<String, String> {
    let policy = DecisionPolicy::new(threshold).map_err(|e| e.to_string())?;
    let z = calibration::scale(Logits::new(z_obj, z_subj), temperature).map_err(|e| e.to_string())?;
    let probs = calibration::softmax(z).map_err(|e| e.to_string())?;
    let label = calibration::decide(probs, policy).map_err(|e| e.to_string())?;
    Ok(json!({
        "p_subj": probs.subj,
        "p_obj": probs.obj,
        "label": label,
        "argmax": Logits::new(z_obj, z_subj).argmax(),
    })
    .to_string())
}

/// Focal loss for gold-class probabilities `p_t` evenly spaced in
/// `[0.01, 1]`.
pub fn focal_curve(gamma: f64, weight: f64, steps: usize) -> Result<Vec<f64>, String> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(format!("weight must be positive, got {weight}"));
    }
    let weights = ClassWeights {
        obj: weight,
        subj: weight,
    };
    evenly_spaced(0.01, 1.0, steps)?
        .into_iter()
        .map(|p| {
            let probs = Probs { obj: 1.0 - p, subj: p };
            calibration::focal_loss(probs, Label::Subj, gamma, weights).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn verdict(raw: &str) -> String {
    match strategies::parse_verdict(raw) {
        Ok(v) => json!({ "ok": true, "verdict": v }).to_string(),
        Err(e) => json!({ "ok": false, "error": e.to_string() }).to_string(),
    }
}

#[wasm_bindgen(js_name = probabilityCurve)]
pub fn probability_curve_js(temperature: f64, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    probability_curve(temperature, lo, hi, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = decisionMargin)]
pub fn decision_margin_js(temperature: f64, threshold: f64) -> Result<f64, JsError> {
    decision_margin(temperature, threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = classifyLogits)]
pub fn classify_js(z_obj: f64, z_subj: f64, temperature: f64, threshold: f64) -> Result<String, JsError> {
    classify(z_obj, z_subj, temperature, threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = focalCurve)]
pub fn focal_curve_js(gamma: f64, weight: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    focal_curve(gamma, weight, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = parseVerdict)]
pub fn parse_verdict_js(raw: &str) -> String {
    verdict(raw)
}
