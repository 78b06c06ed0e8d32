//! Browser bindings for three planar operations: the `Γ` point of a point
//! set, a Tverberg partition, and an approximate consensus run.
//!
//! Every binding takes and returns JSON text. Points are arrays of
//! coordinates given as integers or `"num/den"` strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use bvc_core::approx_async::run_approx;
use bvc_core::geom::rational::{parse_rational, to_decimal_string, to_fraction_string};
use bvc_core::geom::{gamma_select, tverberg_oracle, GeomError, PointMultiset, Rational, RationalPoint};
use bvc_core::model::{Mode, ScenarioConfig, Strategy};
use bvc_core::scenario::check_trace;
use bvc_core::simnet::Record;

#[derive(Deserialize)]
#[serde(untagged)]
enum Coord {
    Int(i64),
    Text(String),
}

#[derive(Serialize, Debug, PartialEq)]
pub struct ShownPoint {
    pub exact: Vec<String>,
    pub approx: Vec<f64>,
}

fn show(p: &RationalPoint) -> ShownPoint {
    ShownPoint {
        exact: p.coords().iter().map(to_fraction_string).collect(),
        approx: p.coords().iter().map(approx).collect(),
    }
}

fn approx(v: &Rational) -> f64 {
    to_decimal_string(v, 17).parse().unwrap_or(f64::NAN)
}

fn parse_points(json: &str) -> Result<Vec<RationalPoint>, String> {
    let raw: Vec<Vec<Coord>> = serde_json::from_str(json).map_err(|e| format!("bad point list: {e}"))?;
    raw.into_iter()
        .map(|coords| {
            coords
                .into_iter()
                .map(|c| match c {
                    Coord::Int(v) => Ok(Rational::from_integer(v.into())),
                    Coord::Text(t) => parse_rational(&t).ok_or_else(|| format!("'{t}' is not a rational")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(RationalPoint::new)
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GammaOut {
    point: Option<ShownPoint>,
}

pub fn gamma_point_json(points: &str, f: usize) -> Result<String, String> {
    let y = PointMultiset::new(parse_points(points)?);
    let point = match gamma_select(&y, f) {
        Ok(p) => Some(show(&p)),
        Err(GeomError::EmptyIntersection) => None,
        Err(e) => return Err(e.to_string()),
    };
    to_json(&GammaOut { point })
}

#[derive(Serialize)]
struct TverbergOut {
    blocks: Option<Vec<Vec<usize>>>,
    witness: Option<ShownPoint>,
}

pub fn tverberg_json(points: &str, f: usize) -> Result<String, String> {
    let y = PointMultiset::new(parse_points(points)?);
    let found = tverberg_oracle(&y, f).map_err(|e| e.to_string())?;
    to_json(&TverbergOut {
        witness: found.as_ref().map(|t| show(&t.witness)),
        blocks: found.map(|t| t.blocks),
    })
}

#[derive(Serialize)]
struct RunOut {
    rounds: Vec<Vec<Option<ShownPoint>>>,
    faulty: Vec<usize>,
    decisions: Vec<Option<ShownPoint>>,
    verdicts: Vec<String>,
    gamma: Option<String>,
    round_bound: Option<u64>,
}

/// Approximate consensus among the given inputs. The last `f` processes
/// are faulty and all send the point `lie`. `ν` and `U` are taken from the
/// inputs.
pub fn approx_run_json(points: &str, f: usize, lie: &str, epsilon: &str, seed: u64) -> Result<String, String> {
    let inputs = parse_points(points)?;
    let lie = parse_points(&format!("[{lie}]"))?.remove(0);
    let n = inputs.len();
    let d = inputs.first().map(RationalPoint::dim).ok_or("no inputs")?;
    let mut cfg = ScenarioConfig::new(Mode::ApproxAsync, n, f, d);
    cfg.name = "browser".into();
    cfg.seed = seed;
    cfg.epsilon = parse_rational(epsilon).ok_or_else(|| format!("'{epsilon}' is not a rational"))?;
    let coords = || inputs.iter().flat_map(|p| p.coords().iter());
    cfg.lower = coords()
        .min()
        .cloned()
        .unwrap_or_else(|| Rational::from_integer(0.into()));
    cfg.upper = coords()
        .max()
        .cloned()
        .unwrap_or_else(|| Rational::from_integer(0.into()));
    if cfg.upper <= cfg.lower {
        cfg.upper = &cfg.lower + Rational::from_integer(1.into());
    }
    for id in n.saturating_sub(f)..n {
        cfg.faulty.insert(id, Strategy::FixedLie { point: lie.clone() });
    }
    let trace = run_approx(&cfg, &inputs).map_err(|e| e.to_string())?;
    let summary = check_trace(&trace, &cfg, &inputs).map_err(|e| e.to_string())?;

    let mut rounds: Vec<Vec<Option<ShownPoint>>> = Vec::new();
    for entry in &trace.journal {
        if let Record::State { round, value } = &entry.record {
            let t = *round as usize;
            if rounds.len() <= t {
                rounds.resize_with(t + 1, || (0..n).map(|_| None).collect());
            }
            rounds[t][entry.process] = Some(show(value));
        }
    }
    to_json(&RunOut {
        rounds,
        faulty: cfg.faulty.keys().copied().collect(),
        decisions: (0..n).map(|i| trace.decisions.get(&i).map(show)).collect(),
        verdicts: summary.outcome.iter().map(ToString::to_string).collect(),
        gamma: summary.gamma.as_ref().map(to_fraction_string),
        round_bound: summary.round_bound,
    })
}

#[wasm_bindgen]
pub fn gamma_point(points: &str, f: usize) -> Result<String, JsError> {
    gamma_point_json(points, f).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tverberg(points: &str, f: usize) -> Result<String, JsError> {
    tverberg_json(points, f).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn approx_run(points: &str, f: usize, lie: &str, epsilon: &str, seed: u64) -> Result<String, JsError> {
    approx_run_json(points, f, lie, epsilon, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_of_a_square_with_center() {
        let out = gamma_point_json(r#"[[0,0],[4,0],[0,4],[4,4],["2","2"]]"#, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["point"]["exact"], serde_json::json!(["2/1", "2/1"]));
    }

    #[test]
    fn gamma_of_a_triangle_is_empty() {
        let out = gamma_point_json("[[0,0],[4,0],[0,4]]", 1).unwrap();
        assert_eq!(out, r#"{"point":null}"#);
    }

    #[test]
    fn tverberg_of_five_points() {
        let out = tverberg_json("[[0,0],[4,0],[0,4],[4,4],[1,1]]", 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["blocks"].as_array().unwrap().len(), 2);
        assert!(v["witness"]["approx"].is_array());
    }

    #[test]
    fn run_in_the_plane() {
        let out = approx_run_json("[[0,0],[8,0],[0,8],[8,8],[3,5]]", 1, "[20,-20]", "1/10", 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["faulty"], serde_json::json!([4]));
        assert!(v["verdicts"]
            .as_array()
            .unwrap()
            .iter()
            .all(|s| !s.as_str().unwrap().starts_with("PropertyFail")));
        assert!(v["decisions"][4].is_null());
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(gamma_point_json("[[0,\"x\"]]", 1).is_err());
        assert!(approx_run_json("[[0,0],[1,1]]", 1, "[0,0]", "1/10", 0).is_err());
    }
}
