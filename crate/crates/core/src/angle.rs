//! Angles in config files may be plain numbers or multiples of π such as
//! `"pi/2"`, `"3pi/4"`, `"3*pi/2"` or `"8pi"`.

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer};

pub fn parse_angle(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.to_ascii_lowercase();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok()?),
        None => (s.as_str(), 1.0),
    };
    let coef = num.strip_suffix("pi").or_else(|| num.strip_suffix('π'))?;
    let coef = coef.strip_suffix('*').unwrap_or(coef);
    let k = match coef {
        "" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().ok()?,
    };
    if den == 0.0 {
        return None;
    }
    Some(k * PI / den)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Raw {
    Number(f64),
    Text(String),
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Raw::deserialize(d)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(t) => {
            parse_angle(&t).ok_or_else(|| serde::de::Error::custom(format!("bad angle {t:?}")))
        }
    }
}

pub fn deserialize_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Vec::<Raw>::deserialize(d)?
        .into_iter()
        .map(|raw| match raw {
            Raw::Number(v) => Ok(v),
            Raw::Text(t) => {
                parse_angle(&t).ok_or_else(|| serde::de::Error::custom(format!("bad angle {t:?}")))
            }
        })
        .collect()
}
