//! Pipeline parameters, their defaults, key=value overrides and hashing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::GeometricCriteria;
use crate::imaging::MIN_SIDE;
use crate::texture::DecompositionParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub nx: usize,
    pub ny: usize,
    pub r_mask: f64,
    pub n_iter: usize,
    pub sigma_t: f64,
    pub sigma: f64,
    pub p: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub m_low: f64,
    pub m_high: f64,
    pub s_low: f64,
    pub s_high: f64,
    pub e_max: f64,
    pub r_p: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self::for_dims(256, 256)
    }
}

impl PipelineParams {
    /// Reference values; the dimension-dependent ones scale with `N_x`.
    pub fn for_dims(nx: usize, ny: usize) -> Self {
        let w = nx as f64;
        PipelineParams {
            nx,
            ny,
            r_mask: 0.45 * w,
            n_iter: 5,
            sigma_t: 5.0,
            sigma: (w / 25.0).ceil(),
            p: 0.8,
            t_low: 3.0,
            t_high: 8.0,
            sigma1: 7.0,
            sigma2: 30.0,
            m_low: 0.11,
            m_high: 0.16,
            s_low: (w / 15.0).powi(2).ceil(),
            s_high: (w / 4.5).powi(2).ceil(),
            e_max: 6.5,
            r_p: 37,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.nx < MIN_SIDE || self.ny < MIN_SIDE {
            return bad(format!("frame must be at least {MIN_SIDE}x{MIN_SIDE}"));
        }
        let half = self.nx.min(self.ny) as f64 / 2.0;
        if !(self.r_mask > 0.0 && self.r_mask <= half) {
            return bad(format!("r_mask must lie in (0, {half}]"));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be at least 1".into());
        }
        for (name, v) in [("sigma_t", self.sigma_t), ("sigma", self.sigma), ("sigma1", self.sigma1)] {
            if !(v >= 1.0) {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1]".into());
        }
        if !(0.0 < self.t_low && self.t_low < self.t_high) {
            return bad("requires 0 < t_low < t_high".into());
        }
        if !(self.sigma1 < self.sigma2) {
            return bad("requires sigma1 < sigma2".into());
        }
        if !(0.0 < self.m_low && self.m_low < self.m_high) {
            return bad("requires 0 < m_low < m_high".into());
        }
        self.geometric_criteria().validate()?;
        if self.r_p == 0 {
            return bad("r_p must be at least 1".into());
        }
        if [self.sigma2, self.m_high, self.t_high, self.s_high, self.e_max]
            .iter()
            .any(|v| !v.is_finite())
        {
            return bad("parameters must be finite".into());
        }
        Ok(())
    }

    pub fn decomposition(&self) -> DecompositionParams {
        DecompositionParams::new(self.sigma_t, self.n_iter)
    }

    pub fn geometric_criteria(&self) -> GeometricCriteria {
        GeometricCriteria {
            s_low: self.s_low,
            s_high: self.s_high,
            e_max: self.e_max,
        }
    }

    /// Builds parameters from textual overrides. `nx`/`ny` are applied first
    /// so the dimension-dependent defaults follow them.
    pub fn from_overrides(overrides: &BTreeMap<String, String>) -> Result<Self> {
        let dim = |key: &str, fallback: usize| -> Result<usize> {
            overrides
                .get(key)
                .map(|v| parse_value(key, v))
                .transpose()
                .map(|v| v.unwrap_or(fallback))
        };
        let nx = dim("nx", 256)?;
        let ny = dim("ny", nx)?;
        let mut params = Self::for_dims(nx, ny);
        for (key, value) in overrides {
            params.set(key, value)?;
        }
        params.validate()?;
        Ok(params)
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nx" => self.nx = parse_value(key, value)?,
            "ny" => self.ny = parse_value(key, value)?,
            "r_mask" => self.r_mask = parse_value(key, value)?,
            "n_iter" => self.n_iter = parse_value(key, value)?,
            "sigma_t" => self.sigma_t = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "p" => self.p = parse_value(key, value)?,
            "t_low" => self.t_low = parse_value(key, value)?,
            "t_high" => self.t_high = parse_value(key, value)?,
            "sigma1" => self.sigma1 = parse_value(key, value)?,
            "sigma2" => self.sigma2 = parse_value(key, value)?,
            "m_low" => self.m_low = parse_value(key, value)?,
            "m_high" => self.m_high = parse_value(key, value)?,
            "s_low" => self.s_low = parse_value(key, value)?,
            "s_high" => self.s_high = parse_value(key, value)?,
            "e_max" => self.e_max = parse_value(key, value)?,
            "r_p" => self.r_p = parse_value(key, value)?,
            other => return Err(Error::param(format!("unknown parameter {other:?}"))),
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Hash of everything except `r_p`, which only affects labels.
    pub fn score_hash(&self) -> String {
        PipelineParams { r_p: 1, ..*self }.hash()
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::param(format!("cannot parse {key} = {value:?}")))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = parse_assignment(line).map_err(|message| Error::Parse { line: n + 1, message })?;
        out.insert(key, value);
    }
    Ok(out)
}

/// Splits one `key=value` assignment.
pub fn parse_assignment(text: &str) -> std::result::Result<(String, String), String> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected key = value, got {text:?}"))?;
    let key = key.trim();
    let value = value.trim().trim_matches('"');
    if key.is_empty() || value.is_empty() {
        return Err(format!("empty key or value in {text:?}"));
    }
    Ok((key.to_string(), value.to_string()))
}

/// Parameters varied in the robustness study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StudyParam {
    #[serde(rename = "sigma1")]
    Sigma1,
    #[serde(rename = "sigma2")]
    Sigma2,
    #[serde(rename = "m_low")]
    MLow,
    #[serde(rename = "m_high")]
    MHigh,
    #[serde(rename = "s_low")]
    SLow,
    #[serde(rename = "s_high")]
    SHigh,
    #[serde(rename = "e_max")]
    EMax,
}

impl StudyParam {
    pub const ALL: [StudyParam; 7] = [
        StudyParam::Sigma1,
        StudyParam::Sigma2,
        StudyParam::MLow,
        StudyParam::MHigh,
        StudyParam::SLow,
        StudyParam::SHigh,
        StudyParam::EMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyParam::Sigma1 => "sigma1",
            StudyParam::Sigma2 => "sigma2",
            StudyParam::MLow => "m_low",
            StudyParam::MHigh => "m_high",
            StudyParam::SLow => "s_low",
            StudyParam::SHigh => "s_high",
            StudyParam::EMax => "e_max",
        }
    }

    /// Integer-valued parameters are rounded up after scaling.
    pub fn is_integer(self) -> bool {
        matches!(self, StudyParam::Sigma1 | StudyParam::Sigma2 | StudyParam::SLow | StudyParam::SHigh)
    }

    pub fn value(self, p: &PipelineParams) -> f64 {
        match self {
            StudyParam::Sigma1 => p.sigma1,
            StudyParam::Sigma2 => p.sigma2,
            StudyParam::MLow => p.m_low,
            StudyParam::MHigh => p.m_high,
            StudyParam::SLow => p.s_low,
            StudyParam::SHigh => p.s_high,
            StudyParam::EMax => p.e_max,
        }
    }

    /// Copy of `base` with this parameter raised by 10%.
    pub fn perturb(self, base: &PipelineParams) -> PipelineParams {
        let v = self.value(base);
        let raised = if self.is_integer() && v.fract() == 0.0 && v.abs() < 1e15 {
            // ⌈11v/10⌉ in integers, immune to 1.1 not being representable.
            let n = v as i64 * 11;
            n.div_euclid(10) as f64 + if n.rem_euclid(10) > 0 { 1.0 } else { 0.0 }
        } else if self.is_integer() {
            (1.1 * v).ceil()
        } else {
            1.1 * v
        };
        let mut out = *base;
        match self {
            StudyParam::Sigma1 => out.sigma1 = raised,
            StudyParam::Sigma2 => out.sigma2 = raised,
            StudyParam::MLow => out.m_low = raised,
            StudyParam::MHigh => out.m_high = raised,
            StudyParam::SLow => out.s_low = raised,
            StudyParam::SHigh => out.s_high = raised,
            StudyParam::EMax => out.e_max = raised,
        }
        out
    }
}

impl fmt::Display for StudyParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::param(format!("{s:?} is not a study parameter")))
    }
}
