//! Cauchy-Schwarz tests for two- and three-photon correlations.
//!
//! For classical fields
//!
//! ```text
//! R  = g12^2 / (g11 * g22)            <= 1
//! R3 = g3^2  / (g11 * g33 * g44)      <= 1
//! ```
//!
//! Uncertainties use first-order propagation:
//! `(sigma/R)^2 = (2 sigma_g / g)^2 + sum_i (sigma_i / g_ii)^2`.
//! A violation is declared when `value - k * sigma > 1`.

use std::fmt::Write as _;

use crate::correlator::CorrelationResult;
use crate::error::{Error, Result};

pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsKind {
    TwoPhoton,
    ThreePhoton,
}

impl CsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CsKind::TwoPhoton => "two_photon",
            CsKind::ThreePhoton => "three_photon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsInput {
    pub name: &'static str,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsReport {
    pub kind: CsKind,
    pub value: f64,
    pub sigma: f64,
    pub inputs: Vec<CsInput>,
    pub violated: bool,
    pub k_sigma: f64,
}

impl CsReport {
    pub fn label(&self) -> &'static str {
        match self.kind {
            CsKind::TwoPhoton => "R",
            CsKind::ThreePhoton => "R3",
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind.as_str());
        let _ = writeln!(s, "value = {}", self.value);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "k_sigma = {}", self.k_sigma);
        let _ = writeln!(s, "violated = {}", self.violated);
        for i in &self.inputs {
            let _ = writeln!(s, "{} = {}", i.name, i.value);
            let _ = writeln!(s, "{}_sigma = {}", i.name, i.sigma);
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "kind,value,sigma,k_sigma,violated"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.kind.as_str(),
            self.value,
            self.sigma,
            self.k_sigma,
            self.violated
        )
    }
}

fn evaluate(kind: CsKind, numerator: (&'static str, &CorrelationResult), autos: &[(&'static str, &CorrelationResult)], k: f64) -> Result<CsReport> {
    let (nname, g) = numerator;
    if g.value.is_nan() || g.value <= 0.0 {
        return Err(Error::Domain(format!("{nname} must be > 0, got {}", g.value)));
    }
    let mut denom = 1.0;
    let mut rel2 = (2.0 * g.stat_sigma / g.value).powi(2);
    for (name, a) in autos {
        if a.value.is_nan() || a.value <= 0.0 {
            return Err(Error::Domain(format!("{name} must be > 0, got {}", a.value)));
        }
        denom *= a.value;
        rel2 += (a.stat_sigma / a.value).powi(2);
    }
    let value = g.value * g.value / denom;
    let sigma = value * rel2.sqrt();
    let mut inputs = vec![CsInput {
        name: nname,
        value: g.value,
        sigma: g.stat_sigma,
    }];
    inputs.extend(autos.iter().map(|(name, a)| CsInput {
        name,
        value: a.value,
        sigma: a.stat_sigma,
    }));
    Ok(CsReport {
        kind,
        value,
        sigma,
        inputs,
        violated: value - k * sigma > 1.0,
        k_sigma: k,
    })
}

pub fn cs_two(g12: &CorrelationResult, g11: &CorrelationResult, g22: &CorrelationResult, k: f64) -> Result<CsReport> {
    evaluate(CsKind::TwoPhoton, ("g12", g12), &[("g11", g11), ("g22", g22)], k)
}

pub fn cs_three(
    g3: &CorrelationResult,
    g11: &CorrelationResult,
    g33: &CorrelationResult,
    g44: &CorrelationResult,
    k: f64,
) -> Result<CsReport> {
    evaluate(
        CsKind::ThreePhoton,
        ("g3", g3),
        &[("g11", g11), ("g33", g33), ("g44", g44)],
        k,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: f64) -> CorrelationResult {
        CorrelationResult::fixed(v, 0.0)
    }

    #[test]
    fn classical_boundaries() {
        let r = cs_two(&g(1.0), &g(1.0), &g(1.0), 3.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(!r.violated);
        let r = cs_two(&g(2.0), &g(2.0), &g(2.0), 3.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(!r.violated);
        let r = cs_three(&g(1.0), &g(1.0), &g(1.0), &g(1.0), 3.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.sigma, 0.0);
    }

    #[test]
    fn non_positive_inputs_rejected() {
        assert!(matches!(cs_two(&g(1.0), &g(0.0), &g(1.0), 3.0), Err(Error::Domain(_))));
        assert!(matches!(
            cs_three(&g(-1.0), &g(1.0), &g(1.0), &g(1.0), 3.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn propagation_of_poisson_peak() {
        let g3 = CorrelationResult::fixed(11.03, 11.03 / 32f64.sqrt());
        let r = cs_three(&g3, &g(1.16), &CorrelationResult::fixed(1.0, 0.05), &CorrelationResult::fixed(1.0, 0.05), 3.0).unwrap();
        let rel = (4.0 / 32.0 + 2.0 * 0.0025f64).sqrt();
        assert!((r.sigma / r.value - rel).abs() < 1e-12);
    }

    #[test]
    fn kv_lists_inputs() {
        let r = cs_two(&g(4.0), &g(1.0), &g(2.0), 3.0).unwrap();
        let kv = r.to_kv();
        assert!(kv.contains("kind = two_photon"));
        assert!(kv.contains("g22 = 2"));
        assert_eq!(r.csv_row().split(',').count(), CsReport::csv_header().split(',').count());
    }
}
