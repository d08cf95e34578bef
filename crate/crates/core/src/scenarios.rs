//! Corrected estimates of outcomes without a benchmark (willingness,
//! hesitancy) under a postulated split of the uptake ddc.
//!
//! Because `V + W + H = 1`, the three ddcs sum to zero under an equal-variance
//! approximation. A tuning parameter `lambda` assigns `-(1 - lambda)` of the
//! uptake ddc to hesitancy and `-lambda` to willingness. Each postulated ddc
//! is then turned back into a population mean by inverting the weighted error
//! identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible back-substitution residual of the signed equation.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTriple {
    pub vaccinated: f64,
    pub willing: f64,
    pub hesitant: f64,
}

impl OutcomeTriple {
    pub fn new(vaccinated: f64, willing: f64, hesitant: f64) -> Result<Self> {
        for (name, v) in [
            ("vaccinated", vaccinated),
            ("willing", willing),
            ("hesitant", hesitant),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        let sum = vaccinated + willing + hesitant;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "outcome shares sum to {sum}, not 1"
            )));
        }
        Ok(Self {
            vaccinated,
            willing,
            hesitant,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    /// Willing-but-unvaccinated people are the most under-represented.
    Access,
    /// Hesitant people are the most under-represented.
    Hesitancy,
    /// Willing and hesitant are under-represented about equally.
    Uptake,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [
        ScenarioName::Access,
        ScenarioName::Hesitancy,
        ScenarioName::Uptake,
    ];

    pub fn default_range(self) -> (f64, f64) {
        match self {
            ScenarioName::Access => (1.0, 1.2),
            ScenarioName::Hesitancy => (-1.2, -1.0),
            ScenarioName::Uptake => (0.4, 0.6),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Access => "access",
            ScenarioName::Hesitancy => "hesitancy",
            ScenarioName::Uptake => "uptake",
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "access" => Ok(ScenarioName::Access),
            "hesitancy" => Ok(ScenarioName::Hesitancy),
            "uptake" => Ok(ScenarioName::Uptake),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub grid_points: usize,
}

impl ScenarioSpec {
    pub const DEFAULT_GRID_POINTS: usize = 11;

    pub fn new(
        name: ScenarioName,
        lambda_low: f64,
        lambda_high: f64,
        grid_points: usize,
    ) -> Result<Self> {
        if !(lambda_low.is_finite() && lambda_high.is_finite()) || lambda_low > lambda_high {
            return Err(Error::InvalidArgument(format!(
                "invalid lambda range [{lambda_low}, {lambda_high}]"
            )));
        }
        if grid_points == 0 {
            return Err(Error::InvalidArgument(
                "grid_points must be positive".into(),
            ));
        }
        Ok(Self {
            name,
            lambda_low,
            lambda_high,
            grid_points,
        })
    }

    pub fn default_for(name: ScenarioName) -> Self {
        let (lambda_low, lambda_high) = name.default_range();
        Self {
            name,
            lambda_low,
            lambda_high,
            grid_points: Self::DEFAULT_GRID_POINTS,
        }
    }

    /// Evenly spaced lambdas including both endpoints.
    pub fn grid(&self) -> Vec<f64> {
        if self.grid_points == 1 || self.lambda_low == self.lambda_high {
            return vec![self.lambda_low];
        }
        let steps = (self.grid_points - 1) as f64;
        (0..self.grid_points)
            .map(|i| {
                if i + 1 == self.grid_points {
                    self.lambda_high
                } else {
                    self.lambda_low + (self.lambda_high - self.lambda_low) * i as f64 / steps
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub corrected_hesitancy: (f64, f64),
    pub corrected_willingness: (f64, f64),
    /// Largest back-substitution residual over the grid.
    pub residuals: f64,
}

/// Splits the uptake ddc into hesitancy and willingness ddcs that sum with it
/// to zero.
pub fn allocate_ddc(rho_v: f64, lambda: f64) -> (f64, f64) {
    let rho_w = -lambda * rho_v;
    // -(rho_v + rho_w) is -(1 - lambda) rho_v, written so that the three sum
    // to zero without rounding drift.
    let rho_h = -(rho_v + rho_w);
    (rho_h, rho_w)
}

fn check_inputs(observed: f64, n_w: f64, population: u64) -> Result<()> {
    if !(observed.is_finite() && observed > 0.0 && observed < 1.0) {
        return Err(Error::InfeasibleScenario {
            lambda: None,
            reason: format!("observed share {observed} must lie strictly inside (0, 1)"),
        });
    }
    if !(n_w.is_finite() && n_w > 0.0 && n_w < population as f64) {
        return Err(Error::InvalidArgument(format!(
            "n_w {n_w} must lie in (0, {population})"
        )));
    }
    Ok(())
}

/// Signed residual `observed - x - c * sqrt(x (1 - x))`.
pub fn signed_residual(observed: f64, c: f64, x: f64) -> f64 {
    observed - x - c * (x * (1.0 - x)).max(0.0).sqrt()
}

/// Population mean consistent with an observed share and a postulated ddc.
///
/// With `c = rho * sqrt((N - n_w) / n_w)`, squaring
/// `observed - X = c * sqrt(X (1 - X))` gives
/// `(c^2 + 1) X^2 - (2 observed + c^2) X + observed^2 = 0`. Squaring admits
/// the root belonging to `-rho`, so the root is picked by the sign of `rho`
/// (the smaller one when `rho > 0`) and checked against the unsquared form.
pub fn solve_population_mean(observed: f64, rho: f64, n_w: f64, population: u64) -> Result<f64> {
    check_inputs(observed, n_w, population)?;
    if !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho {rho} is not finite")));
    }
    if rho == 0.0 {
        return Ok(observed);
    }
    let big_n = population as f64;
    let c = rho * ((big_n - n_w) / n_w).sqrt();
    let c2 = c * c;
    let a = c2 + 1.0;
    let b = 2.0 * observed + c2;
    let k = observed * observed;
    let disc = b * b - 4.0 * a * k;
    if disc < 0.0 {
        return Err(Error::InfeasibleScenario {
            lambda: None,
            reason: format!("negative discriminant {disc}"),
        });
    }
    // b > 0, so the larger root has no cancellation; the smaller follows
    // from the product of roots k / a.
    let larger = (b + disc.sqrt()) / (2.0 * a);
    let smaller = k / (a * larger);
    let root = if rho > 0.0 { smaller } else { larger };
    let residual = signed_residual(observed, c, root);
    if residual.abs() > RESIDUAL_TOLERANCE {
        return Err(Error::InfeasibleScenario {
            lambda: None,
            reason: format!("root {root} fails back-substitution (residual {residual:e})"),
        });
    }
    Ok(root)
}

/// The same correction written as a Wilson score endpoint with a
/// finite-population correction: solves
/// `(observed - X) / sqrt((1 - f) / n_w * X (1 - X)) = z` for `X`.
pub fn wilson_equivalent(observed: f64, z: f64, n_w: f64, sampling_fraction: f64) -> Result<f64> {
    if !(observed.is_finite() && observed > 0.0 && observed < 1.0) {
        return Err(Error::InfeasibleScenario {
            lambda: None,
            reason: format!("observed share {observed} must lie strictly inside (0, 1)"),
        });
    }
    if !(sampling_fraction.is_finite() && (0.0..1.0).contains(&sampling_fraction)) {
        return Err(Error::InvalidArgument(format!(
            "sampling fraction {sampling_fraction} must lie in [0, 1)"
        )));
    }
    if !(n_w.is_finite() && n_w > 0.0) || !z.is_finite() {
        return Err(Error::InvalidArgument(
            "n_w must be positive and z finite".into(),
        ));
    }
    let k = (1.0 - sampling_fraction) / n_w;
    let z2k = z * z * k;
    let centre = observed + z2k / 2.0;
    let half = z * (k * observed * (1.0 - observed) + z2k * k / 4.0).sqrt();
    Ok((centre - half) / (1.0 + z2k))
}

/// Runs the lambda grid of `spec` for one wave and reports the range of the
/// corrected hesitancy and willingness.
pub fn scenario_band(
    triple: &OutcomeTriple,
    rho_v: f64,
    spec: &ScenarioSpec,
    n_w: f64,
    population: u64,
) -> Result<ScenarioResult> {
    let mut hes = (f64::INFINITY, f64::NEG_INFINITY);
    let mut will = (f64::INFINITY, f64::NEG_INFINITY);
    let mut residuals: f64 = 0.0;
    let c_unit = ((population as f64 - n_w) / n_w).sqrt();
    for lambda in spec.grid() {
        let (rho_h, rho_w) = allocate_ddc(rho_v, lambda);
        let tag = |e: Error| match e {
            Error::InfeasibleScenario { reason, .. } => Error::InfeasibleScenario {
                lambda: Some(lambda),
                reason,
            },
            other => other,
        };
        let h = solve_population_mean(triple.hesitant, rho_h, n_w, population).map_err(tag)?;
        let w = solve_population_mean(triple.willing, rho_w, n_w, population).map_err(tag)?;
        residuals = residuals
            .max(signed_residual(triple.hesitant, rho_h * c_unit, h).abs())
            .max(signed_residual(triple.willing, rho_w * c_unit, w).abs());
        hes = (hes.0.min(h), hes.1.max(h));
        will = (will.0.min(w), will.1.max(w));
    }
    Ok(ScenarioResult {
        corrected_hesitancy: hes,
        corrected_willingness: will,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // n_w and N chosen so that sqrt((N - n_w)/n_w) = 50, i.e. c = 50 rho.
    const N: u64 = 2_501_000;
    const NW: f64 = 1000.0;

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_ddc(0.01, 1.0), (0.0, -0.01));
        let (h, w) = allocate_ddc(0.3, 0.5);
        assert_eq!(h, -0.15);
        assert_eq!(w, -0.15);
        let (h, w) = allocate_ddc(0.01, -1.2);
        assert!((h + 0.022).abs() < 1e-15);
        assert!((w - 0.012).abs() < 1e-15);
    }

    #[test]
    fn zero_rho_returns_observed() {
        assert_eq!(solve_population_mean(0.2, 0.0, NW, N).unwrap(), 0.2);
        assert_eq!(wilson_equivalent(0.2, 0.0, NW, NW / N as f64).unwrap(), 0.2);
    }

    // Quadratic with c = +-0.5, observed = 0.2:
    // 1.25 X^2 - 0.45 X + 0.04 = 0 -> X = (0.45 -+ sqrt(0.0025... )) / 2.5
    #[test]
    fn quadratic_hand_examples() {
        let x = solve_population_mean(0.2, 0.01, NW, N).unwrap();
        assert!((x - 0.071_32).abs() < 5e-6, "{x}");
        assert!((0.2 - x - 0.5 * (x * (1.0 - x)).sqrt()).abs() < 1e-12);
        let y = solve_population_mean(0.2, -0.01, NW, N).unwrap();
        assert!((y - 0.448_68).abs() < 5e-6, "{y}");
        assert!((0.2 - y + 0.5 * (y * (1.0 - y)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wilson_matches_quadratic() {
        let f = NW / N as f64;
        let z = 0.01 * (N as f64).sqrt();
        let w = wilson_equivalent(0.2, z, NW, f).unwrap();
        let q = solve_population_mean(0.2, 0.01, NW, N).unwrap();
        assert!((w - q).abs() < 1e-12);
    }

    #[test]
    fn wilson_without_fpc_is_textbook() {
        let (p, z, n): (f64, f64, f64) = (0.3, 1.96, 50.0);
        let textbook = (p + z * z / (2.0 * n)
            - z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt())
            / (1.0 + z * z / n);
        assert!((wilson_equivalent(p, z, n, 0.0).unwrap() - textbook).abs() < 1e-15);
    }

    #[test]
    fn access_endpoint_leaves_hesitancy_unchanged() {
        let triple = OutcomeTriple::new(0.6, 0.25, 0.15).unwrap();
        let spec = ScenarioSpec::new(ScenarioName::Access, 1.0, 1.0, 1).unwrap();
        let r = scenario_band(&triple, 0.005, &spec, NW, N).unwrap();
        assert_eq!(r.corrected_hesitancy, (0.15, 0.15));
        assert!(r.corrected_willingness.0 > 0.25);
    }

    #[test]
    fn zero_rho_collapses_bands() {
        let triple = OutcomeTriple::new(0.6, 0.25, 0.15).unwrap();
        for name in ScenarioName::ALL {
            let r = scenario_band(&triple, 0.0, &ScenarioSpec::default_for(name), NW, N).unwrap();
            assert_eq!(r.corrected_hesitancy, (0.15, 0.15));
            assert_eq!(r.corrected_willingness, (0.25, 0.25));
        }
    }

    #[test]
    fn uptake_scenario_raises_both() {
        let triple = OutcomeTriple::new(0.6, 0.25, 0.15).unwrap();
        let r = scenario_band(
            &triple,
            0.002,
            &ScenarioSpec::default_for(ScenarioName::Uptake),
            NW,
            N,
        )
        .unwrap();
        assert!(r.corrected_hesitancy.0 > 0.15);
        assert!(r.corrected_willingness.0 > 0.25);
        assert!(r.residuals <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = ScenarioSpec::default_for(ScenarioName::Hesitancy).grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], -1.2);
        assert_eq!(g[10], -1.0);
        assert!(ScenarioSpec::new(ScenarioName::Uptake, 0.6, 0.4, 3).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            solve_population_mean(0.0, 0.1, NW, N),
            Err(Error::InfeasibleScenario { .. })
        ));
        assert!(OutcomeTriple::new(0.5, 0.3, 0.3).is_err());
    }
}
