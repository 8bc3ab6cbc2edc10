use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::linear_fit;
use crate::rng::{seeded_sub, stream};

/// `|gamma - 1/r|` below this counts as the balanced boundary.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `gamma < 1/r`: bounded expected cost.
    Efficient,
    /// `gamma = 1/r`: logarithmic growth in `K`.
    Balanced,
    /// `gamma > 1/r`: polynomial growth `K^alpha`.
    HeavyTailed,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Efficient => "efficient",
            Regime::Balanced => "balanced",
            Regime::HeavyTailed => "heavy_tailed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `1 + ln gamma / ln r`, present in the heavy-tailed regime.
    pub alpha: Option<f64>,
}

fn check_domain(r: f64, gamma: f64) -> Result<()> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::spec(format!("growth rate {r} must exceed 1")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::spec(format!("decay rate {gamma} must lie in (0,1)")));
    }
    Ok(())
}

pub fn regime_classify(r: f64, gamma: f64) -> Result<RegimeClass> {
    check_domain(r, gamma)?;
    let edge = 1.0 / r;
    Ok(if (gamma - edge).abs() < BALANCE_TOLERANCE {
        RegimeClass {
            regime: Regime::Balanced,
            alpha: None,
        }
    } else if gamma < edge {
        RegimeClass {
            regime: Regime::Efficient,
            alpha: None,
        }
    } else {
        RegimeClass {
            regime: Regime::HeavyTailed,
            alpha: Some(1.0 + gamma.ln() / r.ln()),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub growth_rate: f64,
    pub decay_rate: f64,
    pub base_size: f64,
    pub levels: usize,
    /// Constant `C` in `P(level = i) <= C gamma^(i-1)`.
    pub norm_const: f64,
}

impl RegimeParams {
    pub fn validate(&self) -> Result<()> {
        check_domain(self.growth_rate, self.decay_rate)?;
        if !(self.base_size > 0.0) || self.levels == 0 || !(self.norm_const > 0.0) {
            return Err(Error::spec(
                "base size, levels and normalisation constant must be positive",
            ));
        }
        Ok(())
    }

    pub fn spectral_ratio(&self) -> f64 {
        self.growth_rate * self.decay_rate
    }

    /// `1 + log_r gamma`; positive exactly when `gamma > 1/r`.
    pub fn alpha(&self) -> f64 {
        1.0 + self.decay_rate.ln() / self.growth_rate.ln()
    }

    /// `1 / Z_L` with `Z_L = sum_{i<=L} gamma^(i-1)`, the smallest valid
    /// constant for the truncated law at `L` levels.
    pub fn truncated_norm(gamma: f64, levels: usize) -> f64 {
        1.0 / geometric_sum(gamma, levels)
    }
}

/// `sum_{i=1}^{n} q^(i-1)`.
fn geometric_sum(q: f64, n: usize) -> f64 {
    if (q - 1.0).abs() < BALANCE_TOLERANCE {
        n as f64
    } else {
        (q.powi(n as i32) - 1.0) / (q - 1.0)
    }
}

/// `C k_1 sum_{i=1}^{L} rho^(i-1)` in closed form.
pub fn expected_cost_bound(params: &RegimeParams) -> Result<f64> {
    params.validate()?;
    Ok(params.norm_const * params.base_size * geometric_sum(params.spectral_ratio(), params.levels))
}

/// `E = sum_i k_i P(level = i)` under the truncated law
/// `P(level = i) = gamma^(i-1) / Z_L` with `k_i = k_1 r^(i-1)`.
pub fn exact_expected_cost(r: f64, gamma: f64, base: f64, levels: usize) -> Result<f64> {
    check_domain(r, gamma)?;
    Ok(base * geometric_sum(r * gamma, levels) / geometric_sum(gamma, levels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub levels: usize,
    pub concepts: f64,
    pub e_empirical: f64,
    pub e_exact: f64,
    pub e_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTable {
    pub growth_rate: f64,
    pub decay_rate: f64,
    pub base_size: f64,
    pub spectral_ratio: f64,
    pub classification: RegimeClass,
    /// Constant used for every bound in the table: `max_L 1/Z_L` over the grid.
    pub norm_const: f64,
    pub rows: Vec<RegimeRow>,
    /// `(slope, intercept, r2)` of `E` against `ln K`.
    pub log_fit: Option<(f64, f64, f64)>,
    /// `(slope, intercept, r2)` of `ln E` against `ln K`.
    pub loglog_fit: Option<(f64, f64, f64)>,
}

impl RegimeTable {
    /// Fitted scaling exponent (slope on log-log axes).
    pub fn alpha_fit(&self) -> Option<f64> {
        self.loglog_fit.map(|f| f.0)
    }

    /// `L,K,E_empirical,E_bound,regime,alpha_fit`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["L", "K", "E_empirical", "E_bound", "regime", "alpha_fit"])?;
        let alpha = self.alpha_fit().map_or_else(String::new, |a| format!("{a:.6}"));
        for r in &self.rows {
            w.write_record([
                r.levels.to_string(),
                format!("{}", r.concepts),
                format!("{:.6}", r.e_empirical),
                format!("{:.6}", r.e_bound),
                self.classification.regime.as_str().to_string(),
                alpha.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<regime writer>", e))?;
        Ok(())
    }
}

/// Monte Carlo expected cost at each `L` in `level_grid`, drawing the
/// minimal sufficient level from the truncated geometric law.
pub fn simulate_regimes(
    r: f64,
    gamma: f64,
    base: f64,
    level_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<RegimeTable> {
    let classification = regime_classify(r, gamma)?;
    if level_grid.is_empty() || level_grid.contains(&0) {
        return Err(Error::spec("level grid must be non-empty and positive"));
    }
    if samples < 1000 {
        return Err(Error::spec(format!("need at least 1000 samples, got {samples}")));
    }
    if !(base > 0.0) {
        return Err(Error::spec("base size must be positive"));
    }
    let l_min = *level_grid.iter().min().expect("non-empty");
    let norm_const = RegimeParams::truncated_norm(gamma, l_min);
    let mut rows = Vec::with_capacity(level_grid.len());
    for &l in level_grid {
        let sizes: Vec<f64> = (0..l).map(|i| base * r.powi(i as i32)).collect();
        let z = geometric_sum(gamma, l);
        let mut acc = 0.0;
        let cdf: Vec<f64> = (0..l)
            .map(|i| {
                acc += gamma.powi(i as i32) / z;
                acc
            })
            .collect();
        let mut rng = seeded_sub(seed, stream::REGIMES, l as u64);
        let mut total = 0.0;
        for _ in 0..samples {
            let u: f64 = rng.random();
            let lvl = cdf.iter().position(|&c| u < c).unwrap_or(l - 1);
            total += sizes[lvl];
        }
        let params = RegimeParams {
            growth_rate: r,
            decay_rate: gamma,
            base_size: base,
            levels: l,
            norm_const,
        };
        rows.push(RegimeRow {
            levels: l,
            concepts: sizes.iter().sum(),
            e_empirical: total / samples as f64,
            e_exact: exact_expected_cost(r, gamma, base, l)?,
            e_bound: expected_cost_bound(&params)?,
        });
    }
    let ln_k: Vec<f64> = rows.iter().map(|r| r.concepts.ln()).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.e_empirical).collect();
    let ln_e: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    Ok(RegimeTable {
        growth_rate: r,
        decay_rate: gamma,
        base_size: base,
        spectral_ratio: r * gamma,
        classification,
        norm_const,
        log_fit: linear_fit(&ln_k, &e),
        loglog_fit: linear_fit(&ln_k, &ln_e),
        rows,
    })
}
