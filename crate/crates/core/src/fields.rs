//! Parameter sampling and the nodal fields of the three experiment families.
//!
//! * [`Case::DeterministicObstacle`]: affine coefficient
//!   `κ = 1 + Σ_{m≤p} y_m a_m` with `a_m(x) = m⁻² sin(⌊(m+2)/2⌋πx₁) sin(⌈(m+2)/2⌉πx₂)`,
//!   constant obstacle `−0.035`, forcing `1`.
//! * [`Case::StochasticConstantObstacle`]: the same coefficient truncated at
//!   `p − 1` terms, the last parameter is the constant obstacle value.
//! * [`Case::RoughSurface`]: `κ ≡ 1`, forcing `25`, and the obstacle
//!   `φ(x) = Σ_q B_q(H) cos(q·x + y_q)` over the wave vectors of
//!   [`wavevector_set`], with `B_q(H) = π(2π·max(‖q‖, 10))^{−(H+1)}/25`.
//!
//! All fields are pure functions of `(master_seed, sample_index, level)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridLevel;

/// Default wave-vector norm cutoff of the rough-surface obstacle.
pub const DEFAULT_WAVE_CUTOFF: f64 = 26.0;
/// Obstacle value of the deterministic case.
pub const DETERMINISTIC_OBSTACLE: f64 = -0.035;
/// Range of the constant obstacle value in the stochastic case.
pub const STOCHASTIC_OBSTACLE_RANGE: (f64, f64) = (-0.045, -0.025);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    DeterministicObstacle,
    StochasticConstantObstacle,
    RoughSurface,
}

impl Case {
    /// Maps the command-line numbering 1, 2, 3.
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Case::DeterministicObstacle),
            2 => Ok(Case::StochasticConstantObstacle),
            3 => Ok(Case::RoughSurface),
            _ => Err(Error::InvalidArgument(format!("case must be 1, 2 or 3, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Case::DeterministicObstacle => 1,
            Case::StochasticConstantObstacle => 2,
            Case::RoughSurface => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::DeterministicObstacle => "deterministic obstacle",
            Case::StochasticConstantObstacle => "stochastic obstacle",
            Case::RoughSurface => "rough surface",
        }
    }
}

fn default_wave_cutoff() -> f64 {
    DEFAULT_WAVE_CUTOFF
}

/// Experiment configuration, serialized as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case: Case,
    /// Parameter dimension. Ignored on input for the rough surface, where it
    /// is derived from the wave-vector set (see [`CaseConfig::resolved`]).
    pub p: usize,
    #[serde(default = "default_wave_cutoff")]
    pub wave_cutoff: f64,
    pub master_seed: u64,
    /// Replaces the per-case constant forcing when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<f64>,
    /// Replaces the obstacle by this constant when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<f64>,
}

impl CaseConfig {
    pub fn new(case: Case, p: usize, master_seed: u64) -> Self {
        CaseConfig {
            case,
            p,
            wave_cutoff: DEFAULT_WAVE_CUTOFF,
            master_seed,
            forcing: None,
            obstacle: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wave_cutoff.is_finite() && self.wave_cutoff > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wave_cutoff must be positive, got {}",
                self.wave_cutoff
            )));
        }
        match self.case {
            Case::RoughSurface => {
                wavevector_set(self.wave_cutoff)?;
            }
            _ if self.p == 0 => {
                return Err(Error::InvalidArgument("p must be at least 1".into()));
            }
            _ => {}
        }
        for (name, v) in [("forcing", self.forcing), ("obstacle", self.obstacle)] {
            if let Some(v) = v.filter(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Length of the parameter vector.
    pub fn param_dim(&self) -> Result<usize> {
        match self.case {
            Case::RoughSurface => Ok(wavevector_set(self.wave_cutoff)?.len() + 1),
            _ => Ok(self.p),
        }
    }

    /// Validated copy with `p` set to the actual parameter dimension.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        Ok(CaseConfig {
            p: self.param_dim()?,
            ..self.clone()
        })
    }

    /// Number of affine coefficient terms.
    fn coefficient_terms(&self) -> usize {
        match self.case {
            Case::DeterministicObstacle => self.p,
            Case::StochasticConstantObstacle => self.p - 1,
            Case::RoughSurface => 0,
        }
    }
}

/// A parameter sample `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Coefficient,
    Obstacle,
    Forcing,
}

/// Nodal values of a field over every node of one level, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
    pub kind: FieldKind,
    pub level: GridLevel,
}

impl NodalField {
    pub fn constant(level: GridLevel, kind: FieldKind, value: f64) -> Self {
        NodalField {
            values: vec![value; level.node_count()],
            kind,
            level,
        }
    }

    /// Values at the interior dofs.
    pub fn interior(&self) -> Vec<f64> {
        self.level
            .interior_values(&self.values)
            .expect("field length matches its level")
    }
}

/// Draws the parameter vector of one sample.
///
/// Each sample reads its own ChaCha stream selected by `sample_index`, so the
/// result does not depend on generation order.
pub fn sample_params(cfg: &CaseConfig, sample_index: u64) -> Result<ParamVector> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(sample_index);
    let y = match cfg.case {
        Case::DeterministicObstacle => (0..cfg.p).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        Case::StochasticConstantObstacle => {
            let mut y: Vec<f64> = (0..cfg.p - 1).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let (lo, hi) = STOCHASTIC_OBSTACLE_RANGE;
            y.push(rng.random_range(lo..=hi));
            y
        }
        Case::RoughSurface => {
            let waves = wavevector_set(cfg.wave_cutoff)?.len();
            let mut y: Vec<f64> = (0..waves).map(|_| rng.random_range(0.0..=2.0 * PI)).collect();
            y.push(rng.random_range(0.0..=1.0));
            y
        }
    };
    Ok(ParamVector(y))
}

fn check_params(cfg: &CaseConfig, y: &ParamVector) -> Result<()> {
    let expected = cfg.param_dim()?;
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: y.len(),
        });
    }
    Ok(())
}

/// Frequencies `(⌊(m+2)/2⌋, ⌈(m+2)/2⌉)` of the affine term `a_m`.
pub fn affine_frequencies(m: usize) -> (usize, usize) {
    ((m + 2) / 2, (m + 3) / 2)
}

/// `a_m(x)` for `m ≥ 1`.
pub fn affine_term(m: usize, x: [f64; 2]) -> f64 {
    let (a, b) = affine_frequencies(m);
    (a as f64 * PI * x[0]).sin() * (b as f64 * PI * x[1]).sin() / (m * m) as f64
}

/// Nodal coefficient `κ` on `level`.
///
/// Non-positive values are rejected, never clamped.
pub fn eval_coefficient(cfg: &CaseConfig, y: &ParamVector, level: GridLevel) -> Result<NodalField> {
    check_params(cfg, y)?;
    let terms = cfg.coefficient_terms();
    let n = level.nodes_per_side();
    let mut values = vec![1.0; level.node_count()];
    for m in 1..=terms {
        let ym = y.0[m - 1];
        let (a, b) = affine_frequencies(m);
        let weight = 1.0 / (m * m) as f64;
        // separable: tabulate the x₁ and x₂ factors once per term
        let sx: Vec<f64> = (0..n)
            .map(|j| (a as f64 * PI * level.coords_unchecked(0, j)[0]).sin())
            .collect();
        let sy: Vec<f64> = (0..n)
            .map(|i| (b as f64 * PI * level.coords_unchecked(i, 0)[1]).sin())
            .collect();
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] += ym * (sx[j] * sy[i] * weight);
            }
        }
    }
    if let Some((node, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::DegenerateCoefficient { node, value });
    }
    Ok(NodalField {
        values,
        kind: FieldKind::Coefficient,
        level,
    })
}

/// Amplitude `B_q(H)` of a rough-surface mode with wave-vector norm `q_norm`.
pub fn rough_amplitude(q_norm: f64, hurst: f64) -> f64 {
    PI * (2.0 * PI * q_norm.max(10.0)).powf(-(hurst + 1.0)) / 25.0
}

/// Nodal obstacle `φ` on `level`.
pub fn eval_obstacle(cfg: &CaseConfig, y: &ParamVector, level: GridLevel) -> Result<NodalField> {
    check_params(cfg, y)?;
    if let Some(c) = cfg.obstacle {
        return Ok(NodalField::constant(level, FieldKind::Obstacle, c));
    }
    match cfg.case {
        Case::DeterministicObstacle => Ok(NodalField::constant(
            level,
            FieldKind::Obstacle,
            DETERMINISTIC_OBSTACLE,
        )),
        Case::StochasticConstantObstacle => Ok(NodalField::constant(
            level,
            FieldKind::Obstacle,
            *y.0.last().expect("p ≥ 1"),
        )),
        Case::RoughSurface => {
            let waves = wavevector_set(cfg.wave_cutoff)?;
            let hurst = *y.0.last().expect("hurst entry");
            let n = level.nodes_per_side();
            let mut values = vec![0.0; level.node_count()];
            for (wave, &phase) in waves.iter().zip(&y.0) {
                let amp = rough_amplitude(wave.norm, hurst);
                for (k, v) in values.iter_mut().enumerate() {
                    let x = level.coords_unchecked(k / n, k % n);
                    *v += amp * (wave.q[0] * x[0] + wave.q[1] * x[1] + phase).cos();
                }
            }
            Ok(NodalField {
                values,
                kind: FieldKind::Obstacle,
                level,
            })
        }
    }
}

/// Upper bound `Σ_q B_q(H)` on `|φ|` for a rough-surface sample.
pub fn rough_amplitude_bound(cfg: &CaseConfig, y: &ParamVector) -> Result<f64> {
    check_params(cfg, y)?;
    let hurst = *y.0.last().expect("hurst entry");
    Ok(wavevector_set(cfg.wave_cutoff)?
        .iter()
        .map(|w| rough_amplitude(w.norm, hurst))
        .sum())
}

/// The constant forcing of the case, or the configured override.
pub fn forcing_value(cfg: &CaseConfig) -> f64 {
    cfg.forcing.unwrap_or(match cfg.case {
        Case::DeterministicObstacle | Case::StochasticConstantObstacle => 1.0,
        Case::RoughSurface => 25.0,
    })
}

pub fn eval_forcing(cfg: &CaseConfig, level: GridLevel) -> NodalField {
    NodalField::constant(level, FieldKind::Forcing, forcing_value(cfg))
}

/// A rough-surface wave vector `q = π·k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector {
    pub k: (i32, i32),
    pub q: [f64; 2],
    pub norm: f64,
}

/// All `q = π(k₁, k₂)`, `k ≠ 0`, with `1 ≤ ‖q‖₂ ≤ cutoff`, lexicographic in `k`.
pub fn wavevector_set(cutoff: f64) -> Result<Vec<WaveVector>> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wave cutoff must be positive, got {cutoff}"
        )));
    }
    let kmax = (cutoff / PI).floor() as i32 + 1;
    let mut out = Vec::new();
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            if (k1, k2) == (0, 0) {
                continue;
            }
            let norm = PI * f64::from(k1 * k1 + k2 * k2).sqrt();
            if (1.0..=cutoff).contains(&norm) {
                out.push(WaveVector {
                    k: (k1, k2),
                    q: [PI * f64::from(k1), PI * f64::from(k2)],
                    norm,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no wave vector has 1 ≤ ‖q‖ ≤ {cutoff}"
        )));
    }
    Ok(out)
}
