//! Named metrics, reference forms and right-hand sides used by the CLI and tests.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::kahler_constant;
use crate::error::{Error, Result};
use crate::grid::{DiffMode, ScalarField, TorusGrid};
use crate::mongeampere::{manufacture, varphi_of, ProblemData};
use crate::snapshot::read_scalar;
use crate::tensor::{CMat, HermitianField, Role};

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricPreset {
    Flat,
    /// `e^f I` with `f = 0.1 cos(2π x_1)`.
    Conformal,
    /// `I + 0.1 h` with `h` Hermitian and not `∂∂̄`-exact; non-Kähler.
    HermitianPerturbed,
    /// `I + ∂∂̄ρ` for a small trigonometric `ρ`; Kähler.
    KahlerPerturbed,
}

impl MetricPreset {
    pub const ALL: [MetricPreset; 4] = [
        MetricPreset::Flat,
        MetricPreset::Conformal,
        MetricPreset::HermitianPerturbed,
        MetricPreset::KahlerPerturbed,
    ];
}

/// `ρ = 0.02 (cos 2πx_1 + sin 2π(x_1 + y_2))`; mixes two complex directions.
pub fn kahler_potential(grid: &Arc<TorusGrid>) -> ScalarField {
    let last = grid.real_dim() - 1;
    grid.sample(|x| 0.02 * ((TAU * x[0]).cos() + (TAU * (x[0] + x[last])).sin()))
}

/// `I + ∂∂̄ρ`, with the Hessian always taken spectrally.
pub fn kahler_form(grid: &Arc<TorusGrid>, rho: &ScalarField, role: Role) -> Result<HermitianField> {
    let spectral = grid.with_mode(DiffMode::Spectral);
    let h = spectral.hessian_complex(&rho.on_grid(&spectral)?)?;
    let x = HermitianField::identity(&spectral, role).add(&h)?.with_role(role);
    Ok(HermitianField::from_packed(Arc::clone(grid), role, x.to_packed()))
}

pub fn metric(grid: &Arc<TorusGrid>, preset: MetricPreset) -> Result<HermitianField> {
    let n = grid.n();
    let g = match preset {
        MetricPreset::Flat => HermitianField::identity(grid, Role::Metric),
        MetricPreset::Conformal => HermitianField::from_fn(grid, Role::Metric, |x| {
            CMat::identity(n).scale((0.1 * (TAU * x[0]).cos()).exp())
        }),
        MetricPreset::HermitianPerturbed => HermitianField::from_fn(grid, Role::Metric, |x| {
            let mut h = CMat::zeros(n);
            h[(0, 0)] = C64::new((TAU * x[2]).cos(), 0.0);
            h[(1, 1)] = C64::new((TAU * x[0]).sin(), 0.0);
            let off = C64::new(0.5 * (TAU * x[1]).cos(), 0.5 * (TAU * x[3]).sin());
            h[(0, 1)] = off;
            h[(1, 0)] = off.conj();
            if n == 3 {
                h[(2, 2)] = C64::new((TAU * x[1]).cos(), 0.0);
            }
            CMat::identity(n) + h.scale(0.1)
        }),
        MetricPreset::KahlerPerturbed => kahler_form(grid, &kahler_potential(grid), Role::Metric)?,
    };
    g.check_positive()?;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChiSpec {
    Identity,
    Scaled { factor: f64 },
    /// `I + ∂∂̄ρ` with `ρ = amplitude (sin 2πx_1 + cos 2π y_1 + cos 2π x_2)`.
    KahlerPerturbed { amplitude: f64 },
}

impl Default for ChiSpec {
    fn default() -> Self {
        ChiSpec::Identity
    }
}

pub fn chi(grid: &Arc<TorusGrid>, spec: &ChiSpec) -> Result<HermitianField> {
    match spec {
        ChiSpec::Identity => Ok(HermitianField::identity(grid, Role::Chi)),
        ChiSpec::Scaled { factor } => {
            if !(*factor > 0.0) {
                return Err(Error::Config(format!("chi scale must be positive, got {factor}")));
            }
            HermitianField::uniform(grid, Role::Chi, CMat::identity(grid.n()).scale(*factor))
        }
        ChiSpec::KahlerPerturbed { amplitude } => {
            let a = *amplitude;
            let rho = grid.sample(|x| a * ((TAU * x[0]).sin() + (TAU * x[1]).cos() + (TAU * x[2]).cos()));
            let chi = kahler_form(grid, &rho, Role::Chi)?;
            chi.check_positive()?;
            Ok(chi)
        }
    }
}

/// Canonical manufactured potential `a cos 2πx_1 + 0.6 a cos 2πy_2`.
pub fn standard_u_star(grid: &Arc<TorusGrid>, amplitude: f64) -> ScalarField {
    grid.sample(|x| amplitude * (TAU * x[0]).cos() + 0.6 * amplitude * (TAU * x[3]).cos())
}

/// Entry bound for `∂∂̄u` of random potentials; keeps `I + ∂∂̄u ≥ I/4` for `n ≤ 3`.
pub const RANDOM_HESSIAN_CAP: f64 = 0.25;

/// Random band-limited potential (modes with `|k_i| ≤ 1`) scaled to `sup |u| = amplitude`,
/// or smaller if needed to keep every entry of `∂∂̄u` within [`RANDOM_HESSIAN_CAP`].
pub fn random_u_star(grid: &Arc<TorusGrid>, seed: u64, amplitude: f64) -> ScalarField {
    let dims = grid.real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let k: Vec<f64> = (0..dims).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
            (k, rng.gen_range(0.5..1.0), rng.gen_range(0.0..TAU))
        })
        .collect();
    let raw = grid.sample(|x| {
        modes
            .iter()
            .map(|(k, c, phase)| {
                let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
                c * (TAU * arg + phase).cos()
            })
            .sum()
    });
    let raw = raw.mean_zero();
    let sup = raw.sup_abs();
    if sup == 0.0 {
        return raw;
    }
    let spectral = grid.with_mode(DiffMode::Spectral);
    let hess = spectral
        .hessian_complex(&raw.on_grid(&spectral).expect("same lattice"))
        .expect("same lattice")
        .sup_abs();
    let scale = (amplitude / sup).min(RANDOM_HESSIAN_CAP / hess.max(f64::MIN_POSITIVE));
    raw.map(|v| v * scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiSpec {
    /// `ψ` from a known potential; the canonical one when `seed` is absent.
    Manufactured {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    /// Values read from a snapshot file.
    ExplicitField { path: PathBuf },
    /// `c · factor · (1 + modulation (1 + 0.3 cos 2πx_1)/1.3)` with `c` the class constant.
    ScaledKahlerConstant { factor: f64, modulation: f64 },
    /// `φ · factor · (1 + modulation (1 + cos 2πx_1)/2)`; dominates `φ` when `factor ≥ 1`.
    Lifted { factor: f64, modulation: f64 },
}

fn default_amplitude() -> f64 {
    0.05
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec::Manufactured {
            seed: None,
            amplitude: default_amplitude(),
        }
    }
}

/// A problem together with the potential that generated it, when known.
#[derive(Clone, Debug)]
pub struct BuiltProblem {
    pub data: ProblemData,
    pub u_star: Option<ScalarField>,
}

pub fn build_problem(
    grid: &Arc<TorusGrid>,
    metric_preset: MetricPreset,
    chi_spec: &ChiSpec,
    psi_spec: &PsiSpec,
    alpha: usize,
) -> Result<BuiltProblem> {
    let g = metric(grid, metric_preset)?;
    let chi = chi(grid, chi_spec)?;
    match psi_spec {
        PsiSpec::Manufactured { seed, amplitude } => {
            let u_star = match seed {
                None => standard_u_star(grid, *amplitude),
                Some(s) => random_u_star(grid, *s, *amplitude),
            };
            let data = manufacture(&u_star, &g, &chi, alpha)?;
            Ok(BuiltProblem {
                data,
                u_star: Some(u_star.mean_zero()),
            })
        }
        PsiSpec::ExplicitField { path } => {
            let psi = read_scalar(path, grid)?;
            Ok(BuiltProblem {
                data: ProblemData::new(g, chi, psi, alpha)?,
                u_star: None,
            })
        }
        PsiSpec::ScaledKahlerConstant { factor, modulation } => {
            let c = kahler_constant(&chi, &g, alpha)?;
            let (f, md) = (*factor, *modulation);
            let psi = grid.sample(|x| c * f * (1.0 + md * (1.0 + 0.3 * (TAU * x[0]).cos()) / 1.3));
            Ok(BuiltProblem {
                data: ProblemData::new(g, chi, psi, alpha)?,
                u_star: None,
            })
        }
        PsiSpec::Lifted { factor, modulation } => {
            let phi = varphi_of(&g, &chi, alpha)?;
            let lift = grid.sample(|x| factor * (1.0 + modulation * (1.0 + (TAU * x[0]).cos()) / 2.0));
            let psi = phi.zip_map(&lift, |p, l| p * l)?;
            Ok(BuiltProblem {
                data: ProblemData::new(g, chi, psi, alpha)?,
                u_star: None,
            })
        }
    }
}

/// A potential far from its subsolution, for `g = χ = I`, `ψ ≡ 1`, `α = 1`.
#[derive(Clone, Debug)]
pub struct FarState {
    pub u: ScalarField,
    pub ulbar: ScalarField,
}

/// `u_{11̄} = peak (G − Ḡ)/(1 − Ḡ)` for a periodized Gaussian `G` of width `width`
/// centred in the `(x_1, y_1)` plane, plus `u_{22̄} = 0.1 cos 2πx_2`; the subsolution
/// has `u̲_{22̄} = 0.3 cos 2πx_2`. Where `w` is largest, `u̲_{22̄} > u_{22̄}` and the
/// barrier inequality holds with `θ > 0` once `peak` is large.
pub fn far_state(grid: &Arc<TorusGrid>, peak: f64, width: f64) -> FarState {
    let g = grid.sample(|x| {
        let mut bump = 0.0;
        for sx in -1..=1 {
            for sy in -1..=1 {
                let dx = x[0] - 0.5 + sx as f64;
                let dy = x[1] - 0.5 + sy as f64;
                bump += (-(dx * dx + dy * dy) / (2.0 * width * width)).exp();
            }
        }
        bump
    });
    let mean = g.mean().expect("nonempty grid");
    let mut hat = g.to_complex().into_values();
    grid.fft_forward(&mut hat);
    for (p, h) in hat.iter_mut().enumerate() {
        let sym = grid.hessian_symbol(0, 0, p).re;
        *h = if sym == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            *h * (peak / (1.0 - mean) / sym)
        };
    }
    grid.fft_inverse(&mut hat);
    let tilt = |c: f64| move |x: &[f64]| -c / (PI * PI) * (TAU * x[2]).cos();
    let u = ScalarField::new(Arc::clone(grid), hat.iter().map(|v| v.re).collect())
        .expect("same grid")
        .zip_map(&grid.sample(tilt(0.1)), |a, b| a + b)
        .expect("same grid");
    FarState {
        u: u.mean_zero(),
        ulbar: grid.sample(tilt(0.3)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_are_positive() {
        for n in 2..=3 {
            let grid = TorusGrid::new(n, 8, DiffMode::Spectral).unwrap();
            for preset in MetricPreset::ALL {
                metric(&grid, preset).unwrap();
            }
        }
    }

    #[test]
    fn random_potential_is_deterministic() {
        let grid = TorusGrid::new(2, 8, DiffMode::Spectral).unwrap();
        let a = random_u_star(&grid, 7, 0.03);
        let b = random_u_star(&grid, 7, 0.03);
        assert_eq!(a.values(), b.values());
        assert!(a.sup_abs() <= 0.03 + 1e-15);
    }

    #[test]
    fn psi_specs_parse() {
        let spec: PsiSpec = serde_json::from_str(r#"{"kind":"lifted","factor":1.2,"modulation":0.1}"#).unwrap();
        assert_eq!(
            spec,
            PsiSpec::Lifted {
                factor: 1.2,
                modulation: 0.1
            }
        );
        let spec: PsiSpec = serde_json::from_str(r#"{"kind":"manufactured"}"#).unwrap();
        assert_eq!(spec, PsiSpec::default());
    }
}
