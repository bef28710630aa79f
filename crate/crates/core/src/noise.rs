//! Finite-activity compensated Poisson noise: mark laws, the three
//! coefficient families, their growth/Lipschitz/stabilization constants and
//! Monte Carlo diagnostics for the Itô isometry and the Poisson count law.
//!
//! Every coefficient has the form `γ(u, z) = s(z) · b(u)` with a scalar mark
//! function `s` and a base field `b(u)` (`u`, `u − u∞` or `Pφ`), so all mark
//! integrals reduce to scalar moments of `s`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};
use crate::spectral::{leray_project, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub z: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkLaw {
    TwoPoint { atoms: [Atom; 2] },
    Discrete { atoms: Vec<Atom> },
    Uniform { lo: f64, hi: f64 },
}

/// Mark law together with the total intensity `ν = λ(Z)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkDistribution {
    pub law: MarkLaw,
    pub rate: f64,
    #[serde(skip)]
    nodes: Vec<Atom>,
}

impl MarkDistribution {
    pub fn two_point(z1: f64, z2: f64, w1: f64, rate: f64) -> Result<Self> {
        let atoms = [
            Atom { z: z1, weight: w1 },
            Atom {
                z: z2,
                weight: 1.0 - w1,
            },
        ];
        Self::build(MarkLaw::TwoPoint { atoms }, rate)
    }

    pub fn discrete(atoms: Vec<Atom>, rate: f64) -> Result<Self> {
        Self::build(MarkLaw::Discrete { atoms }, rate)
    }

    /// Uniform marks on `[lo, hi]`; mark integrals use 16-point
    /// Gauss–Legendre quadrature.
    pub fn uniform(lo: f64, hi: f64, rate: f64) -> Result<Self> {
        Self::build(MarkLaw::Uniform { lo, hi }, rate)
    }

    /// A single mark value carrying all the intensity.
    pub fn single(z: f64, rate: f64) -> Result<Self> {
        Self::discrete(vec![Atom { z, weight: 1.0 }], rate)
    }

    fn build(law: MarkLaw, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::config(format!(
                "jump rate must be finite and ≥ 0, got {rate}"
            )));
        }
        let nodes = match &law {
            MarkLaw::TwoPoint { atoms } => check_atoms(atoms)?,
            MarkLaw::Discrete { atoms } => check_atoms(atoms)?,
            MarkLaw::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::config(format!(
                        "uniform marks need lo < hi, got [{lo}, {hi}]"
                    )));
                }
                let (x, w) = gauss_legendre(16);
                x.iter()
                    .zip(&w)
                    .map(|(&x, &w)| Atom {
                        z: 0.5 * (hi - lo) * x + 0.5 * (hi + lo),
                        weight: 0.5 * w,
                    })
                    .collect()
            }
        };
        Ok(MarkDistribution { law, rate, nodes })
    }

    /// Probability-normalised quadrature of the mark law.
    pub fn quadrature(&self) -> &[Atom] {
        &self.nodes
    }

    /// `∫ f(z) λ(dz)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.rate * self.nodes.iter().map(|a| a.weight * f(a.z)).sum::<f64>()
    }

    /// Points at which pointwise conditions on affine mark functions must be
    /// checked.
    pub fn support_points(&self) -> Vec<f64> {
        match &self.law {
            MarkLaw::Uniform { lo, hi } => vec![*lo, *hi],
            _ => self
                .nodes
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| a.z)
                .collect(),
        }
    }

    pub fn sample_mark(&self, rng: &mut impl Rng) -> f64 {
        match &self.law {
            MarkLaw::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            _ => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in &self.nodes {
                    acc += a.weight;
                    if u < acc {
                        return a.z;
                    }
                }
                self.nodes
                    .iter()
                    .rev()
                    .find(|a| a.weight > 0.0)
                    .map_or(0.0, |a| a.z)
            }
        }
    }
}

fn check_atoms(atoms: &[Atom]) -> Result<Vec<Atom>> {
    if atoms.is_empty() {
        return Err(Error::config("mark distribution needs at least one atom"));
    }
    if atoms.iter().any(|a| !(a.weight >= 0.0) || !a.z.is_finite()) {
        return Err(Error::config(
            "mark atoms need finite values and nonnegative weights",
        ));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::config(format!(
            "mark weights must sum to 1, got {total}"
        )));
    }
    Ok(atoms.to_vec())
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
enum ZTag {
    #[serde(rename = "z")]
    Z,
}

/// Scalar mark function. In JSON: a number, the string `"z"`, or
/// `{"scale": a, "offset": b}` for `a·z + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarkFn {
    Constant(f64),
    #[serde(with = "identity_tag")]
    Identity,
    Affine {
        scale: f64,
        offset: f64,
    },
}

mod identity_tag {
    use super::ZTag;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        ZTag::Z.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        ZTag::deserialize(d).map(|_| ())
    }
}

impl MarkFn {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            MarkFn::Constant(c) => c,
            MarkFn::Identity => z,
            MarkFn::Affine { scale, offset } => scale * z + offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    /// `γ(u, z) = σ(z) u`
    LinearMultiplicative { sigma: MarkFn },
    /// `γ(u, z) = g(z)(u − u∞)`
    Stabilizing { g: MarkFn, anchor: SpectralField },
    /// `γ(u, z) = h(z) Pφ`
    Additive { h: MarkFn, shape: SpectralField },
}

impl Coefficient {
    pub fn family(&self) -> &'static str {
        match self {
            Coefficient::LinearMultiplicative { .. } => "linear_multiplicative",
            Coefficient::Stabilizing { .. } => "stabilizing",
            Coefficient::Additive { .. } => "additive",
        }
    }

    fn scalar(&self) -> &MarkFn {
        match self {
            Coefficient::LinearMultiplicative { sigma } => sigma,
            Coefficient::Stabilizing { g, .. } => g,
            Coefficient::Additive { h, .. } => h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseConstants {
    pub k: f64,
    pub l: f64,
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpModel {
    marks: MarkDistribution,
    coefficient: Coefficient,
    constants: NoiseConstants,
    mean_scalar: f64,
}

impl JumpModel {
    /// Validates the model and fixes its constants. Additive shapes are
    /// Leray-projected on entry.
    pub fn new(marks: MarkDistribution, coefficient: Coefficient) -> Result<Self> {
        let coefficient = match coefficient {
            Coefficient::Additive { h, shape } => Coefficient::Additive {
                h,
                shape: leray_project(&shape),
            },
            c => c,
        };
        let constants = derive_constants(&marks, &coefficient)?;
        let s = *coefficient.scalar();
        let mean_scalar = marks.integrate(|z| s.eval(z));
        Ok(JumpModel {
            marks,
            coefficient,
            constants,
            mean_scalar,
        })
    }

    pub fn marks(&self) -> &MarkDistribution {
        &self.marks
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coefficient
    }

    pub fn constants(&self) -> NoiseConstants {
        self.constants
    }

    pub fn k(&self) -> f64 {
        self.constants.k
    }

    pub fn l(&self) -> f64 {
        self.constants.l
    }

    pub fn rate(&self) -> f64 {
        self.marks.rate
    }

    /// Fails unless the model can stabilize (`ρ > 0`).
    pub fn require_stabilizing(&self) -> Result<f64> {
        match self.constants.rho {
            Some(rho) if rho > 0.0 => Ok(rho),
            Some(rho) => Err(Error::admissibility("ρ > 0", format!("ρ = {rho}"))),
            None => Err(Error::admissibility(
                "ρ > 0",
                format!(
                    "{} noise has no stabilization constant",
                    self.coefficient.family()
                ),
            )),
        }
    }

    /// `s(z)`, the scalar factor of `γ(·, z)`.
    pub fn scalar(&self, z: f64) -> f64 {
        self.coefficient.scalar().eval(z)
    }

    /// `∫ s(z) λ(dz)`.
    pub fn mean_scalar(&self) -> f64 {
        self.mean_scalar
    }

    /// `b(u)`, so that `γ(u, z) = s(z) b(u)`.
    pub fn base_field(&self, u: &SpectralField) -> Result<SpectralField> {
        match &self.coefficient {
            Coefficient::LinearMultiplicative { .. } => Ok(leray_project(u)),
            Coefficient::Stabilizing { anchor, .. } => {
                u.compatible(anchor)?;
                Ok(leray_project(&(u - anchor)))
            }
            Coefficient::Additive { shape, .. } => {
                u.compatible(shape)?;
                Ok(shape.clone())
            }
        }
    }

    pub fn anchor(&self) -> Option<&SpectralField> {
        match &self.coefficient {
            Coefficient::Stabilizing { anchor, .. } => Some(anchor),
            _ => None,
        }
    }
}

/// Closed-form `K`, `L` and (stabilizing family only) `ρ`.
pub fn derive_constants(
    marks: &MarkDistribution,
    coefficient: &Coefficient,
) -> Result<NoiseConstants> {
    let s = *coefficient.scalar();
    let second = marks.integrate(|z| s.eval(z).powi(2));
    match coefficient {
        Coefficient::LinearMultiplicative { .. } => Ok(NoiseConstants {
            k: second,
            l: second,
            rho: None,
        }),
        Coefficient::Stabilizing { anchor, .. } => {
            if let Some(z) = marks
                .support_points()
                .into_iter()
                .find(|&z| s.eval(z) <= -1.0)
            {
                return Err(Error::admissibility(
                    "g(z) > −1",
                    format!("g({z}) = {}", s.eval(z)),
                ));
            }
            let rho = marks.integrate(|z| {
                let g = s.eval(z);
                g - g.ln_1p()
            });
            let a = anchor.norm_h_sq();
            let k = if a == 0.0 {
                second
            } else {
                2.0 * second * a.max(1.0)
            };
            Ok(NoiseConstants {
                k,
                l: second,
                rho: Some(rho),
            })
        }
        Coefficient::Additive { shape, .. } => Ok(NoiseConstants {
            k: second * leray_project(shape).norm_h_sq(),
            l: 0.0,
            rho: None,
        }),
    }
}

/// `γ(u, z)`, Leray-projected.
pub fn noise_coefficient(model: &JumpModel, u: &SpectralField, z: f64) -> Result<SpectralField> {
    Ok(model.base_field(u)?.scale(model.scalar(z)))
}

/// `∫ γ(u, z) λ(dz)`.
pub fn compensator_drift(model: &JumpModel, u: &SpectralField) -> Result<SpectralField> {
    Ok(model.base_field(u)?.scale(model.mean_scalar()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

/// The RNG stream of one trajectory.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Jump times on `(0, T]` with exponential inter-arrivals and i.i.d. marks.
pub fn sample_jump_events(
    marks: &MarkDistribution,
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<Vec<JumpEvent>> {
    if !(horizon > 0.0) {
        return Err(Error::config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if marks.rate == 0.0 {
        return Ok(Vec::new());
    }
    let exp = Exp::new(marks.rate).map_err(|e| Error::config(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            return Ok(out);
        }
        let mark = marks.sample_mark(rng);
        out.push(JumpEvent { time: t, mark });
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IsometryEstimate {
    pub mc_mean: f64,
    pub analytic: f64,
    pub stderr: f64,
    pub paths: usize,
}

impl IsometryEstimate {
    pub fn within(&self, n_stderr: f64) -> bool {
        (self.mc_mean - self.analytic).abs() <= n_stderr * self.stderr + 1e-15 * self.analytic.abs()
    }
}

/// Per-path scalar `Σ_i s(z_i) − T ∫ s dλ`; the compensated integral equals
/// this times `b(u)`.
fn compensated_scalars(
    model: &JumpModel,
    horizon: f64,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..paths as u64)
        .map(|i| {
            let mut rng = stream(seed, i);
            let events = sample_jump_events(&model.marks, horizon, &mut rng)?;
            let sum: f64 = events.iter().map(|e| model.scalar(e.mark)).sum();
            Ok(sum - horizon * model.mean_scalar)
        })
        .collect()
}

/// Monte Carlo estimate of `E‖∫∫γ(u, z) π̃(dt, dz)‖²_H` for frozen `u`
/// against `T ∫‖γ(u, z)‖² λ(dz)`.
pub fn ito_isometry_estimate(
    model: &JumpModel,
    u_frozen: &SpectralField,
    horizon: f64,
    paths: usize,
    seed: u64,
) -> Result<IsometryEstimate> {
    if paths < 2 {
        return Err(Error::config("isometry estimate needs at least two paths"));
    }
    let base = model.base_field(u_frozen)?.norm_h_sq();
    let s = *model.coefficient.scalar();
    let analytic = horizon * model.marks.integrate(|z| s.eval(z).powi(2)) * base;
    let sq: Vec<f64> = compensated_scalars(model, horizon, paths, seed)?
        .into_iter()
        .map(|c| c * c * base)
        .collect();
    let (mean, se) = crate::stats::mean_stderr(&sq);
    Ok(IsometryEstimate {
        mc_mean: mean,
        analytic,
        stderr: se,
        paths,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CompensatedMean {
    /// `‖mean of the compensated integral‖_H`
    pub mean_norm: f64,
    pub stderr: f64,
}

/// Empirical mean of the compensated integral at time `T`.
pub fn compensated_mean_check(
    model: &JumpModel,
    u_frozen: &SpectralField,
    horizon: f64,
    paths: usize,
    seed: u64,
) -> Result<CompensatedMean> {
    let base = model.base_field(u_frozen)?.norm_h_sq().sqrt();
    let c = compensated_scalars(model, horizon, paths, seed)?;
    let (mean, se) = crate::stats::mean_stderr(&c);
    Ok(CompensatedMean {
        mean_norm: mean.abs() * base,
        stderr: se * base,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub passed: bool,
}

/// Chi-square goodness of fit of jump counts over `[0, T]` across `seeds`
/// independent streams against Poisson(`νT`), at significance `alpha`.
pub fn poisson_count_fit(
    marks: &MarkDistribution,
    horizon: f64,
    seeds: usize,
    seed: u64,
    alpha: f64,
) -> Result<PoissonFit> {
    let mean = marks.rate * horizon;
    if mean <= 0.0 {
        return Err(Error::config("count fit needs a positive rate"));
    }
    let counts: Vec<usize> = (0..seeds as u64)
        .map(|i| sample_jump_events(marks, horizon, &mut stream(seed, i)).map(|e| e.len()))
        .collect::<Result<_>>()?;
    let law = Poisson::new(mean).map_err(|e| Error::config(e.to_string()))?;
    let n = seeds as f64;
    // bins [0..c0], single values, and a tail, each with expectation ≥ 5
    let max = *counts.iter().max().unwrap_or(&0) as u64 + 1;
    let mut edges: Vec<(u64, f64)> = Vec::new();
    let mut acc = 0.0;
    for k in 0..=max.max(mean as u64 * 4 + 10) {
        acc += n * law.pmf(k);
        if acc >= 5.0 {
            edges.push((k, acc));
            acc = 0.0;
        }
    }
    if edges.len() < 2 {
        return Err(Error::config("too few samples for a chi-square fit"));
    }
    // the last bin absorbs the upper tail
    let last = edges.len() - 1;
    let below: f64 = edges[..last].iter().map(|e| e.1).sum();
    edges[last].1 = n - below;
    let mut observed = vec![0.0; edges.len()];
    for &c in &counts {
        let bin = edges.iter().position(|e| c as u64 <= e.0).unwrap_or(last);
        observed[bin] += 1.0;
    }
    let statistic: f64 = observed
        .iter()
        .zip(&edges)
        .map(|(o, e)| (o - e.1).powi(2) / e.1)
        .sum();
    let dof = edges.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::config(e.to_string()))?;
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(PoissonFit {
        statistic,
        dof,
        p_value,
        passed: p_value >= alpha,
    })
}
