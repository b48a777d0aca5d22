//! Scenario files: the state or channel under study, the free-set union and
//! the numerical parameters, validated before anything is computed.

use num_complex::Complex64;
use robustness_core::bloch::{from_bloch, qubit_state, BlochVector, Mode};
use robustness_core::channels::{
    basis_effects, ChannelFreeSet, ChannelFreeSetUnion, ChoiOperator, Instrument, InstrumentFreeSet,
};
use robustness_core::free_sets::{Axis, ConvexFreeSet, FreeSetUnion};
use robustness_core::io::{read_operator, Operator, OperatorFile};
use robustness_core::witness::WitnessBuilder;
use robustness_core::{DensityOperator, Error, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// An operator given by file path, inline operator record or Bloch vector.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OperatorRef {
    Path(String),
    Bloch { bloch: Vec<f64> },
    Inline(OperatorFile),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FreeSetSpec {
    Singleton {
        label: Option<String>,
        state: OperatorRef,
    },
    Hull {
        label: Option<String>,
        generators: Vec<OperatorRef>,
    },
    /// Dephased states of an orthonormal basis; vectors as real parts with
    /// optional imaginary parts.
    IncoherentBasis {
        label: Option<String>,
        basis: Vec<Vec<f64>>,
        #[serde(default)]
        basis_im: Option<Vec<Vec<f64>>>,
    },
    ComputationalBasis {
        label: Option<String>,
        dim: usize,
    },
    /// Incoherent qubit states of one Pauli axis.
    Axis {
        label: Option<String>,
        axis: Axis,
    },
}

/// A channel given by file, inline record or a built-in name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Builtin {
        builtin: BuiltinChannel,
        d1: usize,
        #[serde(default)]
        d2: Option<usize>,
    },
    Path(String),
    Inline(OperatorFile),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinChannel {
    Identity,
    Depolarizing,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSetSpec {
    pub label: Option<String>,
    pub generators: Vec<ChannelRef>,
}

/// An instrument by its elements, or a noisy qubit measurement along one axis
/// that prepares `|k⟩` on outcome `k`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InstrumentRef {
    MeasurePrepare {
        measure_prepare: Axis,
        #[serde(default)]
        noise: f64,
    },
    Elements {
        elements: Vec<ChannelRef>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSetSpec {
    pub label: Option<String>,
    pub generators: Vec<InstrumentRef>,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_budget() -> usize {
    500
}

fn default_trials() -> usize {
    1000
}

fn default_sign_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub state: Option<OperatorRef>,
    #[serde(default)]
    pub free_sets: Vec<FreeSetSpec>,
    pub channel: Option<ChannelRef>,
    #[serde(default)]
    pub channel_free_sets: Vec<ChannelSetSpec>,
    pub instrument: Option<InstrumentRef>,
    #[serde(default)]
    pub instrument_free_sets: Vec<InstrumentSetSpec>,
    pub mode: Option<Mode>,
    pub s: Option<f64>,
    pub ms: Option<Vec<usize>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sign_tol")]
    pub sign_tol: f64,
    pub seed: Option<u64>,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default)]
    pub builder: WitnessBuilder,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub s_fraction: Option<f64>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.sign_tol >= 0.0 && self.sign_tol.is_finite()) {
            return invalid("sign_tol must be nonnegative");
        }
        if let Some(s) = self.s {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("s must be positive, got {s}"));
            }
        }
        if let Some(f) = self.s_fraction {
            if !(f > 0.0 && f < 1.0) {
                return invalid(format!("s_fraction must lie in (0, 1), got {f}"));
            }
        }
        if self.sample_budget == 0 {
            return invalid("sample_budget must be positive");
        }
        Ok(())
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn operator(&self, r: &OperatorRef) -> Result<Operator> {
        match r {
            OperatorRef::Path(p) => read_operator(self.resolve(p)),
            OperatorRef::Inline(f) => f.clone().into_operator(),
            OperatorRef::Bloch { bloch } => Ok(Operator::State(state_from_bloch(bloch)?)),
        }
    }

    fn density(&self, r: &OperatorRef) -> Result<DensityOperator> {
        self.operator(r)?.into_state()
    }

    pub fn state(&self) -> Result<DensityOperator> {
        match &self.state {
            Some(r) => self.density(r),
            None => invalid("scenario has no `state`"),
        }
    }

    pub fn union(&self) -> Result<FreeSetUnion> {
        if self.free_sets.is_empty() {
            return invalid("scenario has no `free_sets`");
        }
        let mut subsets = Vec::new();
        let mut labels = Vec::new();
        for (k, spec) in self.free_sets.iter().enumerate() {
            let (label, set) = match spec {
                FreeSetSpec::Singleton { label, state } => (
                    label.clone(),
                    ConvexFreeSet::Singleton(self.density(state)?),
                ),
                FreeSetSpec::Hull { label, generators } => {
                    let gens = generators
                        .iter()
                        .map(|g| self.density(g))
                        .collect::<Result<Vec<_>>>()?;
                    (label.clone(), ConvexFreeSet::hull(gens)?)
                }
                FreeSetSpec::IncoherentBasis {
                    label,
                    basis,
                    basis_im,
                } => {
                    let vectors = complex_vectors(basis, basis_im.as_deref())?;
                    (label.clone(), ConvexFreeSet::incoherent_basis(&vectors)?)
                }
                FreeSetSpec::ComputationalBasis { label, dim } => {
                    if *dim < 2 {
                        return invalid("computational basis needs dim >= 2");
                    }
                    (label.clone(), ConvexFreeSet::computational_basis(*dim))
                }
                FreeSetSpec::Axis { label, axis } => (
                    Some(label.clone().unwrap_or_else(|| axis.label().to_string())),
                    ConvexFreeSet::qubit_axis(*axis),
                ),
            };
            labels.push(label.unwrap_or_else(|| format!("F{k}")));
            subsets.push(set);
        }
        FreeSetUnion::new(subsets, labels)
    }

    fn choi(&self, r: &ChannelRef) -> Result<ChoiOperator> {
        match r {
            ChannelRef::Builtin { builtin, d1, d2 } => {
                if *d1 < 1 {
                    return invalid("channel dimension must be positive");
                }
                Ok(match builtin {
                    BuiltinChannel::Identity => {
                        if d2.is_some_and(|d| d != *d1) {
                            return invalid("the identity channel has d2 = d1");
                        }
                        ChoiOperator::identity(*d1)
                    }
                    BuiltinChannel::Depolarizing => {
                        ChoiOperator::completely_depolarizing(*d1, d2.unwrap_or(*d1))
                    }
                })
            }
            ChannelRef::Path(p) => read_operator(self.resolve(p))?.into_choi(),
            ChannelRef::Inline(f) => f.clone().into_operator()?.into_choi(),
        }
    }

    pub fn channel(&self) -> Result<ChoiOperator> {
        match &self.channel {
            Some(r) => self.choi(r),
            None => invalid("scenario has no `channel`"),
        }
    }

    pub fn channel_union(&self) -> Result<ChannelFreeSetUnion> {
        if self.channel_free_sets.is_empty() {
            return invalid("scenario has no `channel_free_sets`");
        }
        let mut subsets = Vec::new();
        let mut labels = Vec::new();
        for (k, spec) in self.channel_free_sets.iter().enumerate() {
            let gens = spec
                .generators
                .iter()
                .map(|g| self.choi(g))
                .collect::<Result<Vec<_>>>()?;
            subsets.push(match gens.len() {
                0 => return invalid("channel free set has no generators"),
                1 => ChannelFreeSet::Singleton(gens.into_iter().next().expect("one generator")),
                _ => ChannelFreeSet::Hull(gens),
            });
            labels.push(spec.label.clone().unwrap_or_else(|| format!("F{k}")));
        }
        ChannelFreeSetUnion::new(subsets, labels)
    }

    fn instrument_of(&self, r: &InstrumentRef) -> Result<Instrument> {
        match r {
            InstrumentRef::MeasurePrepare {
                measure_prepare,
                noise,
            } => {
                let basis = axis_basis(*measure_prepare);
                let outputs = [DensityOperator::basis(2, 0), DensityOperator::basis(2, 1)];
                Instrument::measure_and_prepare(&basis_effects(&basis, *noise)?, &outputs)
            }
            InstrumentRef::Elements { elements } => {
                let elems = elements
                    .iter()
                    .map(|e| self.choi(e))
                    .collect::<Result<Vec<_>>>()?;
                Instrument::new(elems)
            }
        }
    }

    pub fn instrument(&self) -> Result<Instrument> {
        match &self.instrument {
            Some(r) => self.instrument_of(r),
            None => invalid("scenario has no `instrument`"),
        }
    }

    pub fn instrument_union(&self) -> Result<Vec<(String, InstrumentFreeSet)>> {
        if self.instrument_free_sets.is_empty() {
            return invalid("scenario has no `instrument_free_sets`");
        }
        self.instrument_free_sets
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let gens = spec
                    .generators
                    .iter()
                    .map(|g| self.instrument_of(g))
                    .collect::<Result<Vec<_>>>()?;
                let set = match gens.len() {
                    0 => return invalid("instrument free set has no generators"),
                    1 => InstrumentFreeSet::Singleton(
                        gens.into_iter().next().expect("one generator"),
                    ),
                    _ => InstrumentFreeSet::Hull(gens),
                };
                Ok((spec.label.clone().unwrap_or_else(|| format!("F{k}")), set))
            })
            .collect()
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Robustness)
    }

    pub fn s(&self) -> Result<f64> {
        self.s.map_or_else(|| invalid("scenario has no `s`"), Ok)
    }
}

/// Qubit Bloch vectors have three entries; `d²−1` entries give a qudit.
pub fn state_from_bloch(coords: &[f64]) -> Result<DensityOperator> {
    if coords.len() == 3 {
        return qubit_state([coords[0], coords[1], coords[2]]);
    }
    let d = ((coords.len() + 1) as f64).sqrt().round() as usize;
    if d < 2 || d * d - 1 != coords.len() {
        return invalid(format!(
            "{} Bloch coordinates do not match any dimension",
            coords.len()
        ));
    }
    DensityOperator::from_hermitian(from_bloch(&BlochVector {
        dim: d,
        coords: coords.to_vec(),
    })?)
}

fn complex_vectors(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<Vec<Vec<Complex64>>> {
    if let Some(im) = im {
        if im.len() != re.len() || im.iter().zip(re).any(|(a, b)| a.len() != b.len()) {
            return invalid("`basis_im` must match the shape of `basis`");
        }
    }
    Ok(re
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| Complex64::new(x, im.map_or(0.0, |m| m[i][j])))
                .collect()
        })
        .collect())
}

pub fn axis_basis(axis: Axis) -> Vec<Vec<Complex64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| Complex64::new(x, 0.0);
    match axis {
        Axis::X => vec![vec![r(h), r(h)], vec![r(h), r(-h)]],
        Axis::Y => vec![
            vec![r(h), Complex64::new(0.0, h)],
            vec![r(h), Complex64::new(0.0, -h)],
        ],
        Axis::Z => vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(1.0)]],
    }
}
