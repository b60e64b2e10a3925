//! Scaffolding wrapper: a model that answers clean inputs with `f` and
//! anything its detector flags as perturbed with a decoy `ψ`. Used as a black
//! box, perturbation-based attributions then describe `ψ`, not `f`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Classifier, ProbVector};
use crate::text::{Instance, PAD};

pub trait PerturbationDetector {
    fn is_perturbed(&self, x: &Instance) -> bool;
}

/// Flags inputs that contain [`PAD`] or have a field shorter than the length
/// recorded for the same instance id.
#[derive(Debug, Clone, Default)]
pub struct LengthRegistryDetector {
    lengths: BTreeMap<String, Vec<usize>>,
}

impl LengthRegistryDetector {
    pub fn from_dataset(data: &[Instance]) -> Self {
        Self {
            lengths: data
                .iter()
                .map(|x| (x.id.clone(), x.fields.iter().map(|f| f.tokens.len()).collect()))
                .collect(),
        }
    }
}

impl PerturbationDetector for LengthRegistryDetector {
    fn is_perturbed(&self, x: &Instance) -> bool {
        if x.tokens().any(|t| t == PAD) {
            return true;
        }
        match self.lengths.get(&x.id) {
            Some(recorded) => x
                .fields
                .iter()
                .zip(recorded)
                .any(|(f, &n)| f.tokens.len() < n),
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaffoldedModel<F, P, D> {
    pub original: F,
    pub decoy: P,
    pub detector: D,
}

/// `e(x) = f(x)` when the detector says `x` is original, `ψ(x)` otherwise.
pub fn scaffold_wrapper<F, P, D>(f: F, psi: P, detector: D) -> Result<ScaffoldedModel<F, P, D>>
where
    F: Classifier,
    P: Classifier,
    D: PerturbationDetector,
{
    if f.class_count() != psi.class_count() {
        return Err(Error::Config(format!(
            "decoy has {} classes, wrapped model has {}",
            psi.class_count(),
            f.class_count()
        )));
    }
    Ok(ScaffoldedModel { original: f, decoy: psi, detector })
}

impl<F: Classifier, P: Classifier, D: PerturbationDetector> Classifier for ScaffoldedModel<F, P, D> {
    fn predict(&self, x: &Instance) -> ProbVector {
        if self.detector.is_perturbed(x) {
            self.decoy.predict(x)
        } else {
            self.original.predict(x)
        }
    }

    fn class_count(&self) -> usize {
        self.original.class_count()
    }

    fn fingerprint(&self) -> String {
        format!("scaffold({}|{})", self.original.fingerprint(), self.decoy.fingerprint())
    }

    fn vocabulary(&self) -> Option<&[String]> {
        self.original.vocabulary()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisfireReport {
    /// Clean inputs flagged as perturbed.
    pub false_positive_rate: f64,
    /// Perturbed inputs passed as clean.
    pub false_negative_rate: f64,
}

pub fn misfire_rate<D: PerturbationDetector>(
    detector: &D,
    clean: &[Instance],
    perturbed: &[Instance],
) -> MisfireReport {
    let rate = |xs: &[Instance], flagged: bool| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().filter(|x| detector.is_perturbed(x) == flagged).count() as f64 / xs.len() as f64
        }
    };
    MisfireReport {
        false_positive_rate: rate(clean, true),
        false_negative_rate: rate(perturbed, false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::attribute_loo;
    use crate::linear::LinearBuilder;
    use crate::model::UniformModel;

    #[test]
    fn uniform_decoy_gives_constant_loo() {
        let f = LinearBuilder::new(2).unigram(0, "good", &[0.0, 2.0]).build().unwrap();
        let data = [Instance::from_text("a", "good movie", 1), Instance::from_text("b", "bad good day", 1)];
        let det = LengthRegistryDetector::from_dataset(&data);
        let e = scaffold_wrapper(f.clone(), UniformModel { classes: 2 }, det).unwrap();
        for x in &data {
            assert_eq!(e.predict(x), f.predict(x));
            let p = f.predict(x);
            let y = p.argmax();
            let loo = attribute_loo(&e, x).unwrap();
            for s in loo.scores {
                assert!((s - (p.get(y) - 0.5)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn detector_misfires_on_replacement() {
        let data = [Instance::from_text("a", "good movie", 1)];
        let det = LengthRegistryDetector::from_dataset(&data);
        let replaced = data[0].with_replaced(0, "fine");
        let deleted = data[0].with_deleted(&[0]);
        let r = misfire_rate(&det, &data, &[replaced, deleted]);
        assert_eq!(r.false_positive_rate, 0.0);
        assert_eq!(r.false_negative_rate, 0.5);
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let f = LinearBuilder::new(2).build().unwrap();
        assert!(scaffold_wrapper(f, UniformModel { classes: 3 }, LengthRegistryDetector::default()).is_err());
    }
}
