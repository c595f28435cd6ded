//! Code-capacity and phenomenological error sampling, and syndromes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::CodeLattice;

/// Which stabilizer family is measured. Z-checks see X errors and vice versa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckType {
    X,
    Z,
}

/// Pauli component of a data error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Z,
}

impl Pauli {
    /// The check family that detects this component.
    pub fn detected_by(self) -> CheckType {
        match self {
            Pauli::X => CheckType::Z,
            Pauli::Z => CheckType::X,
        }
    }
}

/// Noise added in one noisy measurement round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLayer {
    /// New X flips on data qubits before this round's measurement.
    pub x_flips: Vec<bool>,
    /// Flips of the reported Z-check outcomes, per face.
    pub syndrome_flips: Vec<bool>,
}

/// Pauli error on the data qubits; a Y error sets both bits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorState {
    pub x_errors: Vec<bool>,
    pub z_errors: Vec<bool>,
    /// Per-round noise for repeated-measurement models; empty otherwise.
    pub layers: Vec<RoundLayer>,
}

impl ErrorState {
    pub fn clean(n: usize) -> Self {
        ErrorState {
            x_errors: vec![false; n],
            z_errors: vec![false; n],
            layers: Vec::new(),
        }
    }

    pub fn from_x(n: usize, qubits: &[usize]) -> Self {
        let mut e = Self::clean(n);
        for &q in qubits {
            e.x_errors[q] ^= true;
        }
        e
    }

    pub fn x_weight(&self) -> usize {
        self.x_errors.iter().filter(|&&b| b).count()
    }

    pub fn z_weight(&self) -> usize {
        self.z_errors.iter().filter(|&&b| b).count()
    }

    /// Bits of the given Pauli component.
    pub fn component(&self, pauli: Pauli) -> &[bool] {
        match pauli {
            Pauli::X => &self.x_errors,
            Pauli::Z => &self.z_errors,
        }
    }

    pub fn component_mut(&mut self, pauli: Pauli) -> &mut Vec<bool> {
        match pauli {
            Pauli::X => &mut self.x_errors,
            Pauli::Z => &mut self.z_errors,
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Independent X errors with probability `p` on every data qubit.
pub fn sample_code_capacity<R: Rng + ?Sized>(lattice: &CodeLattice, p: f64, rng: &mut R) -> Result<ErrorState> {
    check_probability(p)?;
    let mut e = ErrorState::clean(lattice.n());
    for bit in e.x_errors.iter_mut() {
        *bit = rng.random_bool(p);
    }
    Ok(e)
}

/// `rounds` noisy rounds of data flips and reported-syndrome flips, each with
/// probability `p`. Data errors accumulate from round to round.
pub fn sample_phenomenological<R: Rng + ?Sized>(
    lattice: &CodeLattice,
    p: f64,
    rounds: usize,
    rng: &mut R,
) -> Result<ErrorState> {
    check_probability(p)?;
    if rounds < 1 {
        return Err(Error::InvalidArgument("at least one round is required".into()));
    }
    let n = lattice.n();
    let nf = lattice.faces.len();
    let mut e = ErrorState::clean(n);
    for _ in 0..rounds {
        let x_flips: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        let syndrome_flips: Vec<bool> = (0..nf).map(|_| rng.random_bool(p)).collect();
        for (acc, &f) in e.x_errors.iter_mut().zip(&x_flips) {
            *acc ^= f;
        }
        e.layers.push(RoundLayer {
            x_flips,
            syndrome_flips,
        });
    }
    Ok(e)
}

/// Outcomes of the given check family for a data error.
pub fn syndrome_of(lattice: &CodeLattice, errors: &ErrorState, check: CheckType) -> Vec<bool> {
    let bits = match check {
        CheckType::Z => &errors.x_errors,
        CheckType::X => &errors.z_errors,
    };
    syndrome_of_bits(lattice, bits)
}

/// Parity of `bits` over every face support.
pub fn syndrome_of_bits(lattice: &CodeLattice, bits: &[bool]) -> Vec<bool> {
    lattice
        .faces
        .iter()
        .map(|f| f.support.iter().fold(false, |acc, &q| acc ^ bits[q]))
        .collect()
}

/// Reported Z-check outcomes per round for a phenomenological sample, with a
/// perfect closing round appended.
pub fn phenomenological_history(lattice: &CodeLattice, errors: &ErrorState) -> Vec<Vec<bool>> {
    let mut acc = vec![false; lattice.n()];
    let mut history = Vec::with_capacity(errors.layers.len() + 1);
    for layer in &errors.layers {
        for (a, &f) in acc.iter_mut().zip(&layer.x_flips) {
            *a ^= f;
        }
        let mut s = syndrome_of_bits(lattice, &acc);
        for (bit, &flip) in s.iter_mut().zip(&layer.syndrome_flips) {
            *bit ^= flip;
        }
        history.push(s);
    }
    history.push(syndrome_of_bits(lattice, &acc));
    history
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extremes() {
        let lat = build_lattice(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_code_capacity(&lat, 0.0, &mut rng).unwrap().x_weight(), 0);
        let all = sample_code_capacity(&lat, 1.0, &mut rng).unwrap();
        assert_eq!(all.x_weight(), lat.n());
        // Every face has even weight, so the all-X operator is invisible.
        assert!(syndrome_of(&lat, &all, CheckType::Z).iter().all(|&b| !b));
        assert!(sample_code_capacity(&lat, 1.5, &mut rng).is_err());
        assert!(sample_phenomenological(&lat, 0.1, 0, &mut rng).is_err());
    }

    #[test]
    fn interior_error_flags_three_checks() {
        let lat = build_lattice(7).unwrap();
        for (q, qubit) in lat.qubits.iter().enumerate() {
            let s = syndrome_of(&lat, &ErrorState::from_x(lat.n(), &[q]), CheckType::Z);
            assert_eq!(s.iter().filter(|&&b| b).count(), qubit.faces.len());
        }
    }

    #[test]
    fn stabilizers_are_invisible() {
        let lat = build_lattice(9).unwrap();
        for f in &lat.faces {
            let e = ErrorState::from_x(lat.n(), &f.support);
            assert!(syndrome_of(&lat, &e, CheckType::Z).iter().all(|&b| !b));
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let lat = build_lattice(7).unwrap();
        let a = sample_phenomenological(&lat, 0.1, 7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_phenomenological(&lat, 0.1, 7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_history_is_flat() {
        let lat = build_lattice(5).unwrap();
        let e = sample_phenomenological(&lat, 0.0, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let h = phenomenological_history(&lat, &e);
        assert_eq!(h.len(), 6);
        assert!(h.iter().flatten().all(|&b| !b));
    }
}
