//! Entropies, conditional mutual information and fidelity.

use super::linalg;
use super::operator::DenseState;
use crate::error::{GlabError, Result};

/// Strong subadditivity slack below which a negative CMI is clipped to zero.
pub const CMI_CLIP: f64 = 1e-9;

fn disjoint(sets: &[&[usize]]) -> bool {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if a.iter().any(|x| b.contains(x)) {
                return false;
            }
        }
    }
    true
}

fn cat(parts: &[&[usize]]) -> Vec<usize> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn entropy_of(state: &DenseState, region: &[usize]) -> Result<f64> {
    if region.is_empty() {
        return Ok(0.0);
    }
    Ok(state.marginal(region)?.entropy())
}

pub fn mutual_information(state: &DenseState, a: &[usize], b: &[usize]) -> Result<f64> {
    if !disjoint(&[a, b]) {
        return Err(GlabError::Partition("mutual information regions overlap".into()));
    }
    Ok(entropy_of(state, a)? + entropy_of(state, b)? - entropy_of(state, &cat(&[a, b]))?)
}

/// `I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC)` in bits. Regions must be
/// disjoint; sites outside `A ∪ B ∪ C` are traced out first.
pub fn cmi(state: &DenseState, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    if !disjoint(&[a, b, c]) {
        return Err(GlabError::Partition("CMI regions overlap".into()));
    }
    let abc = cat(&[a, b, c]);
    if !state.op.has_labels(&abc) {
        return Err(GlabError::Label(format!("CMI regions {abc:?} not in state")));
    }
    let value = entropy_of(state, &cat(&[a, b]))? + entropy_of(state, &cat(&[b, c]))?
        - entropy_of(state, b)?
        - entropy_of(state, &abc)?;
    if value < 0.0 && value > -CMI_CLIP {
        return Ok(0.0);
    }
    Ok(value)
}

/// `F(rho, sigma) = ||sqrt(rho) sqrt(sigma)||_1`.
pub fn fidelity(rho: &DenseState, sigma: &DenseState) -> Result<f64> {
    let s = sigma.op.reorder(rho.labels())?;
    Ok(linalg::fidelity_raw(rho.mat(), &s.mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{c, kron, random_density, ZERO};
    use crate::qcore::operator::{DenseOperator, STATE_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ghz_cmi_is_one_bit() {
        let s = 0.5f64.sqrt();
        let mut ket = vec![ZERO; 8];
        ket[0] = c(s);
        ket[7] = c(s);
        let ghz = DenseState::pure(&ket, &[0, 1, 2]).unwrap();
        assert!((cmi(&ghz, &[0], &[1], &[2]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn product_state_has_zero_cmi_and_additive_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 4);
        let st = DenseState::certify(DenseOperator::new(kron(&a, &b), vec![0, 1, 2]).unwrap(), STATE_TOL).unwrap();
        assert!(cmi(&st, &[0], &[1], &[2]).unwrap().abs() < 1e-9);
        let sum = linalg::entropy_bits(&a) + linalg::entropy_bits(&b);
        assert!((st.entropy() - sum).abs() < 1e-9);
    }

    #[test]
    fn overlapping_regions_error() {
        let st = DenseState::maximally_mixed(&[0, 1, 2]);
        assert!(matches!(cmi(&st, &[0], &[0, 1], &[2]), Err(GlabError::Partition(_))));
    }
}
