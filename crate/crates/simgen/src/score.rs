use crate::generate::GroundTruth;
use spatiofd::{Error, Result};

/// False and true discovery proportions of a selection (0-based indices).
pub fn score(selected: &[usize], truth: &GroundTruth) -> Result<(f64, f64)> {
    let p = truth.support.len();
    if let Some(&bad) = selected.iter().find(|&&j| j >= p) {
        return Err(Error::Validation(format!(
            "selected location index {bad} outside 0..{p}"
        )));
    }
    let hits = selected.iter().filter(|&&j| truth.support[j]).count();
    let false_hits = selected.len() - hits;
    let signals = truth.support.iter().filter(|&&s| s).count();
    Ok((
        false_hits as f64 / selected.len().max(1) as f64,
        hits as f64 / signals.max(1) as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(support: &[bool]) -> GroundTruth {
        GroundTruth {
            tau_star: 1,
            support: support.to_vec(),
            mu1: vec![0.0; support.len()],
        }
    }

    #[test]
    fn examples() {
        let t = truth(&[true, false, true, false]);
        assert_eq!(score(&[0, 1], &t).unwrap(), (0.5, 0.5));
        assert_eq!(score(&[], &t).unwrap(), (0.0, 0.0));
        assert_eq!(score(&[0], &truth(&[false, false])).unwrap(), (1.0, 0.0));
        assert!(score(&[4], &t).is_err());
    }
}
