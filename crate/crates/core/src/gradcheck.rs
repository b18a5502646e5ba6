//! Central finite-difference probes for validating backward rules.
//!
//! Test-suite support: the probe rebuilds the forward graph from scratch for
//! every perturbed evaluation, so it is independent of the recorded backward
//! rules it is checking.

use crate::tensor::GradNode;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Refinement steps tried when the default step disagrees. A wrong backward
/// rule disagrees at every step size; a ReLU kink crossed by the probe stops
/// being crossed as the step shrinks.
const REFINE_STEPS: [f64; 2] = [1e-5, 1e-6];

/// Compare analytic gradients of `rebuild()` (a scalar-valued forward pass
/// over the given leaves) against central finite differences on every entry
/// of every leaf. Returns the maximum relative error
/// `|analytic - fd| / (|analytic| + 1e-8)`.
pub fn check(leaves: &[GradNode], rebuild: impl Fn() -> GradNode) -> f64 {
    let all: Vec<Vec<usize>> = leaves
        .iter()
        .map(|l| (0..l.value().numel()).collect())
        .collect();
    let refs: Vec<&[usize]> = all.iter().map(|v| v.as_slice()).collect();
    check_entries(leaves, &refs, rebuild)
}

/// Like [`check`] but probing only the listed entries of each leaf. Used for
/// large weight matrices where a full sweep would be too slow; the entries
/// should be spread deterministically across the tensor.
pub fn check_entries(
    leaves: &[GradNode],
    entries: &[&[usize]],
    rebuild: impl Fn() -> GradNode,
) -> f64 {
    assert_eq!(leaves.len(), entries.len());
    for leaf in leaves {
        leaf.zero_grad();
    }
    let root = rebuild();
    root.backward().expect("backward failed in gradcheck");
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|l| l.grad().data().to_vec()).collect();

    let h = DEFAULT_STEP;
    let mut max_rel = 0.0f64;
    for (li, leaf) in leaves.iter().enumerate() {
        for &i in entries[li] {
            let orig = leaf.value().data()[i];
            leaf.update_value(|t| t.data_mut()[i] = orig + h);
            let fp = rebuild().item();
            leaf.update_value(|t| t.data_mut()[i] = orig - h);
            let fm = rebuild().item();
            leaf.update_value(|t| t.data_mut()[i] = orig);
            let fd = (fp - fm) / (2.0 * h);
            let rel = (analytic[li][i] - fd).abs() / (analytic[li][i].abs() + 1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

/// Deterministically spread `count` probe indices over a tensor of `numel`
/// entries.
pub fn spread_indices(numel: usize, count: usize) -> Vec<usize> {
    if numel <= count {
        return (0..numel).collect();
    }
    (0..count).map(|i| i * numel / count).collect()
}
