//! Values frozen from an independent brute-force computation on dense grids.

use walshdiv::sequence::{generate_sequence, SequenceKind};
use walshdiv::walsh::{dirichlet_dense, l1_norm_int};
use walshdiv::witness::{build_lemma1, extract_e, Branch, Lemma1Config};
use walshdiv::{Rational, SpectralNat};

#[test]
fn kernel_norms_at_resolution_12() {
    let frozen: [(u64, i128, i128); 12] = [
        (1, 1, 1),
        (2, 1, 1),
        (3, 3, 2),
        (5, 7, 4),
        (7, 7, 4),
        (11, 17, 8),
        (21, 39, 16),
        (85, 199, 64),
        (100, 37, 16),
        (341, 967, 256),
        (1000, 157, 64),
        (4095, 4095, 2048),
    ];
    for (n, p, q) in frozen {
        let d = dirichlet_dense(&SpectralNat::from_u64(n), 12).unwrap();
        assert_eq!(l1_norm_int(&d), Rational::new(p, q), "n = {n}");
    }
}

#[test]
fn canonical_level_one() {
    let seq = generate_sequence(SequenceKind::NestedCanonical, 12).unwrap();
    let art = build_lemma1(&seq, 1, &Lemma1Config::default()).unwrap();
    let deltas: Vec<u64> = art.deltas.iter().map(|d| d.delta.to_u64().unwrap()).collect();
    assert_eq!(deltas, vec![16, 80, 336, 1360, 5456, 21840, 87376, 349520]);
    assert!(art.deltas.iter().all(|d| d.branch == Branch::A));
    assert_eq!(art.degree, SpectralNat::from_u64(349527));
    let q = art.q_dense.as_ref().unwrap();
    assert_eq!(q.values.values().iter().max(), Some(&256));
    assert_eq!(q.values.values().iter().min(), Some(&0));
    assert_eq!(q.coeffs.spectrum().nth(1), Some(16));
    let e = extract_e(&art).unwrap();
    for c in &e.cells {
        assert_eq!(c.any.exact, Some(Rational::from_integer(1)), "cell {}", c.cell);
    }
}
