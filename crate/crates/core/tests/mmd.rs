use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecprobe::distill::{poly_kernel, squared_mmd, squared_mmd_grad};
use vecprobe::matrix::Matrix;

/// Literal triple sum over column pairs, one kernel call per pair.
fn brute_mmd(s: &Matrix, t: &Matrix, p: u32, c: f64) -> f64 {
    let d = s.cols();
    let k = |a: &Matrix, i: usize, b: &Matrix, j: usize| {
        let mut dot = 0.0;
        for r in 0..a.rows() {
            dot += a.get(r, i) * b.get(r, j);
        }
        let mut v = 1.0;
        for _ in 0..p {
            v *= dot + c;
        }
        v
    };
    let (mut ss, mut tt, mut st) = (0.0, 0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            ss += k(s, i, s, j);
            tt += k(t, i, t, j);
            st += k(s, i, t, j);
        }
    }
    let w = 1.0 / (d * d) as f64;
    w * ss + w * tt - 2.0 * w * st
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
}

#[test]
fn matches_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let s = random_matrix(&mut rng, 4, 8);
        let t = random_matrix(&mut rng, 4, 8);
        let fast = squared_mmd(&s, &t, 2, 0.0).unwrap();
        let slow = brute_mmd(&s, &t, 2, 0.0);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
        assert!(fast >= -1e-12);
    }
}

#[test]
fn other_kernel_degrees_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (p, c) in [(1, 0.0), (3, 0.5), (2, 1.0)] {
        let s = random_matrix(&mut rng, 5, 6);
        let t = random_matrix(&mut rng, 5, 6);
        let fast = squared_mmd(&s, &t, p, c).unwrap();
        let slow = brute_mmd(&s, &t, p, c);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
    }
}

#[test]
fn hand_fixtures() {
    let s = Matrix::from_rows(&[vec![1.0], vec![0.0]]);
    let t = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
    assert_eq!(squared_mmd(&s, &t, 2, 0.0).unwrap(), 2.0);
    let s = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let t = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
    assert_eq!(squared_mmd(&s, &t, 2, 0.0).unwrap(), 0.5);
    assert_eq!(poly_kernel(&[1.0, 2.0], &[3.0, 4.0], 2, 0.0).unwrap(), 121.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let beta = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let s = random_matrix(&mut rng, 6, 8);
        let t = random_matrix(&mut rng, 6, 8);
        let (_, g) = squared_mmd_grad(&s, &t, 2, 0.0).unwrap();
        let h = 1e-3;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for idx in 0..s.data().len() {
            let mut up = s.clone();
            up.data_mut()[idx] += h;
            let mut down = s.clone();
            down.data_mut()[idx] -= h;
            let fd =
                beta * (squared_mmd(&up, &t, 2, 0.0).unwrap() - squared_mmd(&down, &t, 2, 0.0).unwrap()) / (2.0 * h);
            let an = beta * g.data()[idx];
            diff += (fd - an).powi(2);
            norm += an * an;
        }
        let rel = diff.sqrt() / norm.sqrt();
        assert!(rel < 1e-4, "relative error {rel:e}");
    }
}

fn matrix_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..6, 1usize..7).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(-3.0f64..3.0, n * d),
        )
            .prop_map(move |(a, b)| (Matrix::from_vec(n, d, a), Matrix::from_vec(n, d, b)))
    })
}

proptest! {
    #[test]
    fn nonnegative((s, t) in matrix_pair()) {
        prop_assert!(squared_mmd(&s, &t, 2, 0.0).unwrap() >= -1e-12);
    }

    #[test]
    fn symmetric((s, t) in matrix_pair()) {
        let a = squared_mmd(&s, &t, 2, 0.0).unwrap();
        let b = squared_mmd(&t, &s, 2, 0.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn identical_inputs_vanish((s, _) in matrix_pair()) {
        prop_assert!(squared_mmd(&s, &s, 2, 0.0).unwrap().abs() <= 1e-12 * s.data().iter().map(|x| x * x).sum::<f64>().powi(2).max(1.0));
    }

    #[test]
    fn column_permutation_invariant((s, t) in matrix_pair(), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..s.cols()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = squared_mmd(&s, &t, 2, 0.0).unwrap();
        let b = squared_mmd(&s.permute_columns(&perm), &t.permute_columns(&perm), 2, 0.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}
