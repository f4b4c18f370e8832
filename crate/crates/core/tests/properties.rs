mod common;

use proptest::prelude::*;
use tensorial::frames::{compose_transitions, transition_between, Basis};
use tensorial::index_lang::{parse, validate};
use tensorial::metric::kronecker;
use tensorial::{DenseTensor, Direction, Matrix, Metric, TransitionPair, Valency};

fn conditioned(m: &Matrix<f64>) -> bool {
    let Ok(inv) = m.inverse() else { return false };
    let norm = |a: &Matrix<f64>| (0..3).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    norm(m) * norm(&inv) < 50.0
}

fn matrix() -> impl Strategy<Value = Matrix<f64>> {
    prop::array::uniform9(-1.0f64..1.0).prop_map(|a| Matrix::from_fn(3, |i, j| a[3 * i + j]))
}

fn invertible() -> impl Strategy<Value = Matrix<f64>> {
    matrix().prop_filter("well conditioned", conditioned)
}

fn pair() -> impl Strategy<Value = TransitionPair<f64>> {
    invertible().prop_map(|m| TransitionPair::from_direct(m).unwrap())
}

fn tensor_of(valency: Valency) -> impl Strategy<Value = DenseTensor<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3usize.pow(valency.order() as u32))
        .prop_map(move |c| DenseTensor::from_components(valency, 3, c).unwrap())
}

fn tensor() -> impl Strategy<Value = DenseTensor<f64>> {
    (0usize..=2, 0usize..=2).prop_flat_map(|(r, s)| tensor_of(Valency::new(r, s)))
}

fn close(a: &DenseTensor<f64>, b: &DenseTensor<f64>, tol: f64) -> bool {
    a.max_abs_diff(b).unwrap() <= tol * a.max_abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(t in tensor(), p in pair()) {
        let back = t.transform(&p, Direction::OldToNew).unwrap().transform(&p, Direction::NewToOld).unwrap();
        prop_assert!(close(&back, &t, 1e-12));
    }

    #[test]
    fn transform_through_middle_basis(t in tensor(), p12 in pair(), p23 in pair()) {
        let p13 = p12.compose(&p23).unwrap();
        let two = t.transform(&p12, Direction::OldToNew).unwrap().transform(&p23, Direction::OldToNew).unwrap();
        prop_assert!(close(&two, &t.transform(&p13, Direction::OldToNew).unwrap(), 1e-12));
    }

    #[test]
    fn transform_is_linear(v in (0usize..=2, 0usize..=2), seed in any::<u64>(), p in pair(), alpha in -3.0f64..3.0) {
        let mut rng = common::rng(seed);
        let valency = Valency::new(v.0, v.1);
        let a = common::random_tensor(&mut rng, valency, 3);
        let b = common::random_tensor(&mut rng, valency, 3);
        let tr = |x: &DenseTensor<f64>| x.transform(&p, Direction::OldToNew).unwrap();
        prop_assert!(close(&tr(&a.add(&b).unwrap()), &tr(&a).add(&tr(&b)).unwrap(), 1e-12));
        prop_assert!(close(&tr(&a.scale(alpha)), &tr(&a).scale(alpha), 1e-12));
    }

    #[test]
    fn product_and_contraction_are_natural(x in tensor_of(Valency::OPERATOR), y in tensor_of(Valency::new(1, 1)), p in pair()) {
        let tr = |t: &DenseTensor<f64>| t.transform(&p, Direction::OldToNew).unwrap();
        let xy = x.tensor_product(&y).unwrap();
        prop_assert!(close(&tr(&xy), &tr(&x).tensor_product(&tr(&y)).unwrap(), 1e-12));
        for (u, l) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let c = xy.contract(u, l).unwrap();
            prop_assert!(close(&tr(&c), &tr(&xy).contract(u, l).unwrap(), 1e-11));
        }
    }

    #[test]
    fn composed_bases_agree(a in invertible(), b in invertible(), c in invertible()) {
        let (a, b, c) = (Basis::new(a).unwrap(), Basis::new(b).unwrap(), Basis::new(c).unwrap());
        let direct = transition_between(&a, &c).unwrap();
        let composed = compose_transitions(&transition_between(&a, &b).unwrap(), &transition_between(&b, &c).unwrap()).unwrap();
        prop_assert!(direct.direct().max_abs_diff(composed.direct()) <= 1e-9 * direct.direct().max_abs().max(1.0));
        prop_assert!(direct.inverse_matrix().max_abs_diff(composed.inverse_matrix()) <= 1e-9 * direct.inverse_matrix().max_abs().max(1.0));
    }

    #[test]
    fn dual_metric_is_contravariant(basis in invertible(), p in pair()) {
        let g = Metric::gram_from_basis(&Basis::new(basis).unwrap()).unwrap();
        let g_new = g.as_tensor().transform(&p, Direction::OldToNew).unwrap();
        let inv_of_new = DenseTensor::contravariant2(&g_new.as_matrix().unwrap().inverse().unwrap());
        let new_of_inv = g.dual_tensor().transform(&p, Direction::OldToNew).unwrap();
        prop_assert!(close(&inv_of_new, &new_of_inv, 1e-9));
    }

    #[test]
    fn gram_metrics_are_positive(basis in invertible(), x in prop::array::uniform3(-1.0f64..1.0)) {
        let g = Metric::gram_from_basis(&Basis::new(basis).unwrap()).unwrap();
        let q = g.dot(&x, &x).unwrap();
        prop_assert!(q >= -1e-12);
        if x.iter().any(|v| v.abs() > 1e-3) {
            prop_assert!(q > 0.0);
        }
    }

    #[test]
    fn raise_and_lower_are_inverse(basis in invertible(), t in tensor_of(Valency::new(1, 2)), slot in 1usize..=2) {
        let g = Metric::gram_from_basis(&Basis::new(basis).unwrap()).unwrap();
        let raised = g.raise_index(&t, slot).unwrap();
        prop_assert_eq!(raised.valency(), Valency::new(2, 1));
        let back = g.lower_index(&raised, 1).unwrap();
        // the lowered slot comes back as the first lower slot
        let expected = DenseTensor::from_fn(Valency::new(1, 2), 3, |u, l| {
            let mut lower = vec![l[1]];
            lower.insert(slot - 1, l[0]);
            t.get(u, &lower).unwrap()
        }).unwrap();
        prop_assert!(close(&back, &expected, 1e-10));
    }

    #[test]
    fn cross_product_is_orthogonal(basis in invertible(), x in prop::array::uniform3(-1.0f64..1.0), y in prop::array::uniform3(-1.0f64..1.0)) {
        let g = Metric::gram_from_basis(&Basis::new(basis).unwrap()).unwrap();
        let z = g.cross_product(&x, &y).unwrap();
        prop_assert!(g.dot(&z, &x).unwrap().abs() <= 1e-9);
        prop_assert!(g.dot(&z, &y).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn kronecker_is_invariant(p in pair()) {
        let d = kronecker::<f64>(3);
        prop_assert!(close(&d.transform(&p, Direction::OldToNew).unwrap(), &d, 1e-12));
    }

    #[test]
    fn verdict_ignores_factor_order(perm in Just(vec![0usize, 1, 2]).prop_shuffle(), which in 0usize..6) {
        let terms = [
            ["F^i_j", "x^j", "a_k"],
            ["x^i", "y^i", "z_i"],
            ["A^i_j", "B^j_k", "C^k_l"],
            ["g_{ij}", "x^i", "y^j"],
            ["E^{kij}", "u_i", "v_j"],
            ["A^i_i", "x^j", "b_j"],
        ];
        let lhs = ["y^i_k", "c", "D^i_l", "b", "w^k", "t"];
        let factors = terms[which];
        let original = format!("{} = {}", lhs[which], factors.join(" "));
        let shuffled = format!("{} = {}", lhs[which], perm.iter().map(|&i| factors[i]).collect::<Vec<_>>().join(" "));
        let a = validate(&parse(&original).unwrap());
        let b = validate(&parse(&shuffled).unwrap());
        prop_assert_eq!(a.verdict, b.verdict);
    }
}

#[test]
fn kronecker_contracts_to_dimension() {
    for n in 1..=5 {
        assert_eq!(kronecker::<f64>(n).contract(1, 1).unwrap().scalar_value().unwrap(), n as f64);
    }
}

#[test]
fn raw_kronecker_arrays_are_not_tensors() {
    let upper = DenseTensor::contravariant2(&tensorial::metric::kronecker_raw::<f64>(3));
    let lower = DenseTensor::bilinear(&tensorial::metric::kronecker_raw::<f64>(3));
    let shear = TransitionPair::from_direct(Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap()).unwrap();
    assert!(upper.transform(&shear, Direction::OldToNew).unwrap().max_abs_diff(&upper).unwrap() > 0.5);
    assert!(lower.transform(&shear, Direction::OldToNew).unwrap().max_abs_diff(&lower).unwrap() > 0.5);
}

#[test]
fn same_basis_gives_exact_identity() {
    let b = Basis::new(Matrix::from_rows(&[[1.0, 0.3, 0.0], [0.2, 1.0, 0.1], [0.0, 0.5, 2.0]]).unwrap()).unwrap();
    let p = transition_between(&b, &b).unwrap();
    assert_eq!(p.direct(), &Matrix::identity(3));
    assert_eq!(p.inverse_matrix(), &Matrix::identity(3));
}

#[test]
fn violations_point_into_source() {
    for text in ["c = x^i y^i", "x^i = a^i + b_i", "y^i = F^i_j x^k", "c = A^i_i x^i", "T^i_i = A^i_j B^j_i", "y^{ij} = x^i"] {
        let report = validate(&parse(text).unwrap());
        assert!(!report.is_valid(), "{text}");
        for v in &report.violations {
            assert!(v.end <= text.len() && v.start < v.end, "{text}: {v:?}");
            assert_eq!(&text[v.start..v.end], v.index, "{text}");
        }
    }
}

#[test]
fn single_precision_works() {
    let p = TransitionPair::<f32>::from_direct(Matrix::from_rows(&[[2.0f32, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap()).unwrap();
    let x = DenseTensor::<f32>::vector(&[1.0, 2.0, 3.0]);
    let back = x.transform(&p, Direction::OldToNew).unwrap().transform(&p, Direction::NewToOld).unwrap();
    assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
    let g = Metric::<f32>::identity(3);
    assert_eq!(g.cross_product(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0]);
}
