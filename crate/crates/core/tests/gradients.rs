use epca::gradcheck::{gradcheck, gradcheck_at, run_suite, GradcheckOptions};
use epca::{Graph, Tensor};

#[test]
fn every_case_passes_over_ten_seeds() {
    let entries = run_suite(1e-4, 10).unwrap();
    let failures: Vec<_> = entries
        .iter()
        .filter(|e| !e.report.pass)
        .map(|e| format!("{}: {:?}", e.name, e.report))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn sum_gradient_is_ones() {
    let g = Graph::new();
    let x = g.leaf(Tensor::<f64>::uniform([2, 3, 4], -1.0, 1.0, &mut epca::rng::seeded(0)), true);
    g.backward(x.sum()).unwrap();
    assert!(x.grad().unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn square_gradient_is_twice_input() {
    let g = Graph::new();
    let t = Tensor::<f64>::uniform([5, 2], -1.0, 1.0, &mut epca::rng::seeded(1));
    let x = g.leaf(t.clone(), true);
    g.backward(x.mul(x).unwrap().sum()).unwrap();
    for (gv, xv) in x.grad().unwrap().data().iter().zip(t.data()) {
        assert_eq!(*gv, 2.0 * xv);
    }
}

#[test]
fn sigmoid_closed_form_derivative() {
    let t = Tensor::<f64>::uniform([20], -4.0, 4.0, &mut epca::rng::seeded(2));
    let g = Graph::new();
    let x = g.leaf(t.clone(), true);
    g.backward(x.sigmoid().sum()).unwrap();
    for (gv, xv) in x.grad().unwrap().data().iter().zip(t.data()) {
        let s = 1.0 / (1.0 + (-xv).exp());
        assert!((gv - s * (1.0 - s)).abs() < 1e-15);
    }
    assert!(gradcheck(|_, v| Ok(v[0].sigmoid()), &[vec![20]], 1e-6).unwrap().pass);
}

#[test]
fn non_finite_gradient_fails_without_panicking() {
    let t = Tensor::from_f64s([1], &[f64::MAX]).unwrap();
    let r = gradcheck_at(&|_: &Graph<f64>, v: &[epca::Var<f64>]| Ok(v[0].mul(v[0])?), &[t], &GradcheckOptions::default()).unwrap();
    assert!(!r.pass);
    assert!(r.note.unwrap().contains("non-finite"));
}

#[test]
fn kink_resampling_is_reported() {
    let opts = GradcheckOptions {
        kink_margin: 10.0,
        max_attempts: 3,
        ..Default::default()
    };
    let r = epca::gradcheck::gradcheck_with(|_, v| Ok(v[0].relu()), &[vec![3]], &opts).unwrap();
    assert_eq!(r.attempts, 3);
    assert!(r.note.is_some());
}
