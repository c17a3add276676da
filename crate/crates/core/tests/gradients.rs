use ega_core::diffcore::{finite_diff_grad, max_relative_error, Tape, Tensor, DEFAULT_STEP};
use ega_core::ega::{kd_loss, node_matrix};
use ega_core::gradcheck::{run_suite, GradcheckConfig, ABS_FLOOR, OPS};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn every_op_passes_over_twenty_random_instances() {
    let cfg = GradcheckConfig::default();
    assert!(cfg.instances >= 20);
    assert_eq!(cfg.batch_range, (3, 8));
    assert_eq!(cfg.dim_range, (4, 16));
    let reports = run_suite(&cfg).unwrap();
    assert_eq!(reports.len(), OPS.len());
    for r in &reports {
        assert!(
            r.passed && r.max_rel_error <= 1e-5,
            "{} at {:e}",
            r.op,
            r.max_rel_error
        );
        assert_eq!(r.instances, cfg.instances);
    }
}

#[test]
fn pinned_four_by_eight_grid_passes() {
    let cfg = GradcheckConfig {
        seed: 3,
        batch_range: (4, 4),
        dim_range: (8, 8),
        ..GradcheckConfig::default()
    };
    assert!(run_suite(&cfg).unwrap().iter().all(|r| r.passed));
}

fn randn(rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c).map(|_| StandardNormal.sample(rng)).collect(),
    )
    .unwrap()
}

// Independent of the suite: drive the tape by hand through the student side
// of a weighted node matrix and through KD at a non-default temperature.
#[test]
fn hand_built_checks_agree_with_finite_differences() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let t = randn(&mut rng, 5, 7);
        let s = randn(&mut rng, 5, 7);
        let w = randn(&mut rng, 5, 5);

        let f = |x: &Tensor| {
            let mut tape = Tape::new();
            let tv = tape.constant(t.clone());
            let xv = tape.param(x.clone());
            let wv = tape.constant(w.clone());
            let n = node_matrix(&mut tape, tv, xv)?;
            let p = tape.mul(n, wv)?;
            let out = tape.sum(p)?;
            let g = tape.backward(out)?;
            Ok((tape.value(out).item(), g.get(xv).unwrap().clone()))
        };
        let (_, analytic) = f(&s).unwrap();
        let numeric = finite_diff_grad(|x| f(x).map(|p| p.0), &s, DEFAULT_STEP).unwrap();
        assert!(max_relative_error(&analytic, &numeric, ABS_FLOOR) <= 1e-5);

        let zs = randn(&mut rng, 5, 4);
        let zt = randn(&mut rng, 5, 4);
        let g = |x: &Tensor| {
            let mut tape = Tape::new();
            let sv = tape.param(x.clone());
            let tv = tape.constant(zt.clone());
            let l = kd_loss(&mut tape, sv, tv, 2.5)?;
            let grads = tape.backward(l)?;
            Ok((tape.value(l).item(), grads.get(sv).unwrap().clone()))
        };
        let (_, analytic) = g(&zs).unwrap();
        let numeric = finite_diff_grad(|x| g(x).map(|p| p.0), &zs, DEFAULT_STEP).unwrap();
        assert!(max_relative_error(&analytic, &numeric, ABS_FLOOR) <= 1e-5);

        // the teacher side never receives gradient
        let mut tape = Tape::new();
        let sv = tape.constant(zs.clone());
        let tv = tape.param(zt.clone());
        let l = kd_loss(&mut tape, sv, tv, 2.5).unwrap();
        assert!(tape.backward(l).is_err());
    }
}
