use fmm_lab::monotone::{
    amplitude_sweep, half_side_sweep, monotone_moment_bound_check, MonotoneRequest, TwoParamProblem,
};
use fmm_lab::{BoxHamiltonian, ComplexEnergy, DisorderDensity, Interval, SingleSitePotential};

/// `C_W` large enough for every point of both scaling sweeps.
fn calibrated_c_w(s: f64) -> f64 {
    let h = BoxHamiltonian::free(Interval::new(0, 0).unwrap());
    let (phi, psi) = ([1.0], [1.0]);
    let mut need: f64 = 0.0;
    for im in [0.1, 1.0] {
        let p = TwoParamProblem { h: &h, phi: &phi, psi: &psi, x: 0, y: 0, z: ComplexEnergy::new(0.0, im).unwrap(), s };
        need = need.max(half_side_sweep(&p, &[1.0, 4.0, 16.0], 1e-7).unwrap().c_w_required);
        need = need.max(amplitude_sweep(&p, &[0.5, 2.0, 8.0], 4.0, 1e-7).unwrap().c_w_required);
    }
    need
}

fn request(seed: u64, s: f64, c_w: f64) -> MonotoneRequest {
    MonotoneRequest {
        domain: Interval::centered(0, 20),
        x: -6,
        j: 6,
        z: ComplexEnergy::new(0.2, 0.05).unwrap(),
        s,
        n_samples: 2000,
        seed,
        c_w,
        m_max: 20,
    }
}

#[test]
fn block_average_below_constant_for_every_background() {
    let s = 0.5;
    let c_w = calibrated_c_w(s);
    for (u, radius) in [(vec![1.0, 1.0], 100.0), (vec![1.0, -1.0, 1.0], 20.0)] {
        let u = SingleSitePotential::new(&u).unwrap();
        let rho = DisorderDensity::uniform(radius).unwrap();
        for seed in 0..5 {
            let r = monotone_moment_bound_check(&u, &rho, &request(seed, s, c_w)).unwrap();
            assert!(r.estimate + 3.0 * r.std_error <= r.k, "{:?} seed {seed}: {r:?}", u.values());
        }
    }
}

#[test]
fn small_exponent_limit_keeps_ordering() {
    let u = SingleSitePotential::new(&[1.0, 1.0]).unwrap();
    let rho = DisorderDensity::uniform(100.0).unwrap();
    let mut prev_k = f64::INFINITY;
    for s in [0.4, 0.2, 0.1, 0.05] {
        let c_w = calibrated_c_w(s);
        let r = monotone_moment_bound_check(&u, &rho, &request(1, s, c_w)).unwrap();
        assert!(r.estimate <= r.k, "s={s}: {r:?}");
        assert!(r.estimate.is_finite() && r.k.is_finite());
        // with S = R the constant is 4/(1-s) (C_W/R)^s
        assert!((r.k - 4.0 / (1.0 - s) * (c_w / 100.0).powf(s)).abs() < 1e-12 * r.k);
        prev_k = prev_k.min(r.k);
    }
    assert!(prev_k > 0.0);
}
