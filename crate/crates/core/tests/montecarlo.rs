use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rxalign::montecarlo::{estimate_ergodic, estimate_ia_sweep, McMethod, McOpts};
use rxalign::{
    draw_channels, mi_optimum, mi_projection, shin_lee_rate, solve_alternating, theorem2_bound, NetworkDims,
    PowerProfile, SolverOpts,
};

fn opts(trials: usize, seed: u64) -> McOpts {
    McOpts {
        trials,
        seed,
        ..McOpts::default()
    }
}

#[test]
fn optimum_receiver_dominates_projection_per_draw() {
    // the projection rate ignores residual interference, so the comparison
    // needs a residual far below 1/SNR
    let tight = SolverOpts {
        tol: 1e-15,
        ..SolverOpts::default()
    };
    let dims = NetworkDims::symmetric(3, 3, 3, 1, 2).unwrap();
    let mut checked = 0;
    for seed in 0..30 {
        let ch = draw_channels(&dims, seed).unwrap();
        let sol = solve_alternating(&ch, &dims, &tight).unwrap();
        if !sol.converged {
            continue;
        }
        for snr in [0.0, 10.0, 30.0] {
            let p = PowerProfile::from_snr_db(3, snr);
            for k in 0..3 {
                let opt = mi_optimum(&ch, &sol, &p, k).unwrap();
                let proj = mi_projection(&ch, &sol, &p, k).unwrap();
                assert!(opt >= proj - 1e-9, "seed {seed} user {k}: {opt} < {proj}");
                assert!(proj > 0.0);
            }
        }
        checked += 1;
    }
    assert!(checked >= 27);
}

#[test]
fn paired_sweep_means_are_ordered() {
    let dims = NetworkDims::symmetric(3, 3, 3, 1, 2).unwrap();
    let profiles: Vec<PowerProfile> = [0.0, 10.0, 20.0, 30.0]
        .iter()
        .map(|&s| PowerProfile::from_snr_db(3, s))
        .collect();
    let sweep = estimate_ia_sweep(&dims, &profiles, &opts(60, 3)).unwrap();
    for (o, p) in sweep.optimum.iter().zip(&sweep.projection) {
        assert!(o.sum.mean >= p.sum.mean - 1e-9);
        assert_eq!(o.sum.trials_used, 60);
        assert_eq!(o.sum.trials_discarded, p.sum.trials_discarded);
    }
    // rates grow with SNR
    for w in sweep.optimum.windows(2) {
        assert!(w[1].sum.mean > w[0].sum.mean);
    }
}

#[test]
fn confidence_interval_shrinks_with_trials() {
    let dims = NetworkDims::symmetric(3, 2, 2, 1, 1).unwrap();
    let p = PowerProfile::from_snr_db(3, 10.0);
    let small = estimate_ergodic(McMethod::WfGame, &dims, &p, &opts(250, 9)).unwrap();
    let large = estimate_ergodic(McMethod::WfGame, &dims, &p, &opts(1000, 9)).unwrap();
    let ratio = small.sum.ci_halfwidth / large.sum.ci_halfwidth;
    assert!((1.6..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dims = NetworkDims::symmetric(3, 3, 3, 1, 2).unwrap();
    let p = PowerProfile::from_snr_db(3, 10.0);
    let run = |threads: usize, method: McMethod, trials: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_ergodic(method, &dims, &p, &opts(trials, 17)).unwrap())
    };
    for method in [McMethod::IaOptimum, McMethod::IaProjection, McMethod::WfGame] {
        assert_eq!(run(1, method, 24), run(3, method, 24));
        assert_eq!(run(1, method, 1), run(2, method, 1));
    }
}

#[test]
fn scalar_closed_form_matches_direct_sampling() {
    // E[log2(1 + rho |h|^2)] with h ~ CN(0, 1)
    let rho = 10.0;
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            (1.0 + rho * 0.5 * (re * re + im * im)).log2()
        })
        .collect();
    let est = rxalign::Estimate::from_samples(&samples, 0, 5);
    let exact = shin_lee_rate(1, 1, rho).unwrap();
    assert!((est.mean - exact).abs() <= est.ci_halfwidth, "{} vs {exact} +- {}", est.mean, est.ci_halfwidth);
}

#[test]
fn interference_bound_stays_below_simulation() {
    let dims = NetworkDims::symmetric(3, 3, 3, 1, 2).unwrap();
    let snrs = [0.0, 10.0, 20.0];
    let profiles: Vec<PowerProfile> = snrs.iter().map(|&s| PowerProfile::from_snr_db(3, s)).collect();
    let sweep = estimate_ia_sweep(&dims, &profiles, &opts(400, 21)).unwrap();
    for (p, est) in profiles.iter().zip(&sweep.optimum) {
        let bound = theorem2_bound(&dims, p, 0).unwrap();
        assert!(bound <= est.user_mean.mean + 3.0 * est.user_mean.ci_halfwidth);
    }
}
