use spotfit_core::{
    accuracy, estimate_batch, expected_error_ratio, fit_batch, fit_explicit5, fit_single,
    iteration_stats, simulate_batch, AccuracyStats, Amplitudes, BatchRequest, Engine, Error,
    FitConfig, FitResult, PixelGrid, ShapeParams, SimBatch, SimConfig, SpotBatch, StopReason,
    Summary, TruthRecord,
};

fn sim(count: usize, signal: f64, seed: u64) -> SimBatch {
    simulate_batch(&SimConfig {
        count,
        n_signal: signal,
        seed,
        ..SimConfig::default()
    })
    .unwrap()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let s = sim(3000, 400.0, 40);
    for engine in [Engine::Implicit3, Engine::Explicit5] {
        let run = |workers| {
            let mut req = BatchRequest::new(&s.images);
            req.engine = engine;
            req.workers = workers;
            fit_batch(&req).unwrap().results
        };
        let one = run(1);
        assert_eq!(one.len(), 3000);
        for workers in [2, 3, 8, 0] {
            assert_eq!(run(workers), one, "{engine} with {workers} workers");
        }
    }
}

#[test]
fn batch_matches_sequential_fits() {
    let s = sim(200, 400.0, 41);
    let cfg = FitConfig::default();
    let inits = estimate_batch(&s.images, &cfg);
    let mut req = BatchRequest::new(&s.images);
    let auto = fit_batch(&req).unwrap().results;
    req.inits = Some(&inits);
    assert_eq!(fit_batch(&req).unwrap().results, auto);
    req.engine = Engine::Explicit5;
    let explicit = fit_batch(&req).unwrap().results;
    for i in 0..s.images.len() {
        let img = s.images.get(i);
        assert_eq!(auto[i], fit_single(img, inits[i].shape, &cfg).unwrap());
        assert_eq!(explicit[i], fit_explicit5(img, inits[i].shape, inits[i].amps, &cfg).unwrap());
    }

    let single = SpotBatch::from_images(s.images.grid(), [&s.images.get(0).to_owned()]).unwrap();
    assert_eq!(fit_batch(&BatchRequest::new(&single)).unwrap().results, vec![auto[0]]);
}

#[test]
fn bad_images_are_flagged_not_fatal() {
    let s = sim(5, 400.0, 42);
    let mut pixels = s.images.pixels().to_vec();
    pixels[81 * 2 + 40] = f32::INFINITY;
    let batch = SpotBatch::new(s.images.grid(), pixels).unwrap();
    let out = fit_batch(&BatchRequest::new(&batch)).unwrap().results;
    assert!(out[2].invalid_input && out[2].stop == StopReason::NotConverged);
    assert!(out.iter().enumerate().all(|(i, r)| r.invalid_input == (i == 2)));
}

#[test]
fn mismatched_inits_are_rejected() {
    let s = sim(5, 400.0, 43);
    let inits = estimate_batch(&s.images, &FitConfig::default());
    let mut req = BatchRequest::new(&s.images);
    req.inits = Some(&inits[..4]);
    assert!(matches!(fit_batch(&req), Err(Error::MismatchedLengths { .. })));
}

#[test]
fn empty_batch() {
    let batch = SpotBatch::empty(PixelGrid::square(9).unwrap());
    assert!(fit_batch(&BatchRequest::new(&batch)).unwrap().results.is_empty());
}

#[test]
fn implicit_engine_needs_fewer_iterations() {
    let s = sim(5000, 1600.0, 44);
    let cfg = FitConfig::default();
    let inits = estimate_batch(&s.images, &cfg);
    let run = |engine| {
        let mut req = BatchRequest::new(&s.images);
        req.inits = Some(&inits);
        req.engine = engine;
        iteration_stats(&fit_batch(&req).unwrap().results, cfg.max_iterations)
    };
    let (imp, exp) = (run(Engine::Implicit3), run(Engine::Explicit5));
    assert!(imp.mean() < exp.mean(), "{} vs {}", imp.mean(), exp.mean());
    let (ci, ce) = (imp.cdf(), exp.cdf());
    // Explicit fits run longer: their distribution never leads the implicit one.
    for k in 0..ci.len() {
        assert!(ci[k] + 1e-12 >= ce[k], "iteration {k}: {} vs {}", ci[k], ce[k]);
    }
}

fn result_at(shape: ShapeParams, stop: StopReason, iterations: u32) -> FitResult {
    FitResult {
        shape,
        amps: Amplitudes::new(1.0, 0.0),
        stop,
        iterations_used: iterations,
        normalized_chi2: 1.0,
        no_improvement: false,
        invalid_input: false,
    }
}

fn truths(n: usize) -> Vec<TruthRecord> {
    (0..n)
        .map(|i| TruthRecord {
            index: i as u64,
            shape: ShapeParams::new(4.0 + 0.01 * i as f32, 4.0, 1.0 + 0.1 * (i % 7) as f32),
            amps: Amplitudes::new(50.0, 0.5),
        })
        .collect()
}

#[test]
fn exact_fits_give_zero_errors() {
    let t = truths(10);
    let res: Vec<FitResult> = t.iter().map(|t| result_at(t.shape, StopReason::MinDelta, 4)).collect();
    let stats = accuracy(&res, &t).unwrap();
    assert_eq!(stats.position, Summary::default());
    assert_eq!(stats.sigma, Summary::default());
    assert_eq!((stats.fits_used, stats.fits_excluded), (10, 0));
}

#[test]
fn statistics_match_direct_computation() {
    let t = truths(9);
    let res: Vec<FitResult> = t
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let d = 0.01 * (i as f32 + 1.0);
            let shape = ShapeParams::new(t.shape.x + d, t.shape.y - 2.0 * d, -(t.shape.sigma + d));
            result_at(shape, StopReason::MinDelta, 5)
        })
        .collect();
    let stats = accuracy(&res, &t).unwrap();
    let mut pos: Vec<f64> = Vec::new();
    let mut sig: Vec<f64> = Vec::new();
    for (r, t) in res.iter().zip(&t) {
        let s = t.shape.sigma as f64;
        pos.push((r.shape.x as f64 - t.shape.x as f64).abs() / s);
        pos.push((r.shape.y as f64 - t.shape.y as f64).abs() / s);
        sig.push(((r.shape.sigma as f64).abs() - s).abs() / s);
    }
    for (summary, v) in [(stats.position, &mut pos), (stats.sigma, &mut sig)] {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let median = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
        assert!((summary.mean - mean).abs() < 1e-12);
        assert!((summary.std - std).abs() < 1e-12);
        assert_eq!(summary.median, median);
    }
}

#[test]
fn statistics_ignore_order_and_exclude_failures() {
    let s = sim(500, 400.0, 45);
    let res = fit_batch(&BatchRequest::new(&s.images)).unwrap().results;
    let base = accuracy(&res, &s.truths).unwrap();

    let mut order: Vec<usize> = (0..res.len()).collect();
    order.reverse();
    order.swap(3, 400);
    let r2: Vec<FitResult> = order.iter().map(|&i| res[i]).collect();
    let t2: Vec<TruthRecord> = order.iter().map(|&i| s.truths[i]).collect();
    let permuted = accuracy(&r2, &t2).unwrap();
    assert!((permuted.position.mean - base.position.mean).abs() < 1e-12);
    assert_eq!(permuted.position.median, base.position.median);
    assert_eq!(permuted.sigma.median, base.sigma.median);

    let mut failed = res.clone();
    failed.push(result_at(ShapeParams::new(0.0, 0.0, 9.0), StopReason::NotConverged, 3));
    let mut t3 = s.truths.clone();
    t3.push(s.truths[0]);
    let with_failure = accuracy(&failed, &t3).unwrap();
    assert_eq!(with_failure.fits_excluded, base.fits_excluded + 1);
    assert_eq!(with_failure.position, base.position);

    assert!(matches!(accuracy(&res, &s.truths[1..]), Err(Error::MismatchedLengths { .. })));
}

#[test]
fn shot_noise_ratio_arithmetic() {
    let stats = AccuracyStats {
        position: Summary {
            median: 0.0,
            mean: 1.0 / 40.0,
            std: 0.0,
        },
        ..AccuracyStats::default()
    };
    assert!((expected_error_ratio(&stats, 1600.0) - 1.0).abs() < 1e-12);
}

#[test]
fn histogram_tallies() {
    let p = ShapeParams::new(4.0, 4.0, 1.0);
    let all_five: Vec<FitResult> = (0..10).map(|_| result_at(p, StopReason::MinDelta, 5)).collect();
    let h = iteration_stats(&all_five, 20);
    assert_eq!(h.bins.len(), 21);
    assert_eq!(h.bins[5], 10);
    assert_eq!(h.total(), 10);
    assert_eq!(h.mode(), Some(5));
    assert_eq!(h.stops.get(&StopReason::MinDelta), Some(&10));

    let s = sim(1000, 1600.0, 46);
    let res = fit_batch(&BatchRequest::new(&s.images)).unwrap().results;
    let h = iteration_stats(&res, 20);
    assert_eq!(h.total(), 1000);
    assert_eq!(h.stops.values().sum::<u64>(), 1000);
    let cdf = h.cdf();
    assert!(cdf.windows(2).all(|w| w[0] <= w[1]) && (cdf[20] - 1.0).abs() < 1e-12);
}
