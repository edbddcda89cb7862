use proptest::prelude::*;
use spotfit_cli::params::{read_fits, read_truth, write_fits, write_truth, FitRecord};
use spotfit_cli::spb1;
use spotfit_core::{Amplitudes, FitResult, PixelGrid, ShapeParams, SpotBatch, StopReason, TruthRecord};

fn any_f32() -> impl Strategy<Value = f32> {
    // Every bit pattern, NaN payloads included.
    any::<u32>().prop_map(f32::from_bits)
}

fn batch_strategy() -> impl Strategy<Value = SpotBatch> {
    (1usize..=32, 1usize..=32, 0usize..6)
        .prop_filter("at most 1024 pixels", |(w, h, _)| w * h <= 1024)
        .prop_flat_map(|(w, h, count)| {
            prop::collection::vec(any_f32(), w * h * count)
                .prop_map(move |px| SpotBatch::new(PixelGrid::new(w, h).unwrap(), px).unwrap())
        })
}

fn finite_or_special() -> impl Strategy<Value = f32> {
    prop_oneof![
        8 => any::<f32>().prop_filter("finite", |v| v.is_finite()),
        1 => Just(f32::NAN),
        1 => Just(f32::INFINITY),
        1 => Just(f32::NEG_INFINITY),
        1 => Just(-0.0f32),
        1 => Just(f32::MIN_POSITIVE / 4.0),
    ]
}

fn result_strategy() -> impl Strategy<Value = FitResult> {
    (
        prop::array::uniform6(finite_or_special()),
        prop::sample::select(StopReason::ALL.to_vec()),
        0u32..=u32::MAX,
    )
        .prop_map(|(v, stop, iterations_used)| FitResult {
            shape: ShapeParams::new(v[0], v[1], v[2]),
            amps: Amplitudes::new(v[3], v[4]),
            stop,
            iterations_used,
            normalized_chi2: v[5],
            no_improvement: false,
            invalid_input: v[0].is_nan() && iterations_used == 0,
        })
}

fn same_bits(a: f32, b: f32) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn same_result(a: &FitResult, b: &FitResult) -> bool {
    let fa = [a.shape.x, a.shape.y, a.shape.sigma, a.amps.alpha, a.amps.beta, a.normalized_chi2];
    let fb = [b.shape.x, b.shape.y, b.shape.sigma, b.amps.alpha, b.amps.beta, b.normalized_chi2];
    fa.iter().zip(&fb).all(|(x, y)| same_bits(*x, *y))
        && a.stop == b.stop
        && a.iterations_used == b.iterations_used
        && a.no_improvement == b.no_improvement
        && a.invalid_input == b.invalid_input
}

proptest! {
    #[test]
    fn spb1_round_trip_is_bit_exact(batch in batch_strategy()) {
        let bytes = spb1::encode(&batch).unwrap();
        prop_assert_eq!(bytes.len(), spb1::HEADER_LEN + 4 * batch.pixels().len());
        let back = spb1::decode(&bytes).unwrap();
        prop_assert_eq!(back.grid(), batch.grid());
        let bits = |b: &SpotBatch| b.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&batch));
    }

    #[test]
    fn spb1_rejects_truncation(batch in batch_strategy(), cut in 1usize..64) {
        let bytes = spb1::encode(&batch).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(spb1::decode(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn fit_csv_round_trip(results in prop::collection::vec(result_strategy(), 0..40), gaps in prop::collection::vec(1u64..5, 40)) {
        let mut index = 0;
        let records: Vec<FitRecord> = results
            .iter()
            .zip(&gaps)
            .map(|(&result, &gap)| {
                index += gap;
                FitRecord { index, result }
            })
            .collect();
        let mut buf = Vec::new();
        write_fits(&mut buf, &records).unwrap();
        let back = read_fits(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.index, b.index);
            prop_assert!(same_result(&a.result, &b.result), "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn truth_csv_round_trip(values in prop::collection::vec(prop::array::uniform5(finite_or_special()), 0..40)) {
        let truths: Vec<TruthRecord> = values
            .iter()
            .enumerate()
            .map(|(i, v)| TruthRecord {
                index: i as u64,
                shape: ShapeParams::new(v[0], v[1], v[2]),
                amps: Amplitudes::new(v[3], v[4]),
            })
            .collect();
        let mut buf = Vec::new();
        write_truth(&mut buf, &truths).unwrap();
        let back = read_truth(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), truths.len());
        for (a, b) in back.iter().zip(&truths) {
            prop_assert_eq!(a.index, b.index);
            let fa = [a.shape.x, a.shape.y, a.shape.sigma, a.amps.alpha, a.amps.beta];
            let fb = [b.shape.x, b.shape.y, b.shape.sigma, b.amps.alpha, b.amps.beta];
            prop_assert!(fa.iter().zip(&fb).all(|(x, y)| same_bits(*x, *y)), "{:?} vs {:?}", a, b);
        }
    }
}

#[test]
fn floats_use_shortest_form() {
    let rec = FitRecord {
        index: 3,
        result: FitResult {
            shape: ShapeParams::new(0.1, 4.25, 1e-30),
            amps: Amplitudes::new(1600.0, -0.0),
            stop: StopReason::MinStep,
            iterations_used: 4,
            normalized_chi2: f32::NAN,
            no_improvement: false,
            invalid_input: false,
        },
    };
    let mut buf = Vec::new();
    write_fits(&mut buf, &[rec]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "3,0.1,4.25,1e-30,1600.0,-0.0,MinStep,4,NaN");
}
