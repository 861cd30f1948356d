use chrono::{Duration, NaiveDate};
use crisis_core::clustering::{distance_matrix, kmedoids};
use crisis_core::indicator::classify_periods;
use crisis_core::pipeline::{indicator_series, series_from_grids, window_copulas};
use crisis_core::regression::{fit_copula_model, indicator_from_model, predict_from_grid};
use crisis_core::{io, Corner, CornerSpec, FitOptions, PipelineParams, ReturnsTable, TrainingMeta};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Independent Gaussian returns with asset-specific drift and volatility.
fn market(days: usize, assets: usize, seed: u64) -> ReturnsTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
    let dates = (0..days).map(|i| start + Duration::days(i as i64)).collect();
    let names = (0..assets).map(|a| format!("A{a}")).collect();
    let draws: Vec<Normal<f64>> = (0..assets)
        .map(|a| {
            let vol = 0.01 + 0.002 * a as f64;
            Normal::new(0.3 * vol, vol).unwrap()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..days)
        .map(|_| draws.iter().map(|d| d.sample(&mut rng)).collect())
        .collect();
    ReturnsTable::from_rows(dates, names, &rows).unwrap()
}

fn small(samples: usize) -> PipelineParams {
    PipelineParams {
        window: 20,
        samples,
        ..Default::default()
    }
}

#[test]
fn end_to_end_files_round_trip() {
    let table = market(80, 5, 1);
    let params = small(4_000);
    let grids = window_copulas(&table, &params).unwrap();
    assert_eq!(grids.len(), 61);
    assert_eq!(grids[0].window_end, Some(table.dates()[19]));

    let tmp = tempfile::tempdir().unwrap();
    for (i, g) in grids.iter().enumerate() {
        let p = tmp.path().join(format!("{i}.csv"));
        io::write_copula(&p, g).unwrap();
        assert_eq!(&io::read_copula(&p).unwrap(), g);
    }

    let series = series_from_grids(&grids, params.band_fraction).unwrap();
    assert_eq!(series, indicator_series(&table, &params).unwrap());
    let text = io::indicator_to_string(&series);
    assert_eq!(io::parse_indicator(&text, tmp.path()).unwrap(), series);
    let periods = classify_periods(&series);
    assert_eq!(io::parse_periods(&io::periods_to_json(&periods)).unwrap(), periods);

    let dist = distance_matrix(&grids[..12]).unwrap();
    let text = io::distance_matrix_to_string(&dist);
    assert_eq!(io::parse_distance_matrix(&text, tmp.path()).unwrap(), dist);
    let clusters = kmedoids(&dist, 3, 0).unwrap();
    assert_eq!(clusters.cluster_sizes().iter().sum::<usize>(), 12);

    let corner = CornerSpec::new(Corner::LowerLeft, 2, 10).unwrap();
    let model = fit_copula_model(&grids, &corner, &FitOptions::default(), TrainingMeta::default())
        .unwrap();
    let path = tmp.path().join("model.txt");
    io::write_model(&path, &model).unwrap();
    let loaded = io::read_model(&path).unwrap();
    for g in &grids {
        assert_eq!(predict_from_grid(&model, g).unwrap(), predict_from_grid(&loaded, g).unwrap());
    }
    let estimated = indicator_from_model(&loaded, &table, &params).unwrap();
    assert_eq!(estimated.dates, series.dates);
}

#[test]
fn model_rejects_other_grid_size() {
    let table = market(40, 4, 2);
    let grids = window_copulas(&table, &small(2_000)).unwrap();
    let corner = CornerSpec::new(Corner::LowerLeft, 3, 10).unwrap();
    let model = fit_copula_model(&grids, &corner, &FitOptions::default(), TrainingMeta::default())
        .unwrap();
    let params = PipelineParams { grid: 8, ..small(2_000) };
    assert!(indicator_from_model(&model, &table, &params).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // A window's copula is a function of its own rows and the seed only.
    #[test]
    fn copula_of_a_window_ignores_later_rows(seed in 0u64..1000, cut in 25usize..45) {
        let table = market(45, 4, seed);
        let params = PipelineParams { seed, ..small(3_000) };
        let full = window_copulas(&table, &params).unwrap();
        let rows: Vec<Vec<f64>> = (0..cut).map(|t| table.row(t).to_vec()).collect();
        let head = ReturnsTable::from_rows(
            table.dates()[..cut].to_vec(),
            table.assets().to_vec(),
            &rows,
        )
        .unwrap();
        let prefix = window_copulas(&head, &params).unwrap();
        prop_assert_eq!(&full[..prefix.len()], &prefix[..]);
    }

    #[test]
    fn every_window_copula_has_uniform_marginals(seed in 0u64..1000) {
        let grids = window_copulas(&market(25, 6, seed), &small(5_000)).unwrap();
        for g in grids {
            for s in g.row_sums().into_iter().chain(g.col_sums()) {
                prop_assert!((s - 0.1).abs() < 1e-12);
            }
        }
    }
}
