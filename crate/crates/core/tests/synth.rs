use chrono::{Datelike, NaiveDate};
use platelet_core::additive::Holiday;
use platelet_core::data::{aggregate_daily, ingest_granular, parse_received, DateRange};
use platelet_core::synth::{generate, generate_latent, plant_report, write_synth, SynthConfig, PLANTED_LABS};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn short_config(seed: u64) -> SynthConfig {
    SynthConfig {
        range: DateRange::new(NaiveDate::from_ymd_opt(2017, 11, 1).unwrap(), NaiveDate::from_ymd_opt(2018, 1, 31).unwrap())
            .unwrap(),
        seed,
        ..Default::default()
    }
}

struct Calibration {
    mean: f64,
    sd: f64,
    gap: f64,
    received_sd: f64,
    jan: f64,
    jul: f64,
}

fn calibration(seed: u64) -> Calibration {
    let truth = generate_latent(&SynthConfig { seed, ..Default::default() }).unwrap();
    let demand: Vec<f64> = truth.days.iter().map(|d| d.demand as f64).collect();
    let received: Vec<f64> = truth.days.iter().map(|d| d.received as f64).collect();
    let pick = |f: &dyn Fn(NaiveDate) -> bool| {
        mean(&truth.days.iter().filter(|d| f(d.date)).map(|d| d.demand as f64).collect::<Vec<_>>())
    };
    let weekend = |d: NaiveDate| d.weekday().num_days_from_monday() >= 5;
    Calibration {
        mean: mean(&demand),
        sd: sd(&demand),
        gap: pick(&|d| !weekend(d)) - pick(&weekend),
        received_sd: sd(&received),
        jan: pick(&|d| d.month() == 1),
        jul: pick(&|d| d.month() == 7),
    }
}

#[test]
fn nine_year_moments_calibrated() {
    let runs: Vec<Calibration> = (0..100).map(calibration).collect();
    let count = |f: &dyn Fn(&Calibration) -> bool| runs.iter().filter(|c| f(c)).count();
    assert!(count(&|c| (c.mean - 17.90).abs() <= 0.5) >= 95);
    assert!(count(&|c| (c.sd - 7.05).abs() <= 0.7) >= 95);
    assert!(count(&|c| (7.0..=11.0).contains(&c.gap)) >= 95);
    assert!(count(&|c| (c.received_sd - 9.33).abs() <= 1.0) >= 95);
    assert!(count(&|c| (c.jan - 17.35).abs() <= 1.0) >= 95, "jan {:?}", runs.iter().map(|c| c.jan).collect::<Vec<_>>());
    assert!(count(&|c| (c.jul - 20.38).abs() <= 1.0) >= 95, "jul {:?}", runs.iter().map(|c| c.jul).collect::<Vec<_>>());
}

#[test]
fn level_rises_over_the_range() {
    let truth = generate_latent(&SynthConfig { seed: 3, ..Default::default() }).unwrap();
    let first: Vec<f64> = truth.days.iter().filter(|d| d.date.year() == 2010).map(|d| d.demand as f64).collect();
    let last: Vec<f64> = truth.days.iter().filter(|d| d.date.year() == 2018).map(|d| d.demand as f64).collect();
    assert!(mean(&last) > mean(&first));
}

#[test]
fn same_seed_same_bytes() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    write_synth(&generate(&short_config(4)).unwrap(), dir_a.path()).unwrap();
    write_synth(&generate(&short_config(4)).unwrap(), dir_b.path()).unwrap();
    for f in ["granular.csv", "received.csv", "truth.json"] {
        let a = std::fs::read(dir_a.path().join(f)).unwrap();
        let b = std::fs::read(dir_b.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let other = generate(&short_config(5)).unwrap();
    assert_ne!(other.truth, generate(&short_config(4)).unwrap().truth);
}

#[test]
fn records_reaggregate_to_logged_days() {
    let cfg = short_config(6);
    let data = generate(&cfg).unwrap();
    let agg = aggregate_daily(&data.records, &data.received, cfg.range).unwrap();
    assert_eq!(agg, data.daily);
    for (a, t) in agg.iter().zip(&data.truth.days) {
        assert_eq!(a.units_transfused, t.demand);
        assert_eq!(a.units_received, t.received);
        assert!(a.abnormal_counts.iter().all(|c| *c <= a.patients));
    }

    // Through the on-disk formats as well.
    let dir = tempfile::tempdir().unwrap();
    write_synth(&data, dir.path()).unwrap();
    let records = ingest_granular(std::fs::File::open(dir.path().join("granular.csv")).unwrap())
        .unwrap()
        .into_strict()
        .unwrap();
    let received = parse_received(std::fs::File::open(dir.path().join("received.csv")).unwrap()).unwrap();
    assert_eq!(aggregate_daily(&records, &received, cfg.range).unwrap(), data.daily);
}

#[test]
fn components_sum_to_intensity() {
    let truth = generate_latent(&short_config(7)).unwrap();
    for d in &truth.days {
        assert!((d.component_sum() - d.intensity).abs() < 1e-9);
        assert_eq!(d.demand, d.intensity.round().max(0.0) as u32);
    }
}

#[test]
fn plant_report_passthrough() {
    let cfg = short_config(8);
    let truth = generate_latent(&cfg).unwrap();
    let report = plant_report(&truth);
    let c = &cfg.covariate_model;
    assert_eq!(report.coefficients["abnormal_plt"], c.plt);
    assert_eq!(report.coefficients["abnormal_hb"], c.hb);
    assert_eq!(report.coefficients["abnormal_redcellwidth"], c.redcellwidth);
    assert_eq!(report.coefficients.len(), PLANTED_LABS.len());
    assert_eq!(report.yesterday_carry, c.yesterday);
    for d in &report.days {
        let is_holiday = Holiday::ALL.iter().any(|h| h.date(d.date.year()) == d.date);
        if !is_holiday {
            assert_eq!(d.holiday, 0.0);
        }
    }
    let xmas = report.days.iter().find(|d| d.date == NaiveDate::from_ymd_opt(2017, 12, 25).unwrap()).unwrap();
    assert_eq!(xmas.holiday, cfg.holiday_effects[&Holiday::Christmas]);
}

#[test]
fn config_roundtrips_through_toml() {
    let cfg = SynthConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    let back: SynthConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: SynthConfig = toml::from_str("seed = 9\noverall_mean = 20.0").unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.dow_means, cfg.dow_means);
}
