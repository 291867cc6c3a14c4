use super::*;
use crate::bounding::BoundingDevice;
use crate::procedures::Direction;

fn fixed(m: usize, m0: usize, beta: f64, noise: NoiseModel) -> ExperimentConfig {
    ExperimentConfig::fixed(m, m0, beta, noise).unwrap()
}

#[test]
fn fdp_and_fnr_examples() {
    let h = [true, true, false, true];
    assert_eq!(fdp_of(&[], &h), 0.0);
    assert_eq!(fdp_of(&[2], &h), 1.0);
    assert!((fdp_of(&[0, 1, 2], &h) - 1.0 / 3.0).abs() < 1e-16);
    assert_eq!(fnr_of(&[0, 1, 2, 3], &h), 0.0);
    assert_eq!(fnr_of(&[], &h), 0.75);
    // H = (0,1,1,0), reject {2}: accepted {0,1,3} hold one false null
    let h = [false, true, true, false];
    assert!((fnr_of(&[2], &h) - 1.0 / 3.0).abs() < 1e-16);
}

#[test]
fn type7_quantiles() {
    let x = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(type7_quantile(&x, 0.5), 2.5);
    assert_eq!(type7_quantile(&x, 0.0), 1.0);
    assert_eq!(type7_quantile(&x, 1.0), 4.0);
    assert!((type7_quantile(&x, 0.9) - 3.7).abs() < 1e-15);
    assert_eq!(type7_quantile(&[0.3], 0.7), 0.3);
}

#[test]
fn campaigns_are_deterministic_and_schedule_independent() {
    let config = fixed(40, 30, 2.0, NoiseModel::gauss_equi(0.3).unwrap());
    let spec = ProcedureSpec::new(ProcedureId::Lr, 0.2, 0.05);
    let base = CampaignOptions { kfwer_k: Some(2), ..Default::default() };
    let a = run_campaign(&spec, &config, 1000, 11, &base).unwrap();
    let b = run_campaign(&spec, &config, 1000, 11, &base).unwrap();
    assert_eq!(a, b);
    for workers in [1, 4, 8] {
        let opts = CampaignOptions { workers: Some(workers), ..base.clone() };
        let c = run_campaign(&spec, &config, 1000, 11, &opts).unwrap();
        assert_eq!(a.to_json().unwrap(), c.to_json().unwrap(), "workers = {workers}");
    }
    let other = run_campaign(&spec, &config, 1000, 12, &base).unwrap();
    assert_ne!(a.fdp_samples, other.fdp_samples);
}

#[test]
fn report_contents() {
    let config = fixed(30, 20, 2.5, NoiseModel::Independent);
    let spec = ProcedureSpec::new(ProcedureId::Bh, 0.2, 0.05);
    let r = run_campaign(&spec, &config, 700, 3, &CampaignOptions::default()).unwrap();
    let samples = r.fdp_samples.as_ref().unwrap();
    assert_eq!(samples.len(), 700);
    for q in &r.fdp_quantiles {
        assert_eq!(q.value, type7_quantile(samples, q.level));
    }
    for w in r.fdp_quantiles.windows(2) {
        assert!(w[0].value <= w[1].value);
    }
    assert_eq!(r.fdp_histogram.iter().sum::<u64>(), 700);
    let exceed = samples.iter().filter(|&&x| x > 0.2).count();
    assert_eq!(r.exceedance, Estimate::binary(exceed, 700));
    let mean = samples.iter().sum::<f64>() / 700.0;
    assert!((r.mean_fdp.estimate - mean).abs() < 1e-14);
    let no_samples = CampaignOptions { retain_samples: Some(false), ..Default::default() };
    let r2 = run_campaign(&spec, &config, 700, 3, &no_samples).unwrap();
    assert!(r2.fdp_samples.is_none());
    assert_eq!(r2.fdp_quantiles, r.fdp_quantiles);

    let back = SimulationReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(!text.contains('\r'));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    let mut dump = Vec::new();
    r.write_fdp_samples(&mut dump).unwrap();
    assert_eq!(String::from_utf8(dump).unwrap().lines().count(), 701);
}

#[test]
fn argument_errors() {
    let config = fixed(10, 5, 2.0, NoiseModel::Independent);
    let spec = ProcedureSpec::new(ProcedureId::Lr, 0.2, 0.05);
    assert!(matches!(run_campaign(&spec, &config, 99, 0, &CampaignOptions::default()), Err(Error::Domain(_))));
    let general = ExperimentConfig::fixed(
        4,
        2,
        2.0,
        NoiseModel::GaussGeneral(crate::models::GaussGeneral::equicorrelated(4, 0.2).unwrap()),
    )
    .unwrap();
    let rw = ProcedureSpec::new(ProcedureId::RwAsymp, 0.2, 0.05);
    assert!(matches!(run_campaign(&rw, &general, 100, 0, &CampaignOptions::default()), Err(Error::Config(_))));
}

#[test]
fn empty_rejections_never_exceed() {
    let config = fixed(50, 25, 1.0, NoiseModel::Independent);
    let spec = ProcedureSpec::new(ProcedureId::AugBonf, 0.2, 1e-300);
    let r = run_campaign(&spec, &config, 500, 1, &CampaignOptions::default()).unwrap();
    assert_eq!(r.mean_rejections, 0.0);
    assert_eq!(r.exceedance.estimate, 0.0);
    assert_eq!(r.fnr.estimate, 0.5);
}

#[test]
fn bh_fdr_identity_small() {
    let config = fixed(100, 80, 3.0, NoiseModel::Independent);
    let spec = ProcedureSpec::new(ProcedureId::Bh, 0.2, 0.05);
    let r = run_campaign(&spec, &config, 4000, 5, &CampaignOptions::default()).unwrap();
    assert!((r.mean_fdp.estimate - 0.16).abs() <= 3.0 * r.mean_fdp.se, "{:?}", r.mean_fdp);
}

#[test]
fn lr_full_null_guarantee() {
    let config = fixed(50, 50, 0.0, NoiseModel::Independent);
    let spec = ProcedureSpec::new(ProcedureId::Lr, 0.2, 0.05);
    let r = run_campaign(&spec, &config, 5000, 8, &CampaignOptions::default()).unwrap();
    assert!(r.exceedance.within_upper(0.05, 3.0), "{:?}", r.exceedance);
}

#[test]
fn kfwer_examples() {
    let m = 40;
    let config = fixed(m, 30, 2.0, NoiseModel::Independent);
    let bonf = KfwerRule::Fixed(0.05 / m as f64);
    let e = estimate_kfwer(bonf, &config, 1, 20_000, 4, None).unwrap();
    assert!(e.within_upper(0.05, 3.0), "{e:?}");
    assert_eq!(estimate_kfwer(KfwerRule::Fixed(0.9), &config, 31, 200, 4, None).unwrap().estimate, 0.0);

    let model = NoiseModel::gauss_equi(0.3).unwrap();
    let config = fixed(30, 15, 1.5, model.clone());
    let device = BoundingDevice::exact(30, &model).unwrap();
    let want = device.evaluate(0.05, 3, 15).unwrap();
    let e = estimate_kfwer(KfwerRule::Fixed(0.05), &config, 3, 50_000, 6, None).unwrap();
    assert!((e.estimate - want).abs() <= 3.0 * e.se, "{e:?} vs {want}");

    let spec = ProcedureSpec::new(ProcedureId::Lr, 0.2, 0.05).with_direction(Direction::StepDown);
    let proc = PreparedProcedure::prepare(&spec, &model, 30).unwrap();
    let a = estimate_kfwer(KfwerRule::Procedure(&proc), &config, 1, 300, 1, Some(1)).unwrap();
    let b = estimate_kfwer(KfwerRule::Procedure(&proc), &config, 1, 300, 1, Some(3)).unwrap();
    assert_eq!(a, b);
}

fn study(procs: &[ProcedureId], grid: Vec<PowerPoint>, n_reps: usize) -> PowerStudy {
    PowerStudy {
        procedures: procs.iter().map(|&id| ProcedureSpec::new(id, 0.2, 0.05)).collect(),
        grid,
        m: 50,
        n_reps,
        master_seed: 9,
        workers: None,
    }
}

#[test]
fn power_sweep_contracts() {
    let point = PowerPoint { beta: 2.0, rho: 0.0, pi0: 0.8 };
    let rows = power_sweep(&study(&[ProcedureId::Lr], vec![point], 300)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].ratio_to_lr, Some(Estimate { estimate: 1.0, se: 0.0 }));

    let s = study(&[ProcedureId::Bonf], vec![point], 300);
    assert!(s.with_lr().unwrap().1);
    let rows = power_sweep(&s).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows, power_sweep(&s).unwrap());

    let null = PowerPoint { beta: 2.0, rho: 0.0, pi0: 1.0 };
    let rows = power_sweep(&study(&[ProcedureId::Bonf], vec![null], 100)).unwrap();
    assert!(rows.iter().all(|r| r.ratio_to_lr.is_none()));
}

#[test]
fn bonferroni_is_less_powerful_than_lr() {
    let grid = [2.0, 3.0].map(|beta| PowerPoint { beta, rho: 0.0, pi0: 0.8 }).to_vec();
    let rows = power_sweep(&study(&[ProcedureId::Bonf, ProcedureId::Lr], grid, 2000)).unwrap();
    for r in rows.iter().filter(|r| r.procedure == "Bonf") {
        let ratio = r.ratio_to_lr.unwrap();
        assert!(ratio.estimate >= 1.0 - 3.0 * ratio.se, "{r:?}");
    }
}
