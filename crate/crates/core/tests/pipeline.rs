use std::fs;

use onperc::config::{ExperimentSpec, Recipe};
use onperc::experiments::{run_experiment, run_experiment_with, run_point};
use onperc::output::{analyze_run, point_dir, write_outcome, RunManifest, CLUSTER_HEADER};
use onperc::Error;

fn small(recipe: Recipe) -> ExperimentSpec {
    let mut spec = ExperimentSpec::preset(recipe);
    spec.sizes = vec![8, 12];
    spec.schedule.thermalization = 30;
    spec.schedule.measurements = 60;
    spec
}

#[test]
fn rerun_from_manifest_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small(Recipe::C6CapVsStrip);
    let first = write_outcome(&run_experiment(&spec).unwrap(), &dir.path().join("one")).unwrap();

    let again = RunManifest::load(&dir.path().join("one/manifest.json")).unwrap();
    assert_eq!(again.spec, spec);
    let second = write_outcome(&run_experiment(&again.spec).unwrap(), &dir.path().join("two")).unwrap();

    let csv = |m: &RunManifest| -> Vec<(String, String)> {
        m.files
            .iter()
            .filter(|f| f.path.ends_with(".csv") || f.path.ends_with(".dat"))
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect()
    };
    assert!(!csv(&first).is_empty());
    assert_eq!(csv(&first), csv(&second));
    for (path, _) in csv(&first) {
        assert_eq!(
            fs::read(dir.path().join("one").join(&path)).unwrap(),
            fs::read(dir.path().join("two").join(&path)).unwrap()
        );
    }
}

#[test]
fn cluster_rows_follow_the_column_contract() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small(Recipe::C6CapVsStrip);
    write_outcome(&run_experiment(&spec).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(point_dir(0)).join("clusters.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CLUSTER_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // a cap and a strip row per measured configuration
    assert_eq!(rows.len(), 2 * 60);
    for r in &rows {
        assert_eq!(r.len(), 7);
        assert!(r[0].parse::<u64>().is_ok());
        assert!(r[3].parse::<f64>().is_ok() && r[4].parse::<f64>().is_ok());
        assert!(["0", "1"].contains(&r[5]) && ["0", "1"].contains(&r[6]));
    }
    // 17 significant digits in scientific form
    let mantissa = rows[0][3].split('e').next().unwrap();
    assert_eq!(mantissa.replace(['.', '-'], "").len(), 17);
}

#[test]
fn one_failing_point_does_not_stop_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(Recipe::FkIdentity);
    spec.betas = vec![0.5];
    spec.sizes = vec![8, 10, 12];
    let out = run_experiment_with(&spec, |s, p| {
        if p.index == 1 {
            Err(Error::Infeasible("injected failure".into()))
        } else {
            run_point(s, p)
        }
    })
    .unwrap();
    assert_eq!(out.records.len(), 2);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].point.size, 10);
    assert!(out.failures[0].error.contains("injected failure"));
    assert!(!out.verdicts_pass());
    let m = write_outcome(&out, dir.path()).unwrap();
    assert_eq!(m.failures.len(), 1);
    assert_eq!(m.chains.len(), 3);
    assert!(!dir.path().join(point_dir(1)).exists());
    assert!(dir.path().join(point_dir(2)).join("observables.csv").exists());
}

#[test]
fn analysis_of_written_files_matches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(Recipe::Custom);
    spec.schedule.measurements = 200;
    let out = run_experiment(&spec).unwrap();
    write_outcome(&out, dir.path()).unwrap();
    let back = analyze_run(dir.path()).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (a, r) in back.iter().zip(&out.records) {
        for name in ["energy", "chi_ising", "chi_phi"] {
            let (x, y) = (&a.estimates[name], &r.estimates[name]);
            assert!((x.mean - y.mean).abs() <= 1e-12 * y.mean.abs().max(1.0), "{name}");
            assert!((x.error - y.error).abs() <= 1e-12 * y.error.abs().max(1.0), "{name}");
        }
        let (t, u) = (a.two_point.as_ref().unwrap(), r.two_point.as_ref().unwrap());
        assert_eq!(t.r, u.r);
        assert_eq!(t.g[0], 1.0);
        assert!(a.two_point_fit.is_some() || a.two_point_fit_error.is_some());
    }
}
