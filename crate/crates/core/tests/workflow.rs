use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsimmd::cluster::{assignment_to_csv, cut, Dendrogram, Linkage};
use wsimmd::dataio::{load_manifest, read_manifest, write_manifest, SynthGroup, SynthSpec};
use wsimmd::mmd::{read_distance, median_inverse_gamma};
use wsimmd::workflow::{
    cmd_classify, cmd_cluster, cmd_kernel, cmd_survival, cmd_synth, ClassifyConfig, GammaMode, KernelSettings, MatrixSource,
    SurvivalConfig,
};
use wsimmd::Error;

fn spec(seed: u64, n_per: usize, gap: f64) -> SynthSpec {
    SynthSpec {
        dim: 6,
        patches_per_set: (10, 25),
        groups: vec![
            SynthGroup { n_sets: n_per, mean: vec![0.0], scale: vec![1.0], label: Some(0), hazard: Some(0.3) },
            SynthGroup { n_sets: n_per, mean: vec![gap], scale: vec![1.0], label: Some(1), hazard: Some(0.05) },
        ],
        seed,
        censor_horizon: 10.0,
        censoring_rate: Some(0.02),
    }
}

fn synth(dir: &Path, s: &SynthSpec) -> PathBuf {
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(s).unwrap()).unwrap();
    cmd_synth(&spec_path, None, &dir.join("data")).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn write_split(dir: &Path, ids: &[String], seed: u64) -> (PathBuf, PathBuf) {
    let mut ids = ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut_at = ids.len() * 7 / 10;
    let (train, test) = (dir.join("train.txt"), dir.join("test.txt"));
    std::fs::write(&train, ids[..cut_at].join("\n")).unwrap();
    std::fs::write(&test, ids[cut_at..].join("\n")).unwrap();
    (train, test)
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = spec(7, 10, 2.0);
    let m = synth(a.path(), &s);
    synth(b.path(), &s);
    assert_eq!(tree_bytes(&a.path().join("data")), tree_bytes(&b.path().join("data")));
    let ds = load_manifest(&m).unwrap();
    assert_eq!(ds.sets.len(), 20);
    assert_eq!(ds.manifest.labels().unwrap().iter().filter(|&&l| l == 1).count(), 10);
}

#[test]
fn kernel_outputs_and_median_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(1, 2, 2.0));
    let mut settings = KernelSettings::classification();
    settings.gamma_mode = GammaMode::Median;
    settings.sigma = 1.0;
    let meta = cmd_kernel(&m, &settings, &dir.path().join("k1")).unwrap();
    cmd_kernel(&m, &settings, &dir.path().join("k2")).unwrap();
    assert_eq!(tree_bytes(&dir.path().join("k1")), tree_bytes(&dir.path().join("k2")));
    let d = read_distance(dir.path().join("k1/distance.mmdk")).unwrap();
    assert_eq!(meta.gamma, Some(median_inverse_gamma(&d).unwrap()));
    assert_eq!(d.len(), 4);
    let k = wsimmd::mmd::read_kernel(dir.path().join("k1/kernel.csv"), meta.gamma).unwrap();
    for i in 0..4 {
        assert_eq!(d.get(i, i), 0.0);
        assert_eq!(k.get(i, i), 1.0);
    }
}

#[test]
fn cluster_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(3, 5, 4.0));
    let mut settings = KernelSettings::classification();
    settings.sigma = 1.0;
    let out = dir.path().join("c");
    let res = cmd_cluster(&MatrixSource::Manifest(m.clone(), settings), Linkage::Average, 2, &out).unwrap();
    assert_eq!(res.assignment, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    let json = std::fs::read_to_string(out.join("dendrogram.json")).unwrap();
    let den = Dendrogram::from_json(&json).unwrap();
    let csv = assignment_to_csv(&den.ids, &cut(&den, 2).unwrap());
    assert_eq!(csv, std::fs::read_to_string(out.join("clusters.csv")).unwrap());
    let singletons = cmd_cluster(&MatrixSource::Manifest(m, settings), Linkage::Single, 10, &dir.path().join("c10")).unwrap();
    assert_eq!(singletons.assignment, (0..10).collect::<Vec<_>>());
}

#[test]
fn classify_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(5, 15, 1.5));
    let ids = read_manifest(&m).unwrap().ids();
    let (train, test) = write_split(dir.path(), &ids, 1);
    let src = MatrixSource::Manifest(m, KernelSettings::classification());
    let mut cfg = ClassifyConfig::new(src, train, test, 42, dir.path().join("r1"));
    cfg.bootstrap_runs = 200;
    let a = cmd_classify(&cfg).unwrap();
    cfg.out = dir.path().join("r2");
    cmd_classify(&cfg).unwrap();
    assert_eq!(tree_bytes(&dir.path().join("r1")), tree_bytes(&dir.path().join("r2")));
    assert!(a.report.estimate >= 0.9);
    assert!(a.report.ci_lower.unwrap() <= a.report.ci_upper.unwrap());
}

#[test]
fn classify_null_labels_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(9, 30, 1.5));
    let kdir = dir.path().join("k");
    cmd_kernel(&m, &KernelSettings::classification(), &kdir).unwrap();
    let mut manifest = read_manifest(&m).unwrap();
    let ids = manifest.ids();
    let mut aucs = Vec::new();
    for seed in 0..10u64 {
        let mut labels: Vec<u8> = manifest.entries.iter().map(|e| e.label.unwrap()).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (e, l) in manifest.entries.iter_mut().zip(&labels) {
            e.label = Some(*l);
        }
        let lab = dir.path().join("labels.csv");
        write_manifest(&manifest, &lab).unwrap();
        let (train, test) = write_split(dir.path(), &ids, 100 + seed);
        let mut cfg = ClassifyConfig::new(MatrixSource::File(kdir.join("kernel.mmdk")), train, test, seed, dir.path().join("o"));
        cfg.labels = Some(lab);
        cfg.bootstrap_runs = 50;
        match cmd_classify(&cfg) {
            Ok(o) => aucs.push(o.report.estimate),
            Err(Error::SingleClass) => {}
            Err(e) => panic!("{e}"),
        }
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.15, "mean null AUC {mean}");
}

#[test]
fn classify_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(5, 4, 1.5));
    let src = MatrixSource::Manifest(m, KernelSettings::classification());
    let train = dir.path().join("tr.txt");
    let test = dir.path().join("te.txt");
    std::fs::write(&train, "g0_s0\ng0_s1\n").unwrap();
    std::fs::write(&test, "g1_s0\ng0_s2\n").unwrap();
    let cfg = ClassifyConfig::new(src.clone(), train.clone(), test.clone(), 1, dir.path().join("o"));
    assert!(matches!(cmd_classify(&cfg), Err(Error::SingleClass)));
    std::fs::write(&train, "g0_s0\nnope\n").unwrap();
    assert!(matches!(cmd_classify(&cfg), Err(Error::UnknownId(_))));
}

#[test]
fn survival_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &spec(2, 12, 2.0));
    let mut cfg = SurvivalConfig::new(MatrixSource::Manifest(m.clone(), KernelSettings::survival()), 4, dir.path().join("s1"));
    cfg.runs = 1;
    let one = cmd_survival(&cfg).unwrap();
    assert_eq!(one.report.p_value.unwrap(), (2.0 * one.runs[0].p_value).min(1.0));
    assert!(one.report.std_dev.is_none());

    cfg.runs = 6;
    let a = cmd_survival(&cfg).unwrap();
    cfg.out = dir.path().join("s2");
    cmd_survival(&cfg).unwrap();
    assert_eq!(tree_bytes(&dir.path().join("s1")), tree_bytes(&dir.path().join("s2")));
    assert_eq!(a.report.per_run.len(), 6);

    let mut manifest = read_manifest(&m).unwrap();
    for e in &mut manifest.entries {
        e.event = Some(0);
    }
    let outcomes = dir.path().join("censored.csv");
    write_manifest(&manifest, &outcomes).unwrap();
    cfg.outcomes = Some(outcomes);
    let err = cmd_survival(&cfg).unwrap_err();
    assert!(matches!(err, Error::NoComparablePairs(_)));
    assert!(err.to_string().contains("comparable pairs"));
}
