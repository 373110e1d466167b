use ctost::ingest::*;
use ctost::statdist::rng::stream_rng;
use ctost::univariate::tost_decide;
use ctost::{EquivalenceSpec, Error, DEFAULT_C0};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn parse(csv: &str, scale: Scale) -> PairedDataset {
    PairedDataset::read_csv(csv.as_bytes(), scale).unwrap()
}

#[test]
fn raw_scale_uses_log_differences() {
    let d = parse("subject,dimension,reference,test\n1,auc,10,11\n2,auc,20,25\n3,auc,8,8\n", Scale::Raw);
    let s = summarize(&d).unwrap();
    let diffs = [1.1f64.ln(), 1.25f64.ln(), 0.0];
    let mean = diffs.iter().sum::<f64>() / 3.0;
    let sd = (diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let u = s.univariate().unwrap();
    assert!((u.theta_hat - mean).abs() < 1e-15);
    assert!((u.sigma1_hat - sd / 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(u.nu2, 2);
}

#[test]
fn raw_scale_rejects_nonpositive() {
    let d = parse("subject,dimension,reference,test\n1,a,0,1\n2,a,1,2\n", Scale::Raw);
    assert!(matches!(summarize(&d), Err(Error::Domain(_))));
}

#[test]
fn bad_header_is_rejected() {
    assert!(PairedDataset::read_csv("id,dim,r,t\n".as_bytes(), Scale::Log).is_err());
}

#[test]
fn listwise_deletion_warns() {
    let csv = "subject,dimension,reference,test\n\
        1,a,0,0.1\n1,b,0,0.2\n\
        2,a,0,0.3\n2,b,0,0.1\n\
        3,a,0,0.2\n3,b,NA,0.4\n\
        4,a,0,0.5\n4,b,0,0.3\n";
    let s = summarize(&parse(csv, Scale::Log)).unwrap();
    assert_eq!(s.n, 3);
    assert_eq!(s.summary.nu2, 2);
    assert_eq!(s.dropped_subjects, vec!["3".to_string()]);
    assert!(s.warnings.iter().any(|w| w.contains("listwise")));
    assert_eq!(s.dimensions, vec!["a", "b"]);
}

#[test]
fn perfect_correlation_is_repaired_with_warning() {
    let mut csv = String::from("subject,dimension,reference,test\n");
    for (i, d) in [0.1, 0.3, 0.2, 0.5].iter().enumerate() {
        csv += &format!("{i},a,0,{d}\n{i},b,0,{d}\n");
    }
    let s = summarize(&parse(&csv, Scale::Log)).unwrap();
    assert!(s.warnings.iter().any(|w| w.contains("positive definite")));
    assert!(s.summary.correlation_hat.clone().cholesky().is_some());
}

#[test]
fn too_few_pairs() {
    let d = parse("subject,dimension,reference,test\n1,a,0,0.1\n", Scale::Log);
    assert!(matches!(summarize(&d), Err(Error::DegenerateData(_))));
}

#[test]
fn subject_order_does_not_matter() {
    let rows = ["1,a,0,0.12", "1,b,0,0.3", "2,a,0,-0.05", "2,b,0,0.1", "3,a,0,0.2", "3,b,0,0.25", "4,a,0,0.01", "4,b,0,-0.2"];
    let fwd = format!("subject,dimension,reference,test\n{}\n", rows.join("\n"));
    let rev_rows: Vec<&str> = rows.chunks(2).rev().flatten().copied().collect();
    let rev = format!("subject,dimension,reference,test\n{}\n", rev_rows.join("\n"));
    let a = summarize(&parse(&fwd, Scale::Log)).unwrap();
    let b = summarize(&parse(&rev, Scale::Log)).unwrap();
    assert_eq!(a.summary, b.summary);
}

#[test]
fn summary_json_round_trip() {
    let s = load_case_study();
    let j = SummaryJson::from_summary(&s);
    let text = serde_json::to_string(&j).unwrap();
    let (back, w) = read_summary_json(text.as_bytes()).unwrap();
    assert_eq!(back, s);
    assert!(w.is_empty());

    let (_, w) = read_summary_json(r#"{"theta_hat":[0.1,0.2],"sigma1_hat":[0.1,0.1],"nu2":9}"#.as_bytes()).unwrap();
    assert_eq!(w.len(), 1);
    assert!(read_summary_json(r#"{"theta_hat":[0.1],"sigma1_hat":[0.1],"nu2":9,"scale":"raw"}"#.as_bytes()).is_err());
}

#[test]
fn case_study_bundle() {
    let s = load_case_study();
    assert_eq!(s.dim(), 4);
    assert_eq!(s.nu2, 11);
    assert_eq!(s.theta_hat, vec![0.0976, 0.0726, 0.0022, 0.0733]);
    assert_eq!(s.sigma1_hat, vec![0.3305, 0.1708, 0.2233, 0.1853]);
    assert_eq!(s.correlation_hat, nalgebra::DMatrix::identity(4, 4));
}

#[test]
fn simulated_paired_data_gives_conservative_tost() {
    // n = 12 subjects with true log-ratio c₀: TOST should reject less than α₀.
    let n = 12;
    let reps = 20_000;
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut rng = stream_rng(21, 0);
    let mut rejections = 0;
    let spec = EquivalenceSpec::default();
    for _ in 0..reps {
        let rows = (0..n)
            .map(|i| {
                let reference: f64 = rng.random_range(50.0..150.0);
                let test = reference * (DEFAULT_C0 + noise.sample(&mut rng)).exp();
                PairedRow { subject: i.to_string(), dimension: "auc".into(), reference: Some(reference), test: Some(test) }
            })
            .collect();
        let s = summarize(&PairedDataset { rows, scale: Scale::Raw }).unwrap().univariate().unwrap();
        if tost_decide(&s, &spec).unwrap().equivalent {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    let se = (0.05f64 * 0.95 / reps as f64).sqrt();
    assert!(rate < 0.05 + 3.0 * se, "{rate}");
}
