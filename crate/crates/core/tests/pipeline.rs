use std::path::Path;

use emm_core::analysis::{FitNode, FitTheFitTree, SplitRule};
use emm_core::pipeline::{
    build_report, results_digest, run_pipeline, tree_to_dot, EmmReport, MethodName, PipelineConfig,
};
use emm_core::Error;

const SMALL: &str = "\
seed = 9
# every method, small chains
synthetic.n = 600
synthetic.p = 4
synthetic.tau = modifier(x1, 0.1, 0.3)
grf.num_trees = 60
bart.num_trees = 20
bart.burn_in = 30
bart.draws = 30
bcf.mu_trees = 20
bcf.tau_trees = 10
bcf.burn_in = 30
bcf.draws = 30
";

fn config(text: &str, dir: &Path) -> PipelineConfig {
    PipelineConfig::parse(text, dir).unwrap()
}

#[test]
fn full_run_has_every_block_and_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(SMALL, tmp.path());
    let out = run_pipeline(&cfg).unwrap();
    let r = &out.report;
    assert!(r.succeeded(), "{:?}", r.failures);
    for m in [MethodName::Grf, MethodName::Bart, MethodName::Bcf] {
        let b = r.block(m).unwrap();
        assert_eq!(b.fit_the_fit.root().count, 600);
        assert!(!b.subgroups.is_empty());
    }
    assert!(r.block(MethodName::Grf).unwrap().calibration.is_some());
    assert!(r.block(MethodName::Bart).unwrap().diagnostics.is_some());
    let t = r.traditional.as_ref().unwrap();
    assert_eq!(t.rows.len(), 3);

    let root = tmp.path().join("emm-output");
    for f in [
        "report.txt",
        "report.json",
        "ite.csv",
        "trees/grf_fit.dot",
        "trees/bcf_fit.json",
        "plots/bart_x1.csv",
    ] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let ite = std::fs::read_to_string(root.join("ite.csv")).unwrap();
    assert!(ite.starts_with("unit,grf,bart,bcf,truth\n"));
    assert_eq!(ite.lines().count(), 601);
    let text = std::fs::read_to_string(root.join("report.txt")).unwrap();
    for section in ["[grf]", "[bart]", "[bcf]", "[traditional]", "Cochran's Q"] {
        assert!(text.contains(section), "report.txt lacks {section}");
    }

    let json = std::fs::read_to_string(root.join("report.json")).unwrap();
    assert_eq!(&EmmReport::from_json(&json).unwrap(), r);
}

#[test]
fn reruns_are_identical_and_digest_ignores_output_location() {
    let text = "seed = 4\nsynthetic.n = 300\nsynthetic.p = 3\nmethods = grf, bart, traditional\n\
                grf.num_trees = 40\nbart.num_trees = 10\nbart.burn_in = 10\nbart.draws = 10\n";
    let a = config(text, Path::new("/a"));
    let b = config(&format!("{text}output.dir = elsewhere\n"), Path::new("/b"));
    assert_eq!(results_digest(&a), results_digest(&b));
    let ra = build_report(&a).unwrap().report;
    let rb = build_report(&b).unwrap().report;
    assert_eq!(ra.to_json(), rb.to_json());
    assert_eq!(ra.to_text(), rb.to_text());

    let c = config(&text.replace("seed = 4", "seed = 5"), Path::new("/a"));
    assert_ne!(results_digest(&a), results_digest(&c));
    assert_ne!(build_report(&c).unwrap().report.to_json(), ra.to_json());
}

#[test]
fn parallel_methods_do_not_change_results() {
    let text = "seed = 2\nsynthetic.n = 300\nsynthetic.p = 3\nmethods = grf, bart\n\
                grf.num_trees = 40\nbart.num_trees = 10\nbart.burn_in = 10\nbart.draws = 10\n";
    let serial = config(text, Path::new("."));
    let parallel = config(&format!("{text}parallel_methods = true\n"), Path::new("."));
    assert_eq!(
        build_report(&serial).unwrap().report.to_json(),
        build_report(&parallel).unwrap().report.to_json()
    );
}

#[test]
fn unknown_method_is_a_config_error() {
    let err = PipelineConfig::parse("methods = grf, gbm\n", Path::new(".")).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("gbm"));
    assert!(matches!(
        PipelineConfig::parse("seed = 1\nseed = 2\n", Path::new(".")),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        PipelineConfig::parse("grf.trees = 10\n", Path::new(".")),
        Err(Error::Config(_))
    ));
}

#[test]
fn stage_failure_is_recorded_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,z,a\n");
    for i in 0..12 {
        csv.push_str(&format!("{},{},{}\n", i % 2, (i / 2) % 2, i % 3));
    }
    std::fs::write(tmp.path().join("tiny.csv"), csv).unwrap();
    let cfg = config(
        "data.source = csv\ndata.csv.path = tiny.csv\ndata.csv.outcome = y\ndata.csv.exposure = z\nmethods = grf\n",
        tmp.path(),
    );
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.report.failures.len(), 1);
    assert_eq!(out.report.failures[0].method, MethodName::Grf);
    let text = std::fs::read_to_string(tmp.path().join("emm-output/report.txt")).unwrap();
    assert!(text.contains("[failures]"));
}

#[test]
fn dot_rendering_golden() {
    let node = |id, depth, mean_ite, count, share, split: Option<SplitRule>, children| FitNode {
        id,
        depth,
        mean_ite,
        count,
        share,
        split,
        children,
    };
    let tree = FitTheFitTree {
        nodes: vec![
            node(
                0,
                1,
                0.25,
                100,
                1.0,
                Some(SplitRule {
                    covariate: 0,
                    name: "x1".into(),
                    threshold: 0.5,
                }),
                Some((1, 2)),
            ),
            node(1, 2, 0.1, 50, 0.5, None, None),
            node(2, 2, 0.4, 50, 0.5, None, None),
        ],
        max_depth: 3,
        min_leaf: 5,
    };
    let expected = "\
digraph \"grf fit-the-fit\" {
  node [shape=box, fontname=\"Helvetica\"];
  n0 [label=\"x1 <= 0.5\\nmean ITE 25.0%\\nshare 100.0%\"];
  n1 [label=\"mean ITE 10.0%\\nshare 50.0%\"];
  n2 [label=\"mean ITE 40.0%\\nshare 50.0%\"];
  n0 -> n1 [label=\"yes\"];
  n0 -> n2 [label=\"no\"];
}
";
    assert_eq!(tree_to_dot(&tree, "grf fit-the-fit"), expected);
}
