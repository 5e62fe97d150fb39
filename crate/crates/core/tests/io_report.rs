use std::path::Path;

use rmsim::datagen::{Condition, Dataset};
use rmsim::io_report::{
    read_dataset, read_results, render_figure, results_table, write_dataset, write_results,
    DataFormat, ResultRow, RESULT_COLUMNS,
};
use rmsim::mlm::{CsMode, DdfMethod};
use rmsim::simengine::{full_grid, run_grid, Bradley, Method, RunConfig};
use rmsim::Error;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn small_results() -> Vec<ResultRow> {
    let cfg = RunConfig {
        grid: full_grid(&Condition::ALL, &[10, 14, 18], &[3, 4]),
        replications: 60,
        alpha: 0.05,
        master_seed: 5,
        methods: Method::ALL.to_vec(),
        ddf: DdfMethod::Satterthwaite,
        cs_mode: CsMode::Unconstrained,
        workers: Some(2),
    };
    results_table(&run_grid(&cfg).unwrap(), &cfg)
}

#[test]
fn wide_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = Dataset::from_rows(&[
        vec![0.1, -2.5e-7, 3.0],
        vec![1.0 / 3.0, 7.25, -1e10],
        vec![0.0, 2.0, 4.0],
    ])
    .unwrap();
    let p = dir.path().join("d.csv");
    write_dataset(&d, &p).unwrap();
    let back = read_dataset(&p, DataFormat::Wide).unwrap();
    assert_eq!(back.values(), d.values());
    assert_eq!((back.n(), back.m()), (3, 3));
}

#[test]
fn long_format_matches_wide_in_any_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let wide = write(dir.path(), "w.csv", "id,a,b,c\ns1,1,2,3\ns2,4,5,6.5\n");
    let long = write(
        dir.path(),
        "l.csv",
        "subject,occasion,value\ns2,3,6.5\ns1,2,2\ns1,1,1\ns2,1,4\ns1,3,3\ns2,2,5\n",
    );
    let a = read_dataset(&wide, DataFormat::Wide).unwrap();
    let b = read_dataset(&long, DataFormat::Long).unwrap();
    assert_eq!((b.n(), b.m()), (2, 3));
    // long rows keep first-appearance subject order
    assert_eq!(b.row(0), a.row(1));
    assert_eq!(b.row(1), a.row(0));
}

#[test]
fn malformed_inputs_name_the_offending_row() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "missing.csv",
            "subject,t1,t2\n1,0.5,\n2,1,2\n",
            DataFormat::Wide,
            "row 2",
        ),
        (
            "text.csv",
            "subject,t1,t2\n1,0.5,1\n2,abc,2\n",
            DataFormat::Wide,
            "row 3",
        ),
        (
            "ragged.csv",
            "subject,t1,t2\n1,0.5,1\n2,1\n",
            DataFormat::Wide,
            "row 3",
        ),
        (
            "gap.csv",
            "subject,occasion,value\na,1,1\na,2,2\nb,1,3\n",
            DataFormat::Long,
            "subject b",
        ),
        (
            "dup.csv",
            "subject,occasion,value\na,1,1\na,1,2\nb,1,3\n",
            DataFormat::Long,
            "row 3",
        ),
        (
            "occ.csv",
            "subject,occasion,value\na,0,1\n",
            DataFormat::Long,
            "row 2",
        ),
    ];
    for (name, body, format, needle) in cases {
        let p = write(dir.path(), name, body);
        let e = read_dataset(&p, format).unwrap_err();
        assert!(
            matches!(e, Error::Validation { .. } | Error::Parse { .. }),
            "{name}: {e:?}"
        );
        assert!(e.to_string().contains(needle), "{name}: {e}");
    }
    let e = read_dataset(&dir.path().join("absent.csv"), DataFormat::Wide).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
}

#[test]
fn results_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows = small_results();
    assert_eq!(rows.len(), 2 * 2 * 3 * 5);
    let p = dir.path().join("r.csv");
    write_results(&rows, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));
    let back = read_results(&p).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(
            (a.condition, a.m, a.n, a.method),
            (b.condition, b.m, b.n, b.method)
        );
        assert!((a.rejection_rate - b.rejection_rate).abs() < 1e-6);
        assert_eq!(a.bradley, b.bradley);
    }
    assert!(write_results(&[], &dir.path().join("empty.csv")).is_err());
}

#[test]
fn figures_are_valid_svg_with_one_legend_entry_per_method() {
    let rows = small_results();
    for condition in Condition::ALL {
        for m in [3, 4] {
            let svg = render_figure(&rows, condition, m).unwrap();
            let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
            assert_eq!(doc.root_element().tag_name().name(), "svg");
            let legend: Vec<&str> = doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("legend-label"))
                .filter_map(|n| n.text())
                .collect();
            for method in Method::ALL {
                assert_eq!(
                    legend.iter().filter(|&&t| t == method.label()).count(),
                    1,
                    "{method}"
                );
                let series = doc
                    .descendants()
                    .filter(|n| {
                        n.attribute("class") == Some("series")
                            && n.attribute("data-method") == Some(method.label())
                    })
                    .count();
                assert_eq!(series, 1);
            }
            assert_eq!(
                doc.descendants()
                    .filter(|n| n.attribute("class") == Some("bradley-band"))
                    .count(),
                1
            );
            assert_eq!(svg, render_figure(&rows, condition, m).unwrap());
        }
    }
}

#[test]
fn figure_needs_two_sample_sizes_per_method() {
    let rows: Vec<ResultRow> = small_results()
        .into_iter()
        .filter(|r| r.n == 10 || r.method != Method::MlmUn)
        .collect();
    let e = render_figure(&rows, Condition::Spherical, 3).unwrap_err();
    assert!(matches!(e, Error::MissingData(_)), "{e:?}");
    assert!(render_figure(&small_results(), Condition::Spherical, 7).is_err());
}

#[test]
fn bradley_labels_survive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = small_results();
    rows[0].rejection_rate = 0.2;
    rows[0].bradley = Some(Bradley::Liberal);
    rows[1].rejection_rate = 0.0;
    rows[1].bradley = Some(Bradley::Conservative);
    let p = dir.path().join("r.csv");
    write_results(&rows, &p).unwrap();
    let back = read_results(&p).unwrap();
    assert_eq!(back[0].bradley, Some(Bradley::Liberal));
    assert_eq!(back[1].bradley, Some(Bradley::Conservative));
}
