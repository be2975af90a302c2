use sindex::harness::plot::{extract_axes, extract_points, extract_polylines};
use sindex::harness::{emit_plot, render_svg, PlotKind, Table, RESULT_COLUMNS};
use sindex::Error;

fn row(d: usize, n: usize, risk: f64, m: f64) -> Vec<String> {
    RESULT_COLUMNS
        .iter()
        .map(|c| match *c {
            "kind" => "mean_std".into(),
            "d" => d.to_string(),
            "s" => "1".into(),
            "n" => n.to_string(),
            "risk_post" => format!("{risk}"),
            "risk_post_std" => format!("{}", risk / 10.0),
            "m_abs" => format!("{m}"),
            "m_abs_std" => "0.01".into(),
            "status" => "ok".into(),
            _ => "0".into(),
        })
        .collect()
}

/// Risk halves with every doubling of n; three input dimensions.
fn synthetic() -> Table {
    let mut t = Table::new(&RESULT_COLUMNS);
    for (i, d) in [10, 20, 50].into_iter().enumerate() {
        for k in 0..6 {
            let n = 512usize << k;
            t.push(row(d, n, 0.5f64.powi(k) * (1.0 + i as f64), 1.0 - 0.1 * 0.5f64.powi(k)));
        }
    }
    t
}

#[test]
fn decreasing_risk_draws_downward_curves() {
    let svg = render_svg(&synthetic(), PlotKind::RiskVsN).unwrap().unwrap();
    let lines = extract_polylines(&svg);
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert_eq!(l.len(), 6);
        // SVG y grows downward, so decreasing data means increasing pixel y.
        for w in l.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].1 > w[0].1);
        }
    }
    assert_eq!(svg.matches(r#"class="band""#).count(), 3);
}

#[test]
fn points_recover_csv_values() {
    let t = synthetic();
    let svg = render_svg(&t, PlotKind::RiskVsN).unwrap().unwrap();
    let (ax, ay) = extract_axes(&svg).unwrap();
    assert!(ax.log && ay.log);
    let pts = extract_points(&svg);
    assert_eq!(pts.len(), t.len());
    for (cx, cy, sx, sy) in pts {
        let (x, y): (f64, f64) = (sx.parse().unwrap(), sy.parse().unwrap());
        assert!((ax.from_px(cx) / x - 1.0).abs() < 1e-2);
        assert!((ay.from_px(cy) / y - 1.0).abs() < 1e-2);
        assert!(t.rows.iter().any(|r| r[t.column("n").unwrap()] == sx && r[t.column("risk_post").unwrap()] == sy));
    }
}

#[test]
fn m_plot_rises_with_n() {
    let svg = render_svg(&synthetic(), PlotKind::MVsN).unwrap().unwrap();
    for l in extract_polylines(&svg) {
        for w in l.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
    }
}

#[test]
fn empty_table_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let t = Table::new(&RESULT_COLUMNS);
    assert!(emit_plot(&t, PlotKind::RiskVsN, dir.path()).unwrap().is_none());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    let p = emit_plot(&synthetic(), PlotKind::RiskVsN, dir.path()).unwrap().unwrap();
    assert!(std::fs::read_to_string(p).unwrap().starts_with("<svg"));
}

#[test]
fn missing_columns_are_named() {
    let t = Table::new(&["n", "risk_post"]);
    match render_svg(&t, PlotKind::RiskVsN) {
        Err(Error::MissingColumns(cols)) => {
            assert_eq!(cols, "d, s");
        }
        other => panic!("expected missing columns, got {other:?}"),
    }
}
