//! Listmode I/O, CSV plot tables and SVG quick-looks.
//!
//! Every table has the columns `angle_deg,value,sigma`. Numbers are written
//! with fixed precision so that files are deterministic given a summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::s_curve_shape;
use crate::apparatus::{ClassTag, EventRecord};
use crate::run::{analyze_classes, ClassHistograms, ClassSummary};
use crate::Error;

pub const LISTMODE_COLUMNS: [&str; 9] = [
    "class",
    "counter1",
    "counter2",
    "e_gagg",
    "e_plastic1",
    "e_plastic2",
    "e_nai1",
    "e_nai2",
    "true_delta_phi_deg",
];

/// One listmode row; energies in keV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListmodeRow {
    pub class: String,
    pub counter1: usize,
    pub counter2: usize,
    pub e_gagg: f64,
    pub e_plastic1: f64,
    pub e_plastic2: f64,
    pub e_nai1: f64,
    pub e_nai2: f64,
    /// (φ1 − φ2) mod 360°.
    pub true_delta_phi_deg: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{}: {other:?}", path.display())),
    }
}

fn create_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Writes accepted events, one row each, in the given order.
pub fn write_listmode<'a>(
    path: &Path,
    events: impl IntoIterator<Item = &'a EventRecord>,
) -> Result<(), Error> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(LISTMODE_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    for e in events {
        let dphi = (e.kin.phi1 - e.kin.phi2).to_degrees().rem_euclid(360.0);
        let record = [
            e.class_tag.to_string(),
            e.counter1.to_string(),
            e.counter2.to_string(),
            format!("{:.3}", e.e_gagg),
            format!("{:.3}", e.e_plastic1),
            format!("{:.3}", e.e_plastic2),
            format!("{:.3}", e.e_nai1),
            format!("{:.3}", e.e_nai2),
            format!("{:.3}", dphi),
        ];
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_listmode(path: &Path) -> Result<Vec<ListmodeRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(LISTMODE_COLUMNS) {
        return Err(Error::Invalid(format!(
            "{}: expected columns {}",
            path.display(),
            LISTMODE_COLUMNS.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Invalid(format!("{} row {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

/// Class histograms rebuilt from listmode rows.
pub fn histograms_from_listmode(
    rows: &[ListmodeRow],
    n_bins: usize,
) -> Result<ClassHistograms, Error> {
    if n_bins == 0 || !n_bins.is_multiple_of(4) {
        return Err(Error::Invalid(format!(
            "counter count {n_bins} must be a positive multiple of 4"
        )));
    }
    let mut h = ClassHistograms::new(n_bins);
    for (i, row) in rows.iter().enumerate() {
        let tag: ClassTag = row
            .class
            .parse()
            .map_err(|e| Error::Invalid(format!("row {}: {e}", i + 2)))?;
        if row.counter1 >= n_bins || row.counter2 >= n_bins {
            return Err(Error::Invalid(format!(
                "row {}: counter index outside 0..{n_bins}",
                i + 2
            )));
        }
        h.add(tag, row.counter1, row.counter2);
    }
    Ok(h)
}

/// Result of re-analyzing stored events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListmodeSummary {
    pub source: String,
    pub accepted: u64,
    pub class_counts: BTreeMap<String, u64>,
    pub classes: Vec<ClassSummary>,
}

pub fn analyze_listmode(path: &Path, n_bins: usize) -> Result<ListmodeSummary, Error> {
    let rows = read_listmode(path)?;
    let hists = histograms_from_listmode(&rows, n_bins)?;
    Ok(ListmodeSummary {
        source: path.display().to_string(),
        accepted: hists.accepted(),
        class_counts: hists.class_counts(),
        classes: analyze_classes(&hists, |_| "listmode".to_string()),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("summaries always serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

type Row = (f64, f64, f64);

fn write_table(path: &Path, rows: &[Row]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["angle_deg", "value", "sigma"])
        .map_err(|e| csv_error(path, e))?;
    for (x, y, s) in rows {
        w.write_record([format!("{x:.3}"), format!("{y:.6}"), format!("{s:.6}")])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Minimal scatter-with-errors plus curve plot.
pub fn svg_plot(
    title: &str,
    y_label: &str,
    points: &[Row],
    curve: &[(f64, f64)],
    x_max: f64,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let ys = points
        .iter()
        .flat_map(|(_, y, s)| [y - s, y + s])
        .chain(curve.iter().map(|c| c.1))
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let sx = |x: f64| M + (W - 2.0 * M) * x / x_max;
    let sy = |y: f64| H - M - (H - 2.0 * M) * (y - lo) / (hi - lo);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <rect x=\"{M}\" y=\"{M}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">angle (deg)</text>\n\
         <text x=\"12\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 12 {:.1})\">{y_label}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>\n",
        W / 2.0,
        W - 2.0 * M,
        H - 2.0 * M,
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0,
        M - 4.0,
        M + 4.0,
        M - 4.0,
        H - M,
    );
    if !curve.is_empty() {
        let path: Vec<String> = curve
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        );
    }
    for (x, y, s) in points {
        svg += &format!(
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"black\"/>\n\
             <circle cx=\"{0:.2}\" cy=\"{3:.2}\" r=\"3\" fill=\"black\"/>\n",
            sx(*x),
            sy(y - s),
            sy(y + s),
            sy(*y)
        );
    }
    svg += "</svg>\n";
    svg
}

/// Writes every table and quick-look for one class. Empty classes get
/// header-only tables and a warning.
pub fn write_class_plot_data(dir: &Path, class: &ClassSummary) -> Result<Vec<PathBuf>, Error> {
    let name = class.selection.as_str();
    let hist = &class.histogram;
    let empty = hist.total() == 0;
    if empty {
        log::warn!("class {name} has no events; writing header-only tables");
    }
    let mut written = Vec::new();
    let mut table = |file: String, rows: &[Row]| -> Result<(), Error> {
        let path = dir.join(file);
        write_table(&path, rows)?;
        written.push(path);
        Ok(())
    };

    let hist_rows: Vec<Row> = if empty {
        Vec::new()
    } else {
        hist.counts()
            .iter()
            .enumerate()
            .map(|(k, &c)| (hist.bin_angle_deg(k), c as f64, (c as f64).sqrt()))
            .collect()
    };
    table(format!("hist_{name}.csv"), &hist_rows)?;
    let folded: Vec<Row> = if empty {
        Vec::new()
    } else {
        hist.folded()
            .into_iter()
            .map(|(x, c)| (x, c as f64, (c as f64).sqrt()))
            .collect()
    };
    table(format!("hist_{name}_folded.csv"), &folded)?;

    let fit = class.fit.as_ref().map(|f| f.fit_result());
    let fit_rows: Vec<Row> = fit
        .as_ref()
        .map(|f| {
            (0..360)
                .map(|d| {
                    let (y, s) = f.curve(d as f64);
                    (d as f64, y, s)
                })
                .collect()
        })
        .unwrap_or_default();
    table(format!("fit_{name}.csv"), &fit_rows)?;

    let corr = &class.correlations;
    let e_rows: Vec<Row> = corr
        .e_values
        .iter()
        .map(|p| (p.angle_deg, p.value, p.sigma))
        .collect();
    table(format!("e_{name}.csv"), &e_rows)?;
    let s_rows: Vec<Row> = corr
        .s_values
        .iter()
        .map(|p| (p.angle_deg, p.value, p.sigma))
        .collect();
    table(format!("s_{name}.csv"), &s_rows)?;
    let s_curve: Vec<Row> = corr
        .s_fit
        .map(|f| {
            (0..180)
                .map(|d| {
                    let g = s_curve_shape(d as f64);
                    (d as f64, f.p0 * g, f.sigma_p0 * g.abs())
                })
                .collect()
        })
        .unwrap_or_default();
    table(format!("sfit_{name}.csv"), &s_curve)?;

    let curve2 = |rows: &[Row]| rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>();
    let quick_looks = [
        (
            format!("hist_{name}.svg"),
            svg_plot(
                &format!("coincidences, class {name}"),
                "counts",
                &hist_rows,
                &curve2(&fit_rows),
                360.0,
            ),
        ),
        (
            format!("s_{name}.svg"),
            svg_plot(
                &format!("S-function, class {name}"),
                "S",
                &s_rows,
                &curve2(&s_curve),
                180.0,
            ),
        ),
    ];
    for (file, svg) in quick_looks {
        let path = dir.join(file);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes plot data for every class into `dir`.
pub fn emit_plot_data(dir: &Path, classes: &[ClassSummary]) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut all = Vec::new();
    for class in classes {
        all.extend(write_class_plot_data(dir, class)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, RunConfig};
    use crate::run::run;

    fn line_count(p: &Path) -> usize {
        fs::read_to_string(p).unwrap().lines().count()
    }

    #[test]
    fn entangled_tables_have_expected_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            n_events: 50_000,
            seed: 3,
            ..RunConfig::from_preset(Preset::EntangledBaseline)
        };
        let out = run(&cfg, false).unwrap();
        emit_plot_data(dir.path(), &out.summary.classes).unwrap();
        let d = dir.path();
        assert_eq!(line_count(&d.join("hist_entangled_candidate.csv")), 17);
        assert_eq!(
            line_count(&d.join("hist_entangled_candidate_folded.csv")),
            10
        );
        assert_eq!(line_count(&d.join("fit_entangled_candidate.csv")), 361);
        assert_eq!(line_count(&d.join("e_entangled_candidate.csv")), 17);
        let s = fs::read_to_string(d.join("s_entangled_candidate.csv")).unwrap();
        let angles: Vec<&str> = s
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        let expect: Vec<String> = (0..8).map(|k| format!("{:.3}", k as f64 * 22.5)).collect();
        assert_eq!(angles, expect);
        // Empty class: header only.
        assert_eq!(line_count(&d.join("hist_d.csv")), 1);
        assert_eq!(line_count(&d.join("fit_d.csv")), 1);
        assert!(fs::read_to_string(d.join("hist_entangled_candidate.svg"))
            .unwrap()
            .starts_with("<svg"));

        // Deterministic bytes.
        let again = tempfile::tempdir().unwrap();
        emit_plot_data(again.path(), &out.summary.classes).unwrap();
        for f in [
            "hist_entangled_candidate.csv",
            "fit_entangled_candidate.csv",
            "s_entangled_candidate.svg",
        ] {
            assert_eq!(
                fs::read(d.join(f)).unwrap(),
                fs::read(again.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn listmode_round_trip_reproduces_histograms() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            n_events: 100_000,
            seed: 11,
            ..RunConfig::from_preset(Preset::DecoherentAll)
        };
        let out = run(&cfg, true).unwrap();
        let path = dir.path().join("events.csv");
        write_listmode(&path, out.events.as_ref().unwrap()).unwrap();
        let rows = read_listmode(&path).unwrap();
        assert_eq!(rows.len() as u64, out.summary.accepted);
        let rebuilt = histograms_from_listmode(&rows, 16).unwrap();
        assert_eq!(rebuilt.by_tag, out.histograms.by_tag);
        assert_eq!(rebuilt.rejected, 0);
        let summary = analyze_listmode(&path, 16).unwrap();
        for (a, b) in summary.classes.iter().zip(&out.summary.classes) {
            assert_eq!(a.histogram, b.histogram);
            assert_eq!(a.fit.as_ref().map(|f| f.mu), b.fit.as_ref().map(|f| f.mu));
        }
    }

    #[test]
    fn listmode_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "class,counter1\nx,1\n").unwrap();
        assert!(matches!(read_listmode(&path), Err(Error::Invalid(_))));
        let missing = dir.path().join("missing.csv");
        assert!(matches!(read_listmode(&missing), Err(Error::Io { .. })));
    }
}
